// A neural encoder in front of the MTLR head, fed with fused clinical and
// image features, on a cohort whose hazards depend on a product term.

use crmtlr::metrics::RiskScores;
use crmtlr::synthgen::{generate, interaction_spec};
use crmtlr::trainer::{train_bundle, BatchSize};
use crmtlr::{build_grid, cause_specific_cindex, Architecture, FeatureEncoding, FusedInput, Outcome, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = interaction_spec();
    let train = generate(&spec, 2000, 21)?;
    let valid = generate(&spec, 500, 22)?;
    let test = generate(&spec, 1000, 23)?;
    let grid = build_grid(&train, None)?;
    let outcomes: Vec<Outcome> = test.iter().map(|r| Outcome::new(r.time, r.event)).collect();

    let runs = [
        (
            "linear",
            Architecture::Linear,
            TrainConfig {
                learning_rate: 1e-2,
                c1_head: 1e-3,
                max_epochs: 500,
                patience: 50,
                ..Default::default()
            },
        ),
        (
            "deep 32x3",
            Architecture::Deep { hidden: vec![32; 3] },
            TrainConfig {
                learning_rate: 1e-3,
                c1_head: 1e-3,
                c2_encoder: 1e-4,
                c_smooth: 0.0,
                max_epochs: 100,
                patience: 10,
                batch_size: BatchSize::Fixed(64),
                seed: 5,
            },
        ),
    ];
    for (name, arch, config) in runs {
        let encoding = FeatureEncoding::passthrough(spec.dim(), spec.n_events());
        let (bundle, _) = train_bundle(grid.clone(), encoding, &train, &valid, arch, &config)?;
        let curves = test
            .iter()
            .map(|r| {
                // first three columns play the clinical role, the rest the image embedding
                let input = FusedInput::new(r.features[..3].to_vec(), Some(r.features[3..].to_vec()));
                Ok(bundle.model.predict(&input.fused())?.cif())
            })
            .collect::<crmtlr::Result<Vec<_>>>()?;
        let risk = RiskScores::from_curves(&curves);
        println!(
            "{name:<10} C-index {:.3} / {:.3}",
            cause_specific_cindex(risk.event(1), &outcomes, 1)?,
            cause_specific_cindex(risk.event(2), &outcomes, 2)?
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
