// Training a linear competing-risks MTLR model on a synthetic cohort and
// comparing it with the true hazards.

use crmtlr::metrics::RiskScores;
use crmtlr::synthgen::{generate, oracle_cindex, reference_spec};
use crmtlr::trainer::train_bundle;
use crmtlr::{build_grid, cause_specific_cindex, Architecture, FeatureEncoding, Outcome, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = reference_spec();
    let train = generate(&spec, 2000, 11)?;
    let valid = generate(&spec, 500, 12)?;
    let test = generate(&spec, 1000, 13)?;

    let grid = build_grid(&train, None)?;
    println!("K = {} intervals", grid.n_intervals());

    let config = TrainConfig {
        learning_rate: 1e-2,
        c1_head: 1e-3,
        max_epochs: 500,
        patience: 50,
        ..Default::default()
    };
    let encoding = FeatureEncoding::passthrough(spec.dim(), spec.n_events());
    let (bundle, history) = train_bundle(grid, encoding, &train, &valid, Architecture::Linear, &config)?;
    for log in history.iter().step_by(50) {
        println!("epoch {:>4}  train {:.4}  valid {:.4}", log.epoch, log.train_loss, log.valid_loss);
    }
    println!("best epoch {} of {}", bundle.meta.best_epoch, bundle.meta.final_epoch);

    let curves = test
        .iter()
        .map(|r| Ok(bundle.predict(&r.features)?.cif()))
        .collect::<crmtlr::Result<Vec<_>>>()?;
    let risk = RiskScores::from_curves(&curves);
    let outcomes: Vec<Outcome> = test.iter().map(|r| Outcome::new(r.time, r.event)).collect();
    for e in 1..=2 {
        println!(
            "event {e}: C-index {:.3} (true hazards {:.3})",
            cause_specific_cindex(risk.event(e), &outcomes, e)?,
            oracle_cindex(&spec, &test, e)?
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
