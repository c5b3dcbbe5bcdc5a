// Cause-specific C-index and horizon AUROC, directly and through an
// evaluation report.

use crmtlr::metrics::EvaluationReport;
use crmtlr::synthgen::{generate, reference_spec};
use crmtlr::trainer::train_bundle;
use crmtlr::{
    build_grid, cause_specific_cindex, horizon_auroc, Architecture, AurocNegatives, FeatureEncoding, Outcome,
    TrainConfig,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let scores = [0.9, 0.4, 0.7, 0.1, 0.5];
    let outcomes = [
        Outcome::new(1.0, 1),
        Outcome::new(2.0, 0),
        Outcome::new(3.0, 1),
        Outcome::new(4.0, 2),
        Outcome::new(5.0, 0),
    ];
    println!("toy C-index (event 1): {}", cause_specific_cindex(&scores, &outcomes, 1)?);
    println!(
        "toy AUROC at 3.5 (event 1): {}",
        horizon_auroc(&scores, &outcomes, 1, 3.5, AurocNegatives::AllOthers)?
    );
    match horizon_auroc(&scores, &outcomes, 2, 1.0, AurocNegatives::AllOthers) {
        Ok(v) => println!("event 2 AUROC at 1.0: {v}"),
        Err(e) => println!("event 2 AUROC at 1.0: {e}"),
    }

    let spec = reference_spec();
    let train = generate(&spec, 800, 1)?;
    let valid = generate(&spec, 200, 2)?;
    let test = generate(&spec, 500, 3)?;
    let config = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 200,
        patience: 20,
        ..Default::default()
    };
    let (bundle, _) = train_bundle(
        build_grid(&train, None)?,
        FeatureEncoding::passthrough(5, 2),
        &train,
        &valid,
        Architecture::Linear,
        &config,
    )?;
    let curves = test
        .iter()
        .map(|r| Ok(bundle.predict(&r.features)?.cif()))
        .collect::<crmtlr::Result<Vec<_>>>()?;
    let outcomes: Vec<Outcome> = test.iter().map(|r| Outcome::new(r.time, r.event)).collect();
    for negatives in [AurocNegatives::AllOthers, AurocNegatives::ExcludeCensoredBeforeHorizon] {
        let report = EvaluationReport::compute(&curves, &bundle.grid, &outcomes, 0.5, negatives)?;
        println!("{negatives:?}\n{}", report.human());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
