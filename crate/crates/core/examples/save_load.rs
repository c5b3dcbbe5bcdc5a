// Writing a trained model to disk and reading it back.

use crmtlr::synthgen::{generate, reference_spec};
use crmtlr::trainer::train_bundle;
use crmtlr::{build_grid, Architecture, FeatureEncoding, ModelBundle, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = reference_spec();
    let train = generate(&spec, 300, 1)?;
    let valid = generate(&spec, 100, 2)?;
    let config = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 10,
        ..Default::default()
    };
    let (bundle, _) = train_bundle(
        build_grid(&train, None)?,
        FeatureEncoding::passthrough(5, 2),
        &train,
        &valid,
        Architecture::Deep { hidden: vec![16, 16, 16] },
        &config,
    )?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.json");
    bundle.save(&path)?;
    println!("wrote {} bytes", std::fs::metadata(&path)?.len());

    let loaded = ModelBundle::load(&path)?;
    assert_eq!(loaded, bundle);
    let x = &valid[0].features;
    let a = bundle.predict(x)?;
    let b = loaded.predict(x)?;
    let drift = a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    println!("max prediction drift after reload: {drift:e}");

    let text = std::fs::read_to_string(&path)?;
    std::fs::write(&path, &text[..text.len() / 2])?;
    match ModelBundle::load(&path) {
        Ok(_) => println!("truncated file unexpectedly loaded"),
        Err(e) => println!("truncated file rejected: {e}"),
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
