// Verifying the analytic gradients of the full model against central
// finite differences.

use crmtlr::gradcheck::{check_model, default_suite, random_instance, Tolerance};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let report = default_suite(0, 10, false)?;
    println!("{report}");
    assert!(report.passed());

    let (model, cohort) = random_instance(3, 25, 4, &[16, 8], 3, 6)?;
    let single = check_model(&model, &cohort, 0.05, 0.01, &Tolerance::default(), false)?;
    println!("larger instance:\n{single}");

    let corrupted = default_suite(0, 1, true)?;
    println!("with a corrupted entry: passed = {}", corrupted.passed());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
