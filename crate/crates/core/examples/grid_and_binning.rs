// Discretizing follow-up time: quantile and uniform grids, and bin lookup.

use crmtlr::dataset::{build_grid_with, default_interval_count, GridSpacing};
use crmtlr::{build_grid, SubjectRecord};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<SubjectRecord> = (1..=8)
        .map(|t| SubjectRecord::new(format!("p{t}"), t as f64, 1, vec![]))
        .collect::<Result<_, _>>()?;

    let grid = build_grid(&records, Some(4))?;
    println!("quantile edges: {:?}", grid.edges());
    assert_eq!(grid.edges(), &[2.75, 4.5, 6.25]);

    for t in [0.5, 2.75, 3.0, 6.25, 100.0] {
        println!("t = {t:>6} -> interval {}", grid.bin(t)?);
    }

    let uniform = build_grid_with(&records, Some(4), GridSpacing::Uniform)?;
    println!("uniform edges: {:?}", uniform.edges());

    println!("default K for 1802 subjects: {}", default_interval_count(1802));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
