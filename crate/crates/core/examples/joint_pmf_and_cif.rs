// The competing-risks MTLR head: joint PMF over (event, interval) cells,
// cumulative incidence curves and lifetime risk.

use crmtlr::MtlrHead;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // two events, four intervals, two features; rows are [e][k][feature]
    let weights = vec![
        0.4, -0.2, 0.1, 0.3, 0.6, 0.0, //
        -0.5, 0.2, 0.0, 0.1, 0.2, -0.4,
    ];
    let biases = vec![0.2, 0.1, -0.3, -0.1, 0.0, 0.5];
    let head = MtlrHead::new(2, 4, 2, weights, biases)?;
    let x = [1.0, -0.5];

    println!("log Z = {:.6}", head.log_partition(&x)?);
    let pmf = head.joint_pmf(&x)?;
    for e in 1..=2 {
        println!("P(event {e}, interval i) = {:.4?}", pmf.event_row(e));
    }
    println!("total mass = {:.15}", pmf.total_mass());

    let cif = pmf.cif();
    for e in 1..=2 {
        println!("CIF_{e} = {:.4?}", cif.event_curve(e));
    }
    println!("lifetime risk = {:.4?}", cif.lifetime_risk());

    for j in 1..=4 {
        println!("log P(censored in interval {j}) = {:.5}", head.censored_log_marginal(&x, j)?);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
