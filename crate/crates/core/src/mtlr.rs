//! Multi-task logistic regression over a discrete time grid, for one or
//! several competing events.
//!
//! For event `e` the head holds one linear predictor per interior edge,
//! `s_{e,k}(x) = theta_{e,k} . x + b_{e,k}` for `k = 1..K-1`. The outcome
//! "event `e` in interval `i`" scores the suffix sum
//! `sum_{k=i}^{K-1} s_{e,k}`; the last interval scores 0 for every event.
//! Exponentiating and normalizing over all `K * E` cells gives the joint
//! distribution of (interval, event).

use serde::{Deserialize, Serialize};

use crate::dataset::TimeGrid;
use crate::error::{Error, Result};
use crate::math::{dot, log_sum_exp, sum_squares};

/// Parameters of a competing-risks MTLR head.
///
/// Weights are stored row-major as `[event][edge][feature]`, biases as
/// `[event][edge]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HeadRepr", into = "HeadRepr")]
pub struct MtlrHead {
    n_events: usize,
    n_intervals: usize,
    input_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeadRepr {
    n_events: usize,
    n_intervals: usize,
    input_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl TryFrom<HeadRepr> for MtlrHead {
    type Error = Error;

    fn try_from(r: HeadRepr) -> Result<Self> {
        MtlrHead::new(r.n_events, r.n_intervals, r.input_dim, r.weights, r.biases)
    }
}

impl From<MtlrHead> for HeadRepr {
    fn from(h: MtlrHead) -> Self {
        HeadRepr {
            n_events: h.n_events,
            n_intervals: h.n_intervals,
            input_dim: h.input_dim,
            weights: h.weights,
            biases: h.biases,
        }
    }
}

impl MtlrHead {
    pub fn new(
        n_events: usize,
        n_intervals: usize,
        input_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        if n_events < 1 || n_intervals < 2 {
            return Err(Error::InvalidArgument(format!(
                "MTLR head needs E >= 1 and K >= 2 (got E = {n_events}, K = {n_intervals})"
            )));
        }
        let rows = n_events * (n_intervals - 1);
        if weights.len() != rows * input_dim {
            return Err(Error::DimensionMismatch {
                expected: rows * input_dim,
                got: weights.len(),
                context: "head weights",
            });
        }
        if biases.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: biases.len(),
                context: "head biases",
            });
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("head parameters must be finite".into()));
        }
        Ok(MtlrHead {
            n_events,
            n_intervals,
            input_dim,
            weights,
            biases,
        })
    }

    pub fn zeros(n_events: usize, n_intervals: usize, input_dim: usize) -> Result<Self> {
        let rows = n_events * n_intervals.saturating_sub(1);
        MtlrHead::new(
            n_events,
            n_intervals,
            input_dim,
            vec![0.0; rows * input_dim],
            vec![0.0; rows],
        )
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    /// Weight row `theta_{e,k}` with 1-based `e` and edge `k`.
    pub fn theta(&self, e: usize, k: usize) -> &[f64] {
        let row = (e - 1) * (self.n_intervals - 1) + (k - 1);
        &self.weights[row * self.input_dim..(row + 1) * self.input_dim]
    }

    pub fn bias(&self, e: usize, k: usize) -> f64 {
        self.biases[(e - 1) * (self.n_intervals - 1) + (k - 1)]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
                context: "MTLR head input",
            });
        }
        Ok(())
    }

    /// Per-edge linear predictors `s_{e,k}`, laid out `[event][edge]`.
    pub fn edge_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let d = self.input_dim;
        Ok(self
            .biases
            .iter()
            .enumerate()
            .map(|(row, b)| dot(&self.weights[row * d..(row + 1) * d], x) + b)
            .collect())
    }

    /// All `K * E` cell scores laid out `[event][interval]`.
    pub fn cell_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(cell_scores_from_edges(
            &self.edge_scores(x)?,
            self.n_events,
            self.n_intervals,
        ))
    }

    /// Score of "event `e` in interval `i`" (both 1-based).
    pub fn cell_score(&self, x: &[f64], e: usize, i: usize) -> Result<f64> {
        self.check_cell(e, i)?;
        let scores = self.edge_scores(x)?;
        let row = &scores[(e - 1) * (self.n_intervals - 1)..e * (self.n_intervals - 1)];
        Ok(row[i - 1..].iter().sum())
    }

    fn check_cell(&self, e: usize, i: usize) -> Result<()> {
        if !(1..=self.n_events).contains(&e) {
            return Err(Error::InvalidArgument(format!(
                "event {e} outside 1..={}",
                self.n_events
            )));
        }
        if !(1..=self.n_intervals).contains(&i) {
            return Err(Error::InvalidArgument(format!(
                "interval {i} outside 1..={}",
                self.n_intervals
            )));
        }
        Ok(())
    }

    /// `log Z(x)`: log-sum-exp over every (interval, event) cell.
    pub fn log_partition(&self, x: &[f64]) -> Result<f64> {
        Ok(log_sum_exp(self.cell_scores(x)?))
    }

    pub fn joint_pmf(&self, x: &[f64]) -> Result<PredictionGrid> {
        let cells = self.cell_scores(x)?;
        Ok(PredictionGrid::from_cell_scores(
            self.n_events,
            self.n_intervals,
            &cells,
        ))
    }

    /// Log-probability of surviving event-free into interval `j`: the mass of
    /// every cell whose interval index is `>= j`, over all events.
    pub fn censored_log_marginal(&self, x: &[f64], j: usize) -> Result<f64> {
        self.check_cell(1, j)?;
        let cells = self.cell_scores(x)?;
        Ok(censored_lse(&cells, self.n_events, self.n_intervals, j) - log_sum_exp(cells))
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_penalty(&self) -> f64 {
        sum_squares(&self.weights)
    }

    /// Smoothness over time: `sum_e sum_k ||theta_{e,k+1} - theta_{e,k}||^2`.
    pub fn difference_penalty(&self) -> f64 {
        let d = self.input_dim;
        let m = self.n_intervals - 1;
        let mut total = 0.0;
        for e in 0..self.n_events {
            for k in 1..m {
                let a = (e * m + k - 1) * d;
                let b = (e * m + k) * d;
                total += (0..d).map(|j| (self.weights[b + j] - self.weights[a + j]).powi(2)).sum::<f64>();
            }
        }
        total
    }

    /// Adds the gradient of `(c / 2) * difference_penalty()` into `grad`.
    pub fn add_difference_gradient(&self, c: f64, grad: &mut MtlrHead) {
        let d = self.input_dim;
        let m = self.n_intervals - 1;
        for e in 0..self.n_events {
            for k in 1..m {
                let a = (e * m + k - 1) * d;
                let b = (e * m + k) * d;
                for j in 0..d {
                    let diff = c * (self.weights[b + j] - self.weights[a + j]);
                    grad.weights[b + j] += diff;
                    grad.weights[a + j] -= diff;
                }
            }
        }
    }
}

/// Turns per-edge scores `[event][edge]` into suffix-summed cell scores
/// `[event][interval]`.
pub fn cell_scores_from_edges(edges: &[f64], n_events: usize, n_intervals: usize) -> Vec<f64> {
    let m = n_intervals - 1;
    let mut cells = vec![0.0; n_events * n_intervals];
    for e in 0..n_events {
        let mut acc = 0.0;
        for k in (0..m).rev() {
            acc += edges[e * m + k];
            cells[e * n_intervals + k] = acc;
        }
    }
    cells
}

fn censored_lse(cells: &[f64], n_events: usize, n_intervals: usize, j: usize) -> f64 {
    log_sum_exp(
        (0..n_events).flat_map(|e| cells[e * n_intervals + j - 1..(e + 1) * n_intervals].iter().copied()),
    )
}

/// One subject as seen by the likelihood: its input vector, its event code
/// (0 = censored) and its 1-based interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub event: usize,
    pub bin: usize,
}

impl Observation {
    pub fn new(x: Vec<f64>, event: usize, bin: usize) -> Self {
        Observation { x, event, bin }
    }
}

/// Negative log-likelihood of one subject and its gradient with respect to
/// the per-edge scores `s_{e,k}`.
///
/// `d log Z / d s_{e,k}` is the cumulative mass of event `e` up to interval
/// `k`; the numerator contributes an indicator (event) or the cumulative
/// posterior over surviving cells (censored).
pub(crate) fn subject_nll_and_grad(
    edge_scores: &[f64],
    n_events: usize,
    n_intervals: usize,
    event: usize,
    bin: usize,
) -> (f64, Vec<f64>) {
    let m = n_intervals - 1;
    let cells = cell_scores_from_edges(edge_scores, n_events, n_intervals);
    let log_z = log_sum_exp(cells.iter().copied());
    let mut grad = vec![0.0; n_events * m];
    for e in 0..n_events {
        let mut cum = 0.0;
        for k in 0..m {
            cum += (cells[e * n_intervals + k] - log_z).exp();
            grad[e * m + k] = cum;
        }
    }
    let numerator = if event > 0 {
        let e = event - 1;
        for k in bin - 1..m {
            grad[e * m + k] -= 1.0;
        }
        cells[e * n_intervals + bin - 1]
    } else {
        let log_m = censored_lse(&cells, n_events, n_intervals, bin);
        for e in 0..n_events {
            let mut cum = 0.0;
            for k in bin - 1..m {
                cum += (cells[e * n_intervals + k] - log_m).exp();
                grad[e * m + k] -= cum;
            }
        }
        log_m
    };
    (log_z - numerator, grad)
}

fn check_observation(head: &MtlrHead, obs: &Observation) -> Result<()> {
    if obs.event > head.n_events {
        return Err(Error::InvalidArgument(format!(
            "event {} outside 0..={}",
            obs.event, head.n_events
        )));
    }
    if !(1..=head.n_intervals).contains(&obs.bin) {
        return Err(Error::InvalidArgument(format!(
            "bin {} outside 1..={}",
            obs.bin, head.n_intervals
        )));
    }
    Ok(())
}

/// Total (summed) log-likelihood of a cohort under the head.
pub fn log_likelihood(head: &MtlrHead, cohort: &[Observation]) -> Result<f64> {
    let mut total = 0.0;
    for obs in cohort {
        check_observation(head, obs)?;
        let cells = head.cell_scores(&obs.x)?;
        let log_z = log_sum_exp(cells.iter().copied());
        total += if obs.event > 0 {
            cells[(obs.event - 1) * head.n_intervals + obs.bin - 1] - log_z
        } else {
            censored_lse(&cells, head.n_events, head.n_intervals, obs.bin) - log_z
        };
    }
    Ok(total)
}

/// Mean negative log-likelihood plus `(c1 / 2) * ||theta||^2`, and its
/// gradient, returned as a head-shaped value.
pub fn loss_and_gradient(head: &MtlrHead, cohort: &[Observation], c1: f64) -> Result<(f64, MtlrHead)> {
    if cohort.is_empty() {
        return Err(Error::InvalidArgument("empty cohort".into()));
    }
    if !(c1 >= 0.0) {
        return Err(Error::InvalidArgument(format!("c1 must be >= 0, got {c1}")));
    }
    let d = head.input_dim;
    let mut grad = MtlrHead::zeros(head.n_events, head.n_intervals, d)?;
    let scale = 1.0 / cohort.len() as f64;
    let mut nll = 0.0;
    for obs in cohort {
        check_observation(head, obs)?;
        let scores = head.edge_scores(&obs.x)?;
        let (l, g) = subject_nll_and_grad(&scores, head.n_events, head.n_intervals, obs.event, obs.bin);
        nll += l;
        for (row, &gr) in g.iter().enumerate() {
            grad.biases[row] += gr * scale;
            let w = &mut grad.weights[row * d..(row + 1) * d];
            for (wj, xj) in w.iter_mut().zip(&obs.x) {
                *wj += gr * xj * scale;
            }
        }
    }
    for (g, w) in grad.weights.iter_mut().zip(&head.weights) {
        *g += c1 * w;
    }
    Ok((nll * scale + 0.5 * c1 * head.weight_penalty(), grad))
}

/// Joint probabilities `P(event e, interval k)`, laid out `[event][interval]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    n_events: usize,
    n_intervals: usize,
    probs: Vec<f64>,
}

impl PredictionGrid {
    /// Softmax over cell scores laid out `[event][interval]`.
    pub fn from_cell_scores(n_events: usize, n_intervals: usize, cells: &[f64]) -> Self {
        let log_z = log_sum_exp(cells.iter().copied());
        PredictionGrid {
            n_events,
            n_intervals,
            probs: cells.iter().map(|s| (s - log_z).exp()).collect(),
        }
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    /// Probability of event `e` in interval `i` (both 1-based).
    pub fn prob(&self, e: usize, i: usize) -> f64 {
        self.probs[(e - 1) * self.n_intervals + i - 1]
    }

    /// The `K` interval probabilities of event `e` (1-based).
    pub fn event_row(&self, e: usize) -> &[f64] {
        &self.probs[(e - 1) * self.n_intervals..e * self.n_intervals]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Cumulative incidence per event: running sums over intervals.
    pub fn cif(&self) -> CifCurve {
        let mut values = Vec::with_capacity(self.probs.len());
        for row in self.probs.chunks_exact(self.n_intervals) {
            let mut acc = 0.0;
            values.extend(row.iter().map(|p| {
                acc += p;
                acc
            }));
        }
        CifCurve {
            n_events: self.n_events,
            n_intervals: self.n_intervals,
            values,
        }
    }
}

/// Cumulative incidence `CIF_e(t_k)` per event and interval end,
/// laid out `[event][interval]`. The last column is the mass at `t_K = inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct CifCurve {
    n_events: usize,
    n_intervals: usize,
    values: Vec<f64>,
}

impl CifCurve {
    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    /// `CIF_e(t_k)` with 1-based `e` and `k`.
    pub fn value(&self, e: usize, k: usize) -> f64 {
        self.values[(e - 1) * self.n_intervals + k - 1]
    }

    pub fn event_curve(&self, e: usize) -> &[f64] {
        &self.values[(e - 1) * self.n_intervals..e * self.n_intervals]
    }

    /// Step-function evaluation at `tau`: the mass of every interval whose
    /// right edge lies at or before `tau`. Returns one value per event.
    pub fn at(&self, grid: &TimeGrid, tau: f64) -> Result<Vec<f64>> {
        if tau.is_nan() || tau < 0.0 {
            return Err(Error::InvalidArgument(format!("negative horizon {tau}")));
        }
        if grid.n_intervals() != self.n_intervals {
            return Err(Error::DimensionMismatch {
                expected: self.n_intervals,
                got: grid.n_intervals(),
                context: "grid intervals vs CIF curve",
            });
        }
        let passed = grid.edges().partition_point(|&t| t <= tau);
        Ok((1..=self.n_events)
            .map(|e| if passed == 0 { 0.0 } else { self.value(e, passed) })
            .collect())
    }

    /// Lifetime risk per event: `sum_k CIF_e(t_k)` over all `K` timepoints.
    pub fn lifetime_risk(&self) -> Vec<f64> {
        self.values
            .chunks_exact(self.n_intervals)
            .map(|row| row.iter().sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_penalty_and_gradient() {
        // one event, three edges, one feature: theta = 1, 3, 0
        let head = MtlrHead::new(1, 4, 1, vec![1.0, 3.0, 0.0], vec![0.0; 3]).unwrap();
        assert_eq!(head.difference_penalty(), 4.0 + 9.0);
        let mut grad = MtlrHead::zeros(1, 4, 1).unwrap();
        head.add_difference_gradient(2.0, &mut grad);
        assert_eq!(grad.weights(), &[-4.0, 2.0 * (2.0 + 3.0), -6.0]);
        assert_eq!(MtlrHead::zeros(2, 2, 3).unwrap().difference_penalty(), 0.0);
    }

    fn head_from_edges(n_events: usize, k: usize, edge_biases: Vec<f64>) -> MtlrHead {
        MtlrHead::new(n_events, k, 0, vec![], edge_biases).unwrap()
    }

    #[test]
    fn zero_head_scores_are_zero() {
        let head = MtlrHead::zeros(2, 3, 2).unwrap();
        for e in 1..=2 {
            for i in 1..=3 {
                assert_eq!(head.cell_score(&[0.3, -1.0], e, i).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn suffix_scores_by_hand() {
        // K=3, E=1, s_1 = 0.5, s_2 = -0.2
        let head = head_from_edges(1, 3, vec![0.5, -0.2]);
        assert!((head.cell_score(&[], 1, 1).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(head.cell_score(&[], 1, 2).unwrap(), -0.2);
        assert_eq!(head.cell_score(&[], 1, 3).unwrap(), 0.0);
    }

    #[test]
    fn cell_score_rejects_bad_indices() {
        let head = MtlrHead::zeros(2, 3, 1).unwrap();
        assert!(head.cell_score(&[0.0], 0, 1).is_err());
        assert!(head.cell_score(&[0.0], 3, 1).is_err());
        assert!(head.cell_score(&[0.0], 1, 4).is_err());
        assert!(matches!(head.cell_score(&[0.0, 1.0], 1, 1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_head_partition_and_pmf() {
        let head = MtlrHead::zeros(2, 2, 3).unwrap();
        let x = [1.0, 2.0, 3.0];
        assert!((head.log_partition(&x).unwrap() - 4f64.ln()).abs() < 1e-15);
        let pmf = head.joint_pmf(&x).unwrap();
        assert!(pmf.as_slice().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let cif = pmf.cif();
        assert_eq!(cif.event_curve(1), &[0.25, 0.5]);
        assert_eq!(cif.event_curve(2), &[0.25, 0.5]);

        let head = MtlrHead::zeros(3, 7, 1).unwrap();
        assert!((head.log_partition(&[0.4]).unwrap() - 21f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn censored_marginals_for_zero_head() {
        let single = MtlrHead::zeros(1, 2, 1).unwrap();
        assert!((single.censored_log_marginal(&[1.0], 2).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let double = MtlrHead::zeros(2, 2, 1).unwrap();
        assert!((double.censored_log_marginal(&[1.0], 2).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(double.censored_log_marginal(&[1.0], 1).unwrap(), 0.0);
        assert!(double.censored_log_marginal(&[1.0], 3).is_err());
        assert!(double.censored_log_marginal(&[1.0], 0).is_err());
    }

    #[test]
    fn likelihood_of_trivial_cohorts() {
        let head = MtlrHead::zeros(2, 2, 1).unwrap();
        let one = [Observation::new(vec![0.0], 1, 2)];
        assert!((log_likelihood(&head, &one).unwrap() - 0.25f64.ln()).abs() < 1e-15);
        let censored = [Observation::new(vec![0.0], 0, 1)];
        assert_eq!(log_likelihood(&head, &censored).unwrap(), 0.0);
        let (loss, _) = loss_and_gradient(&head, &one, 0.0).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn penalty_gradient_is_c1_theta() {
        // zero inputs make the data term independent of theta
        let weights = vec![0.5, -1.0, 2.0, 0.25];
        let head = MtlrHead::new(2, 2, 2, weights.clone(), vec![0.1, -0.3]).unwrap();
        let cohort = [Observation::new(vec![0.0, 0.0], 1, 1)];
        let c1 = 1e3;
        let (_, grad) = loss_and_gradient(&head, &cohort, c1).unwrap();
        for (g, w) in grad.weights().iter().zip(&weights) {
            assert!((g - c1 * w).abs() < 1e-12);
        }
    }

    #[test]
    fn likelihood_rejects_bad_observations() {
        let head = MtlrHead::zeros(2, 3, 1).unwrap();
        assert!(log_likelihood(&head, &[Observation::new(vec![0.0], 3, 1)]).is_err());
        assert!(log_likelihood(&head, &[Observation::new(vec![0.0], 1, 4)]).is_err());
        assert!(loss_and_gradient(&head, &[], 0.0).is_err());
    }

    #[test]
    fn cif_at_is_a_right_continuous_step() {
        let grid = TimeGrid::new(vec![1.0, 2.0]).unwrap();
        let head = head_from_edges(2, 3, vec![0.3, -0.1, 0.2, 0.4]);
        let cif = head.joint_pmf(&[]).unwrap().cif();
        assert_eq!(cif.at(&grid, 0.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(cif.at(&grid, 0.99).unwrap(), vec![0.0, 0.0]);
        let at_one = vec![cif.value(1, 1), cif.value(2, 1)];
        assert_eq!(cif.at(&grid, 1.0).unwrap(), at_one);
        assert_eq!(cif.at(&grid, 1.5).unwrap(), at_one);
        let last = vec![cif.value(1, 2), cif.value(2, 2)];
        assert_eq!(cif.at(&grid, 2.0).unwrap(), last);
        assert_eq!(cif.at(&grid, 1e9).unwrap(), last);
        assert!(cif.at(&grid, -1.0).is_err());
    }

    #[test]
    fn terminal_interval_is_shared_across_events() {
        let head = head_from_edges(3, 4, (0..9).map(|i| i as f64 * 0.3 - 1.0).collect());
        let pmf = head.joint_pmf(&[]).unwrap();
        assert_eq!(pmf.prob(1, 4), pmf.prob(2, 4));
        assert_eq!(pmf.prob(2, 4), pmf.prob(3, 4));
    }

    #[test]
    fn large_scores_stay_finite() {
        let head = head_from_edges(2, 3, vec![250.0, 250.0, -250.0, -250.0]);
        let cohort = [
            Observation::new(vec![], 2, 1),
            Observation::new(vec![], 0, 3),
        ];
        let (loss, grad) = loss_and_gradient(&head, &cohort, 0.0).unwrap();
        assert!(loss.is_finite());
        assert!(grad.biases().iter().all(|g| g.is_finite()));
        let pmf = head.joint_pmf(&[]).unwrap();
        assert!((pmf.total_mass() - 1.0).abs() < 1e-9);
    }
}
