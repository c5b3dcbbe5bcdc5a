//! Independent reference implementations used as test oracles. Nothing here
//! calls into the code paths it checks: cell scores are rebuilt from explicit
//! outcome indicator vectors and exponentiated without any max-shift.

#![allow(dead_code)]

use crmtlr::metrics::Outcome;
use crmtlr::{MtlrHead, Observation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_head<R: Rng>(rng: &mut R, n_events: usize, n_intervals: usize, d: usize, scale: f64) -> MtlrHead {
    let rows = n_events * (n_intervals - 1);
    let w = (0..rows * d).map(|_| rng.random_range(-scale..scale)).collect();
    let b = (0..rows).map(|_| rng.random_range(-scale..scale)).collect();
    MtlrHead::new(n_events, n_intervals, d, w, b).unwrap()
}

pub fn random_x<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

pub fn random_cohort<R: Rng>(rng: &mut R, n: usize, d: usize, n_events: usize, n_intervals: usize) -> Vec<Observation> {
    (0..n)
        .map(|_| {
            Observation::new(
                random_x(rng, d),
                rng.random_range(0..=n_events),
                rng.random_range(1..=n_intervals),
            )
        })
        .collect()
}

/// Indicator vector `y[e][k]` (k = 1..K-1) of the outcome "event `e` in
/// interval `i`": ones for event `e` from edge `i` on, zeros elsewhere.
fn outcome_indicators(n_events: usize, n_intervals: usize, e: usize, i: usize) -> Vec<Vec<f64>> {
    (1..=n_events)
        .map(|ev| (1..n_intervals).map(|k| if ev == e && k >= i { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Exponent of a configuration: `sum_{e,k} (theta_{e,k} . x + b_{e,k}) y_{e,k}`.
fn configuration_score(head: &MtlrHead, x: &[f64], y: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for e in 1..=head.n_events() {
        for k in 1..head.n_intervals() {
            let theta = head.theta(e, k);
            let mut lin = head.bias(e, k);
            for j in 0..x.len() {
                lin += theta[j] * x[j];
            }
            s += lin * y[e - 1][k - 1];
        }
    }
    s
}

/// `brute_cells[e-1][i-1]`: exponent for every (event, interval) outcome.
pub fn brute_cells(head: &MtlrHead, x: &[f64]) -> Vec<Vec<f64>> {
    (1..=head.n_events())
        .map(|e| {
            (1..=head.n_intervals())
                .map(|i| configuration_score(head, x, &outcome_indicators(head.n_events(), head.n_intervals(), e, i)))
                .collect()
        })
        .collect()
}

pub fn brute_partition(head: &MtlrHead, x: &[f64]) -> f64 {
    brute_cells(head, x).iter().flatten().map(|s| s.exp()).sum::<f64>().ln()
}

pub fn brute_pmf(head: &MtlrHead, x: &[f64]) -> Vec<Vec<f64>> {
    let cells = brute_cells(head, x);
    let z: f64 = cells.iter().flatten().map(|s| s.exp()).sum();
    cells.iter().map(|row| row.iter().map(|s| s.exp() / z).collect()).collect()
}

pub fn brute_censored_log_marginal(head: &MtlrHead, x: &[f64], j: usize) -> f64 {
    let pmf = brute_pmf(head, x);
    pmf.iter().map(|row| row[j - 1..].iter().sum::<f64>()).sum::<f64>().ln()
}

pub fn brute_log_likelihood(head: &MtlrHead, cohort: &[Observation]) -> f64 {
    cohort
        .iter()
        .map(|o| {
            if o.event > 0 {
                brute_pmf(head, &o.x)[o.event - 1][o.bin - 1].ln()
            } else {
                brute_censored_log_marginal(head, &o.x, o.bin)
            }
        })
        .sum()
}

/// Classic single-event MTLR written from scratch: weights `theta[k]`,
/// biases `b[k]` for `k = 0..K-2`.
pub struct SingleEventMtlr {
    pub theta: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl SingleEventMtlr {
    pub fn from_head(head: &MtlrHead) -> Self {
        assert_eq!(head.n_events(), 1);
        SingleEventMtlr {
            theta: (1..head.n_intervals()).map(|k| head.theta(1, k).to_vec()).collect(),
            b: (1..head.n_intervals()).map(|k| head.bias(1, k)).collect(),
        }
    }

    fn k(&self) -> usize {
        self.b.len() + 1
    }

    fn lin(&self, x: &[f64], k: usize) -> f64 {
        self.theta[k].iter().zip(x).map(|(t, v)| t * v).sum::<f64>() + self.b[k]
    }

    /// `exp(sum_{k >= i} lin_k)` for the 1-based interval `i`.
    fn unnormalized(&self, x: &[f64], i: usize) -> f64 {
        ((i - 1)..self.k() - 1).map(|k| self.lin(x, k)).sum::<f64>().exp()
    }

    pub fn z(&self, x: &[f64]) -> f64 {
        (1..=self.k()).map(|i| self.unnormalized(x, i)).sum()
    }

    pub fn pmf(&self, x: &[f64]) -> Vec<f64> {
        let z = self.z(x);
        (1..=self.k()).map(|i| self.unnormalized(x, i) / z).collect()
    }

    /// Survival into interval `j`: every interval `i >= j`, terminal included.
    pub fn survival(&self, x: &[f64], j: usize) -> f64 {
        (j..=self.k()).map(|i| self.unnormalized(x, i)).sum::<f64>() / self.z(x)
    }

    pub fn log_likelihood(&self, cohort: &[Observation]) -> f64 {
        let mut total = 0.0;
        for o in cohort {
            let z = self.z(&o.x);
            if o.event > 0 {
                total += ((o.bin - 1)..self.k() - 1).map(|k| self.lin(&o.x, k)).sum::<f64>() - z.ln();
            } else {
                let kept: f64 = (1..=self.k()).filter(|&i| i >= o.bin).map(|i| self.unnormalized(&o.x, i)).sum();
                total += kept.ln() - z.ln();
            }
        }
        total
    }
}

/// O(N^2) cause-specific C-index.
pub fn brute_cindex(scores: &[f64], outcomes: &[Outcome], e: usize) -> Option<f64> {
    let (mut concordant, mut comparable) = (0.0, 0u64);
    for i in 0..scores.len() {
        if outcomes[i].event != e {
            continue;
        }
        for j in 0..scores.len() {
            if outcomes[i].time < outcomes[j].time {
                comparable += 1;
                if scores[i] > scores[j] {
                    concordant += 1.0;
                } else if scores[i] == scores[j] {
                    concordant += 0.5;
                }
            }
        }
    }
    (comparable > 0).then(|| concordant / comparable as f64)
}

/// O(N^2) horizon AUROC with every non-positive subject a negative.
pub fn brute_auroc(scores: &[f64], outcomes: &[Outcome], e: usize, tau: f64) -> Option<f64> {
    let positive: Vec<bool> = outcomes.iter().map(|o| o.time <= tau && o.event == e).collect();
    let (mut wins, mut pairs) = (0.0, 0u64);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Central differences of `f` at `p`.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(p: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut probe = p.to_vec();
    (0..p.len())
        .map(|i| {
            probe[i] = p[i] + h;
            let up = f(&probe);
            probe[i] = p[i] - h;
            let down = f(&probe);
            probe[i] = p[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Worst elementwise error under the rule "relative error, or absolute
/// difference at most `floor`".
pub fn worst_gradient_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff <= floor {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}
