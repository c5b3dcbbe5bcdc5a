//! Central finite-difference verification of the analytic gradients.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{ParamGroup, SurvivalModel};
use crate::mtlr::Observation;

/// Step and acceptance thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub step: f64,
    pub relative: f64,
    /// Differences at or below this are treated as exact.
    pub absolute_floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            step: 1e-5,
            relative: 1e-4,
            absolute_floor: 1e-8,
        }
    }
}

/// Elementwise error: 0 under the absolute floor, else relative to the
/// larger magnitude.
pub fn element_error(analytic: f64, numeric: f64, tol: &Tolerance) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= tol.absolute_floor {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupStats {
    pub n: usize,
    pub max_error: f64,
    pub max_abs_diff: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub groups: BTreeMap<ParamGroup, GroupStats>,
    pub relative_tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.values().all(|g| g.failures == 0)
    }

    pub fn max_error(&self) -> f64 {
        self.groups.values().map(|g| g.max_error).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self) -> f64 {
        self.groups.values().map(|g| g.max_abs_diff).fold(0.0, f64::max)
    }

    fn merge(&mut self, other: &GradCheckReport) {
        self.relative_tolerance = other.relative_tolerance;
        for (group, s) in &other.groups {
            let acc = self.groups.entry(*group).or_default();
            acc.n += s.n;
            acc.failures += s.failures;
            acc.max_error = acc.max_error.max(s.max_error);
            acc.max_abs_diff = acc.max_abs_diff.max(s.max_abs_diff);
        }
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (group, s) in &self.groups {
            writeln!(
                f,
                "{:<16} n={:<5} max_rel_err={:.3e} max_abs_diff={:.3e} {}",
                group.name(),
                s.n,
                s.max_error,
                s.max_abs_diff,
                if s.failures == 0 { "ok" } else { "FAIL" }
            )?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Compares `analytic` to central differences of `loss` around `params`.
pub fn check_against<F>(
    params: &[f64],
    analytic: &[f64],
    groups: &[ParamGroup],
    tol: &Tolerance,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut report = GradCheckReport {
        relative_tolerance: tol.relative,
        ..Default::default()
    };
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        probe[i] = params[i] + tol.step;
        let up = loss(&probe)?;
        probe[i] = params[i] - tol.step;
        let down = loss(&probe)?;
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * tol.step);
        let err = element_error(analytic[i], numeric, tol);
        let s = report.groups.entry(groups[i]).or_default();
        s.n += 1;
        s.max_error = s.max_error.max(err);
        s.max_abs_diff = s.max_abs_diff.max((analytic[i] - numeric).abs());
        if !(err < tol.relative) {
            s.failures += 1;
        }
    }
    Ok(report)
}

/// Checks the full model gradient (encoder, head and both penalties).
/// `corrupt` perturbs one analytic entry, as a negative control.
pub fn check_model(
    model: &SurvivalModel,
    cohort: &[Observation],
    c1: f64,
    c2: f64,
    tol: &Tolerance,
    corrupt: bool,
) -> Result<GradCheckReport> {
    let (_, grad) = model.loss_and_gradient(cohort, c1, c2)?;
    let mut analytic = grad.params();
    if corrupt {
        if let Some(g) = analytic.first_mut() {
            *g += 1e-2 + g.abs() * 0.1;
        }
    }
    let params = model.params();
    let mut scratch = model.clone();
    check_against(&params, &analytic, &model.param_groups(), tol, |p| {
        scratch.set_params(p)?;
        scratch.loss(cohort, c1, c2)
    })
}

/// Finite differences are meaningless across a ReLU kink, so sampled points
/// keep every pre-activation at least this far from zero.
pub const KINK_MARGIN: f64 = 1e-3;

/// Smallest ReLU margin over the cohort.
pub fn relu_margin(model: &SurvivalModel, cohort: &[Observation]) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for o in cohort {
        margin = margin.min(model.encoder.forward_trace(&o.x)?.relu_margin(&model.encoder));
    }
    Ok(margin)
}

/// A random deep model and toy cohort: `n` subjects, `d` features,
/// `n_events` events, `n_intervals` intervals, ReLU hidden widths `hidden`.
/// Draws are repeated until no pre-activation is within [`KINK_MARGIN`].
pub fn random_instance(
    seed: u64,
    n: usize,
    d: usize,
    hidden: &[usize],
    n_events: usize,
    n_intervals: usize,
) -> Result<(SurvivalModel, Vec<Observation>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut model = SurvivalModel::deep(d, hidden, n_events, n_intervals, rng.random())?;
        let params: Vec<f64> = model
            .params()
            .iter()
            .map(|p| p + rng.random_range(-0.5..0.5))
            .collect();
        model.set_params(&params)?;
        let cohort: Vec<Observation> = (0..n)
            .map(|_| {
                let x = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
                Observation::new(x, rng.random_range(0..=n_events), rng.random_range(1..=n_intervals))
            })
            .collect();
        if relu_margin(&model, &cohort)? >= KINK_MARGIN {
            return Ok((model, cohort));
        }
    }
}

/// Default suite: `points` random instances with `K = 4`, `E = 2`, 10
/// subjects and three hidden layers, with both penalties active.
pub fn default_suite(seed: u64, points: usize, corrupt: bool) -> Result<GradCheckReport> {
    let tol = Tolerance::default();
    let mut total = GradCheckReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..points {
        let (model, cohort) = random_instance(rng.random(), 10, 3, &[6, 5, 4], 2, 4)?;
        total.merge(&check_model(&model, &cohort, 0.3, 0.1, &tol, corrupt)?);
    }
    Ok(total)
}
