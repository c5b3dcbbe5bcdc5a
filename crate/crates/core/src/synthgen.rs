//! Synthetic competing-risks cohorts with exponential cause-specific
//! hazards, for which the cumulative incidence has a closed form:
//!
//! `CIF_e(t | x) = lambda_e / Lambda * (1 - exp(-Lambda t))`,
//! `Lambda = sum_e lambda_e`, `lambda_e = exp(beta_e . x + b_e + interactions)`.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::SubjectRecord;
use crate::error::{Error, Result};
use crate::math::dot;
use crate::metrics::{cause_specific_cindex, Outcome};
use crate::trainer::write_atomic;

/// Product term `coef * x_i * x_j` added to the log-hazard of `event`.
/// Indices are 0-based feature positions, `event` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub event: usize,
    pub i: usize,
    pub j: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardSpec {
    /// One coefficient vector per event, each of length `dim`.
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    /// Rate of the exponential censoring time; 0 disables random censoring.
    pub censoring_rate: f64,
    /// Administrative cutoff; `None` means no cutoff.
    pub t_max: Option<f64>,
}

impl HazardSpec {
    pub fn new(coefficients: Vec<Vec<f64>>, intercepts: Vec<f64>, censoring_rate: f64, t_max: Option<f64>) -> Result<Self> {
        let spec = HazardSpec {
            coefficients,
            intercepts,
            interactions: Vec::new(),
            censoring_rate,
            t_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_interaction(mut self, event: usize, i: usize, j: usize, coef: f64) -> Result<Self> {
        self.interactions.push(Interaction { event, i, j, coef });
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n_events = self.coefficients.len();
        if n_events == 0 || self.intercepts.len() != n_events {
            return Err(Error::InvalidArgument(
                "need one coefficient vector and one intercept per event".into(),
            ));
        }
        let d = self.coefficients[0].len();
        if self.coefficients.iter().any(|c| c.len() != d) {
            return Err(Error::InvalidArgument("coefficient vectors differ in length".into()));
        }
        if self.interactions.iter().any(|t| t.event == 0 || t.event > n_events || t.i >= d || t.j >= d) {
            return Err(Error::InvalidArgument("interaction term out of range".into()));
        }
        let finite = self
            .coefficients
            .iter()
            .flatten()
            .chain(&self.intercepts)
            .chain(self.interactions.iter().map(|t| &t.coef))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("hazard parameters must be finite".into()));
        }
        if !(self.censoring_rate >= 0.0 && self.censoring_rate.is_finite()) {
            return Err(Error::InvalidArgument("censoring rate must be finite and >= 0".into()));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("t_max must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn n_events(&self) -> usize {
        self.coefficients.len()
    }

    pub fn dim(&self) -> usize {
        self.coefficients[0].len()
    }

    /// Cause-specific hazard rates `lambda_e(x)`.
    pub fn rates(&self, x: &[f64]) -> Vec<f64> {
        let mut log_rates: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.intercepts)
            .map(|(beta, b)| dot(beta, x) + b)
            .collect();
        for t in &self.interactions {
            log_rates[t.event - 1] += t.coef * x[t.i] * x[t.j];
        }
        log_rates.into_iter().map(f64::exp).collect()
    }
}

/// Two-event, five-feature cohort used by the examples, the CLI default and
/// the recovery checks. About 20% of subjects are censored.
pub fn reference_spec() -> HazardSpec {
    HazardSpec::new(
        vec![
            vec![0.8, -0.6, 0.4, 0.0, 0.0],
            vec![-0.3, 0.0, 0.5, 0.7, 0.0],
        ],
        vec![0.0, -0.4],
        0.42,
        None,
    )
    .expect("reference spec is valid")
}

/// Cohort whose log-hazards are dominated by the product `x1 * x2`, with
/// opposite signs for the two events. A linear model cannot rank it well.
pub fn interaction_spec() -> HazardSpec {
    HazardSpec::new(
        vec![vec![0.3, 0.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.0, 0.0]],
        vec![0.0, -0.3],
        0.3,
        None,
    )
    .and_then(|s| s.with_interaction(1, 0, 1, 1.5))
    .and_then(|s| s.with_interaction(2, 0, 1, -1.0))
    .expect("interaction spec is valid")
}

/// Derives an independent seed for chunk `index` of a run seeded with `root`
/// (SplitMix64 finalizer), for generating large cohorts in parallel chunks.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn positive_exp<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let dist = Exp::new(rate).expect("rate is positive and finite");
    loop {
        let t: f64 = dist.sample(rng);
        if t > 0.0 {
            return t;
        }
    }
}

fn draw_outcome<R: Rng>(spec: &HazardSpec, x: &[f64], rng: &mut R) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (e, rate) in spec.rates(x).into_iter().enumerate() {
        let t = positive_exp(rng, rate);
        if t < best.0 {
            best = (t, e + 1);
        }
    }
    let mut censor = if spec.censoring_rate > 0.0 {
        positive_exp(rng, spec.censoring_rate)
    } else {
        f64::INFINITY
    };
    if let Some(t_max) = spec.t_max {
        censor = censor.min(t_max);
    }
    if censor < best.0 {
        (censor, 0)
    } else {
        best
    }
}

/// Draws `n` subjects with standard-normal features.
pub fn generate(spec: &HazardSpec, n: usize, seed: u64) -> Result<Vec<SubjectRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..spec.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let (time, event) = draw_outcome(spec, &x, &mut rng);
            SubjectRecord::new(format!("s{i}"), time, event, x)
        })
        .collect()
}

/// Draws `n` subjects that all share the covariate vector `x`.
pub fn generate_at(spec: &HazardSpec, x: &[f64], n: usize, seed: u64) -> Result<Vec<SubjectRecord>> {
    spec.validate()?;
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: x.len(),
            context: "covariates vs hazard spec",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (time, event) = draw_outcome(spec, x, &mut rng);
            SubjectRecord::new(format!("s{i}"), time, event, x.to_vec())
        })
        .collect()
}

/// Closed-form cumulative incidence of event `e` (1-based) by time `t`.
pub fn oracle_cif(spec: &HazardSpec, x: &[f64], t: f64, e: usize) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative time {t}")));
    }
    if e == 0 || e > spec.n_events() {
        return Err(Error::InvalidArgument(format!("event {e} outside 1..={}", spec.n_events())));
    }
    let rates = spec.rates(x);
    let total: f64 = rates.iter().sum();
    Ok(rates[e - 1] / total * -(-total * t).exp_m1())
}

/// C-index for event `e` achieved by the true ranking `lambda_e / Lambda`.
pub fn oracle_cindex(spec: &HazardSpec, cohort: &[SubjectRecord], e: usize) -> Result<f64> {
    let scores: Vec<f64> = cohort
        .iter()
        .map(|r| {
            let rates = spec.rates(&r.features);
            rates[e - 1] / rates.iter().sum::<f64>()
        })
        .collect();
    let outcomes: Vec<Outcome> = cohort.iter().map(|r| Outcome::new(r.time, r.event)).collect();
    cause_specific_cindex(&scores, &outcomes, e)
}

/// Aalen-Johansen estimate of the cumulative incidence functions.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCif {
    /// Distinct event times, increasing.
    pub times: Vec<f64>,
    /// `values[e - 1][j]` is the estimate just after `times[j]`.
    pub values: Vec<Vec<f64>>,
}

impl EmpiricalCif {
    pub fn estimate(cohort: &[SubjectRecord], n_events: usize) -> Self {
        let mut sorted: Vec<&SubjectRecord> = cohort.iter().collect();
        sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut at_risk = sorted.len() as f64;
        let mut surv = 1.0;
        let mut times = Vec::new();
        let mut values = vec![Vec::new(); n_events];
        let mut running = vec![0.0; n_events];
        let mut start = 0;
        while start < sorted.len() {
            let t = sorted[start].time;
            let end = start + sorted[start..].iter().take_while(|r| r.time == t).count();
            let mut deaths = vec![0.0; n_events];
            for r in &sorted[start..end] {
                if r.event > 0 {
                    deaths[r.event - 1] += 1.0;
                }
            }
            let total: f64 = deaths.iter().sum();
            if total > 0.0 {
                for e in 0..n_events {
                    running[e] += surv * deaths[e] / at_risk;
                    values[e].push(running[e]);
                }
                times.push(t);
                surv *= 1.0 - total / at_risk;
            }
            at_risk -= (end - start) as f64;
            start = end;
        }
        EmpiricalCif { times, values }
    }

    /// Step-function value for event `e` (1-based) at time `t`.
    pub fn at(&self, t: f64, e: usize) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.values[e - 1][idx - 1]
        }
    }
}

/// CSV with columns `id,time,event,x1..xd`, readable by the ingestion path.
pub fn cohort_csv(cohort: &[SubjectRecord]) -> String {
    let d = cohort.first().map_or(0, |r| r.features.len());
    let mut out = String::from("id,time,event");
    for j in 1..=d {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for r in cohort {
        let _ = write!(out, "{},{:?},{}", r.id, r.time, r.event);
        for v in &r.features {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Schema text declaring every generated feature continuous.
pub fn cohort_schema(spec: &HazardSpec) -> String {
    let mut out = format!("!events = {}\n", spec.n_events());
    for j in 1..=spec.dim() {
        let _ = writeln!(out, "x{j} = continuous");
    }
    out
}

#[derive(Serialize)]
struct Sidecar<'a> {
    spec: &'a HazardSpec,
    n: usize,
    seed: u64,
}

/// Writes `<path>` (CSV), `<path>.schema` and `<path>.spec.json` (the hazard
/// parameters and seed).
pub fn write_cohort(path: &Path, spec: &HazardSpec, cohort: &[SubjectRecord], seed: u64) -> Result<()> {
    write_atomic(path, cohort_csv(cohort).as_bytes())?;
    let with_suffix = |s: &str| {
        let mut p = path.as_os_str().to_owned();
        p.push(s);
        std::path::PathBuf::from(p)
    };
    write_atomic(&with_suffix(".schema"), cohort_schema(spec).as_bytes())?;
    let sidecar = serde_json::to_string_pretty(&Sidecar {
        spec,
        n: cohort.len(),
        seed,
    })?;
    write_atomic(&with_suffix(".spec.json"), sidecar.as_bytes())
}
