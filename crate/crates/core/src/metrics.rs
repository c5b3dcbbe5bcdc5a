//! Cause-specific discrimination metrics: Harrell's C-index on lifetime risk
//! scores and the horizon AUROC on predicted CIF values.
//!
//! Both are rank statistics with half credit for tied scores. Counts are kept
//! as integers in half-units so results are exact.

use std::fmt;

use crate::dataset::TimeGrid;
use crate::error::{Error, Result};
use crate::mtlr::CifCurve;

/// Observed follow-up of one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub time: f64,
    /// 0 = censored.
    pub event: usize,
}

impl Outcome {
    pub fn new(time: f64, event: usize) -> Self {
        Outcome { time, event }
    }
}

/// Lifetime risk per subject and event: `sum_k CIF_e(t_k)`, indexed
/// `[event - 1][subject]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskScores {
    pub by_event: Vec<Vec<f64>>,
}

impl RiskScores {
    pub fn from_curves(curves: &[CifCurve]) -> Self {
        let n_events = curves.first().map_or(0, CifCurve::n_events);
        let mut by_event = vec![Vec::with_capacity(curves.len()); n_events];
        for c in curves {
            for (e, r) in c.lifetime_risk().into_iter().enumerate() {
                by_event[e].push(r);
            }
        }
        RiskScores { by_event }
    }

    /// Scores for event `e` (1-based).
    pub fn event(&self, e: usize) -> &[f64] {
        &self.by_event[e - 1]
    }
}

/// Which subjects count as negatives for the horizon AUROC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AurocNegatives {
    /// Everyone without event `e` by `tau`, including subjects censored
    /// before `tau`.
    #[default]
    AllOthers,
    /// As above, but subjects censored before `tau` are dropped.
    ExcludeCensoredBeforeHorizon,
}

fn check_inputs(scores: &[f64], outcomes: &[Outcome]) -> Result<()> {
    if scores.len() != outcomes.len() {
        return Err(Error::DimensionMismatch {
            expected: outcomes.len(),
            got: scores.len(),
            context: "scores vs outcomes",
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN risk score".into()));
    }
    Ok(())
}

/// Fenwick tree counting inserted score ranks.
struct RankCounter {
    tree: Vec<u64>,
}

impl RankCounter {
    fn new(n: usize) -> Self {
        RankCounter { tree: vec![0; n + 1] }
    }

    fn insert(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `rank`.
    fn count_below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut total = 0;
        while i > 0 {
            total += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        total
    }
}

/// Harrell's C-index for cause `e`.
///
/// A pair `(i, j)` is comparable when subject `i` had event `e` and
/// `T_i < T_j`, whatever the later subject's status. It is concordant when
/// `score_i > score_j`; ties count one half.
pub fn cause_specific_cindex(scores: &[f64], outcomes: &[Outcome], e: usize) -> Result<f64> {
    check_inputs(scores, outcomes)?;
    let n = scores.len();

    let mut sorted_scores: Vec<f64> = scores.to_vec();
    sorted_scores.sort_by(f64::total_cmp);
    sorted_scores.dedup();
    let rank = |s: f64| sorted_scores.partition_point(|&v| v < s);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| outcomes[b].time.total_cmp(&outcomes[a].time));

    let mut later = RankCounter::new(sorted_scores.len());
    let mut inserted = 0u64;
    let (mut half_concordant, mut comparable) = (0u64, 0u64);
    let mut start = 0;
    while start < n {
        let t = outcomes[order[start]].time;
        let end = start + order[start..].iter().take_while(|&&i| outcomes[i].time == t).count();
        for &i in &order[start..end] {
            if outcomes[i].event == e {
                let r = rank(scores[i]);
                let below = later.count_below(r);
                let tied = later.count_below(r + 1) - below;
                half_concordant += 2 * below + tied;
                comparable += inserted;
            }
        }
        for &i in &order[start..end] {
            later.insert(rank(scores[i]));
            inserted += 1;
        }
        start = end;
    }
    if comparable == 0 {
        return Err(Error::UndefinedCIndex);
    }
    Ok(half_concordant as f64 / (2 * comparable) as f64)
}

/// AUROC of `scores` (typically `CIF_e(tau)`) against the label
/// `T <= tau and event == e`, via the Mann-Whitney U statistic.
pub fn horizon_auroc(
    scores: &[f64],
    outcomes: &[Outcome],
    e: usize,
    tau: f64,
    negatives: AurocNegatives,
) -> Result<f64> {
    check_inputs(scores, outcomes)?;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, o) in scores.iter().zip(outcomes) {
        if o.time <= tau && o.event == e {
            pos.push(s);
        } else if negatives == AurocNegatives::AllOthers || !(o.event == 0 && o.time < tau) {
            neg.push(s);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedAuroc);
    }
    neg.sort_by(f64::total_cmp);
    let mut half_u = 0u64;
    for &s in &pos {
        let below = neg.partition_point(|&v| v < s) as u64;
        let not_above = neg.partition_point(|&v| v <= s) as u64;
        half_u += 2 * below + (not_above - below);
    }
    Ok(half_u as f64 / (2 * pos.len() as u64 * neg.len() as u64) as f64)
}

/// A metric value or the reason it is undefined.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Value(f64),
    Undefined(String),
}

impl MetricValue {
    fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) => MetricValue::Value(v),
            Err(e) => MetricValue::Undefined(e.to_string()),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(*v),
            MetricValue::Undefined(_) => None,
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Value(v) => write!(f, "{v}"),
            MetricValue::Undefined(_) => f.write_str("NA"),
        }
    }
}

/// Per-event C-index and horizon AUROC.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub tau: f64,
    pub cindex: Vec<MetricValue>,
    pub auroc: Vec<MetricValue>,
}

impl EvaluationReport {
    pub fn compute(
        curves: &[CifCurve],
        grid: &TimeGrid,
        outcomes: &[Outcome],
        tau: f64,
        negatives: AurocNegatives,
    ) -> Result<Self> {
        let n_events = curves.first().map_or(0, CifCurve::n_events);
        let risk = RiskScores::from_curves(curves);
        let at_tau = curves
            .iter()
            .map(|c| c.at(grid, tau))
            .collect::<Result<Vec<_>>>()?;
        let mut cindex = Vec::with_capacity(n_events);
        let mut auroc = Vec::with_capacity(n_events);
        for e in 1..=n_events {
            cindex.push(MetricValue::from_result(cause_specific_cindex(risk.event(e), outcomes, e)));
            let cif_tau: Vec<f64> = at_tau.iter().map(|v| v[e - 1]).collect();
            auroc.push(MetricValue::from_result(horizon_auroc(&cif_tau, outcomes, e, tau, negatives)));
        }
        Ok(EvaluationReport { tau, cindex, auroc })
    }

    /// `key=value` lines: `cindex_<e>` and `auroc_<e>@<tau>`.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        for (i, (c, a)) in self.cindex.iter().zip(&self.auroc).enumerate() {
            out.push_str(&format!("cindex_{}={c}\n", i + 1));
            out.push_str(&format!("auroc_{}@{}={a}\n", i + 1, self.tau));
        }
        out
    }

    pub fn human(&self) -> String {
        let mut out = format!("{:<8} {:>10} {:>14}\n", "event", "C-index", format!("AUROC@{}", self.tau));
        for (i, (c, a)) in self.cindex.iter().zip(&self.auroc).enumerate() {
            out.push_str(&format!("{:<8} {:>10} {:>14}\n", i + 1, fmt_metric(c), fmt_metric(a)));
        }
        for (i, (c, a)) in self.cindex.iter().zip(&self.auroc).enumerate() {
            for (name, m) in [("C-index", c), ("AUROC", a)] {
                if let MetricValue::Undefined(reason) = m {
                    out.push_str(&format!("note: event {} {name} is NA: {reason}\n", i + 1));
                }
            }
        }
        out
    }
}

fn fmt_metric(m: &MetricValue) -> String {
    match m {
        MetricValue::Value(v) => format!("{v:.4}"),
        MetricValue::Undefined(_) => "NA".into(),
    }
}
