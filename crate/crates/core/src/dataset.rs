//! Tabular survival data: records, feature encoding, CSV ingestion and the
//! discrete time grid.
//!
//! The time axis is cut into `K` intervals `c_k = (t_{k-1}, t_k]` with
//! `t_0 = 0` and `t_K = +inf`. Only the interior edges `t_1 .. t_{K-1}` are
//! stored. Interval indices are 1-based throughout the crate.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::FusedInput;
use crate::error::{Error, Result};

/// One observed subject after feature encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// Follow-up time in years.
    pub time: f64,
    /// 0 = censored, otherwise the 1-based cause of the event.
    pub event: usize,
    pub features: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, time: f64, event: usize, features: Vec<f64>) -> Result<Self> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "follow-up time must be finite and non-negative, got {time}"
            )));
        }
        Ok(SubjectRecord {
            id: id.into(),
            time,
            event,
            features,
        })
    }

    pub fn is_censored(&self) -> bool {
        self.event == 0
    }
}

/// How interior edges are placed by [`build_grid_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSpacing {
    /// Empirical quantiles of the uncensored event times.
    #[default]
    Quantile,
    /// Equal-width intervals up to the largest uncensored event time.
    Uniform,
}

/// Interior interval edges `t_1 < ... < t_{K-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct TimeGrid {
    edges: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    edges: Vec<f64>,
}

impl TryFrom<GridRepr> for TimeGrid {
    type Error = Error;

    fn try_from(repr: GridRepr) -> Result<Self> {
        TimeGrid::new(repr.edges)
    }
}

impl From<TimeGrid> for GridRepr {
    fn from(grid: TimeGrid) -> Self {
        GridRepr { edges: grid.edges }
    }
}

impl TimeGrid {
    /// Builds a grid from explicit interior edges. At least one edge is
    /// required (K >= 2); edges must be finite, positive and strictly
    /// increasing.
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidArgument(
                "a time grid needs at least one interior edge (K >= 2)".into(),
            ));
        }
        if edges.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Error::InvalidArgument(
                "grid edges must be finite and strictly positive".into(),
            ));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "grid edges must be strictly increasing".into(),
            ));
        }
        Ok(TimeGrid { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Number of intervals `K` (one more than the number of edges).
    pub fn n_intervals(&self) -> usize {
        self.edges.len() + 1
    }

    /// Maps a time to its 1-based interval index in `1..=K`.
    ///
    /// Intervals are closed on the right, so an edge `t_k` maps to `k`.
    /// `t = 0` maps to interval 1 and anything beyond the last edge to `K`.
    pub fn bin(&self, t: f64) -> Result<usize> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "cannot bin negative time {t}"
            )));
        }
        Ok(self.edges.partition_point(|&edge| edge < t) + 1)
    }
}

/// Default interval count: `sqrt(n)` rounded half up, never below 2.
pub fn default_interval_count(n_train: usize) -> usize {
    let k = ((n_train as f64).sqrt() + 0.5).floor() as usize;
    k.max(2)
}

/// Linear-interpolation sample quantile (the "type 7" rule) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Builds a quantile grid. See [`build_grid_with`].
pub fn build_grid(train: &[SubjectRecord], k: Option<usize>) -> Result<TimeGrid> {
    build_grid_with(train, k, GridSpacing::Quantile)
}

/// Places `K - 1` interior edges from the uncensored event times of `train`.
///
/// When `k` is `None`, `K = round(sqrt(train.len()))`. Duplicate (or
/// non-positive) candidate edges are merged, which lowers `K`.
pub fn build_grid_with(
    train: &[SubjectRecord],
    k: Option<usize>,
    spacing: GridSpacing,
) -> Result<TimeGrid> {
    if let Some(k) = k {
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "interval count must be at least 2, got {k}"
            )));
        }
    }
    let mut times: Vec<f64> = train
        .iter()
        .filter(|r| !r.is_censored())
        .map(|r| r.time)
        .collect();
    if times.is_empty() {
        return Err(Error::NoEvents);
    }
    times.sort_by(f64::total_cmp);
    let k = k.unwrap_or_else(|| default_interval_count(train.len()));

    let candidates: Vec<f64> = match spacing {
        GridSpacing::Quantile => (1..k)
            .map(|i| quantile_sorted(&times, i as f64 / k as f64))
            .collect(),
        GridSpacing::Uniform => {
            let t_max = times[times.len() - 1];
            (1..k).map(|i| t_max * i as f64 / k as f64).collect()
        }
    };

    let mut edges: Vec<f64> = Vec::with_capacity(candidates.len());
    for t in candidates {
        if t > 0.0 && edges.last().is_none_or(|&last| t > last) {
            edges.push(t);
        }
    }
    if edges.is_empty() {
        return Err(Error::InvalidArgument(
            "event times leave no positive grid edge".into(),
        ));
    }
    TimeGrid::new(edges)
}

/// Declared type of a feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// One-hot encoded.
    Categorical,
    /// Standardized with training mean and standard deviation.
    Continuous,
    /// Precomputed image feature, passed through unnormalized into the
    /// image block of the fused input.
    Image,
}

impl std::str::FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "categorical" => Ok(ColumnKind::Categorical),
            "continuous" => Ok(ColumnKind::Continuous),
            "image" => Ok(ColumnKind::Image),
            other => Err(Error::Schema(format!("unknown column kind `{other}`"))),
        }
    }
}

pub const ID_COLUMN: &str = "id";
pub const TIME_COLUMN: &str = "time";
pub const EVENT_COLUMN: &str = "event";

/// Feature column declarations, in file order.
///
/// The text form is one `column = categorical|continuous|image` line per
/// feature. `#` starts a comment. The optional directive `!events = E` pins
/// the number of competing events; otherwise it is inferred from the data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    pub columns: Vec<(String, ColumnKind)>,
    pub n_events: Option<usize>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut schema = Schema::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Schema(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key == "!events" {
                let e: usize = value.parse().map_err(|_| {
                    Error::Schema(format!("line {}: bad event count `{value}`", lineno + 1))
                })?;
                if e == 0 {
                    return Err(Error::Schema("event count must be at least 1".into()));
                }
                schema.n_events = Some(e);
                continue;
            }
            if [ID_COLUMN, TIME_COLUMN, EVENT_COLUMN].contains(&key) {
                return Err(Error::Schema(format!(
                    "line {}: `{key}` is reserved and cannot be a feature",
                    lineno + 1
                )));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::Schema(format!("duplicate column `{key}`")));
            }
            schema.columns.push((key.to_string(), value.parse()?));
        }
        Ok(schema)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text)
    }
}

/// A row as read from disk, before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub id: String,
    pub time: Option<f64>,
    pub event: Option<usize>,
    /// Raw cell text for each schema column, in schema order.
    pub values: Vec<String>,
    /// Every cell of the row keyed by header, for auxiliary columns.
    pub extra: BTreeMap<String, String>,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Reads a CSV with a header row. `time` and `event` are mandatory when
/// `require_labels` is set; otherwise they are read if present.
pub fn read_table(path: impl AsRef<Path>, schema: &Schema, require_labels: bool) -> Result<Vec<RawRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table_from(file, schema, require_labels)
}

pub fn read_table_from<R: std::io::Read>(
    reader: R,
    schema: &Schema,
    require_labels: bool,
) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let position = |name: &str| headers.iter().position(|h| h == name);
    let id_col = position(ID_COLUMN).ok_or_else(|| Error::MissingColumn(ID_COLUMN.into()))?;
    let time_col = position(TIME_COLUMN);
    let event_col = position(EVENT_COLUMN);
    if require_labels {
        if time_col.is_none() {
            return Err(Error::MissingColumn(TIME_COLUMN.into()));
        }
        if event_col.is_none() {
            return Err(Error::MissingColumn(EVENT_COLUMN.into()));
        }
    }
    let feature_cols = schema
        .columns
        .iter()
        .map(|(name, _)| position(name).ok_or_else(|| Error::MissingColumn(name.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        let cell = |col: usize| record.get(col).unwrap_or("");
        let time = match time_col {
            Some(col) => {
                let t: f64 = cell(col).parse().map_err(|_| Error::BadValue {
                    row: line,
                    column: TIME_COLUMN.into(),
                    message: format!("`{}` is not a number", cell(col)),
                })?;
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::BadValue {
                        row: line,
                        column: TIME_COLUMN.into(),
                        message: format!("time must be finite and non-negative, got {t}"),
                    });
                }
                Some(t)
            }
            None => None,
        };
        let event = match event_col {
            Some(col) => Some(cell(col).parse::<usize>().map_err(|_| Error::BadValue {
                row: line,
                column: EVENT_COLUMN.into(),
                message: format!("`{}` is not a non-negative integer", cell(col)),
            })?),
            None => None,
        };
        rows.push(RawRow {
            line,
            id: cell(id_col).to_string(),
            time,
            event,
            values: feature_cols.iter().map(|&c| cell(c).to_string()).collect(),
            extra: headers
                .iter()
                .zip(record.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect(),
        });
    }
    Ok(rows)
}

const MISSING_LEVEL: &str = "<missing>";

/// Fitted encoding for one feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnEncoding {
    Categorical { name: String, levels: Vec<String> },
    Continuous { name: String, mean: f64, std: f64 },
    Image { name: String, mean: f64 },
}

impl ColumnEncoding {
    pub fn name(&self) -> &str {
        match self {
            ColumnEncoding::Categorical { name, .. }
            | ColumnEncoding::Continuous { name, .. }
            | ColumnEncoding::Image { name, .. } => name,
        }
    }

    fn width(&self) -> usize {
        match self {
            ColumnEncoding::Categorical { levels, .. } => levels.len(),
            _ => 1,
        }
    }
}

/// Training-fitted feature encoding: one-hot for categorical columns,
/// z-scores for continuous ones, passthrough for image features.
///
/// Clinical columns come first in the encoded vector, image columns last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    pub columns: Vec<ColumnEncoding>,
    pub n_events: usize,
}

fn parse_numeric(row: &RawRow, name: &str, cell: &str) -> Result<Option<f64>> {
    if is_missing(cell) {
        return Ok(None);
    }
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::BadValue {
            row: row.line,
            column: name.to_string(),
            message: format!("`{cell}` is not a finite number"),
        }),
    }
}

impl FeatureEncoding {
    /// Fits column statistics on training rows only.
    pub fn fit(schema: &Schema, rows: &[RawRow]) -> Result<Self> {
        let mut columns = Vec::with_capacity(schema.columns.len());
        for (c, (name, kind)) in schema.columns.iter().enumerate() {
            let enc = match kind {
                ColumnKind::Categorical => {
                    let levels: BTreeSet<String> = rows
                        .iter()
                        .map(|r| {
                            let v = r.values[c].trim();
                            if is_missing(v) {
                                MISSING_LEVEL.to_string()
                            } else {
                                v.to_string()
                            }
                        })
                        .collect();
                    ColumnEncoding::Categorical {
                        name: name.clone(),
                        levels: levels.into_iter().collect(),
                    }
                }
                ColumnKind::Continuous | ColumnKind::Image => {
                    let mut vals = Vec::with_capacity(rows.len());
                    for r in rows {
                        if let Some(v) = parse_numeric(r, name, &r.values[c])? {
                            vals.push(v);
                        }
                    }
                    let n = vals.len().max(1) as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    if *kind == ColumnKind::Image {
                        ColumnEncoding::Image {
                            name: name.clone(),
                            mean,
                        }
                    } else {
                        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        let std = var.sqrt();
                        ColumnEncoding::Continuous {
                            name: name.clone(),
                            mean,
                            std: if std > 0.0 { std } else { 1.0 },
                        }
                    }
                }
            };
            columns.push(enc);
        }
        let observed_max = rows.iter().filter_map(|r| r.event).max().unwrap_or(0);
        let n_events = match schema.n_events {
            Some(e) => e,
            None => observed_max.max(1),
        };
        let enc = FeatureEncoding { columns, n_events };
        for r in rows {
            enc.check_event(r)?;
        }
        Ok(enc)
    }

    /// Encoding that leaves `dim` already-numeric features untouched
    /// (columns `x1..xd`, mean 0, std 1).
    pub fn passthrough(dim: usize, n_events: usize) -> Self {
        FeatureEncoding {
            columns: (1..=dim)
                .map(|i| ColumnEncoding::Continuous {
                    name: format!("x{i}"),
                    mean: 0.0,
                    std: 1.0,
                })
                .collect(),
            n_events,
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.iter().map(ColumnEncoding::width).sum()
    }

    pub fn image_dim(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| matches!(c, ColumnEncoding::Image { .. }))
            .count()
    }

    pub fn clinical_dim(&self) -> usize {
        self.dim() - self.image_dim()
    }

    fn check_event(&self, row: &RawRow) -> Result<()> {
        match row.event {
            Some(e) if e > self.n_events => Err(Error::BadValue {
                row: row.line,
                column: EVENT_COLUMN.into(),
                message: format!("event {e} outside 0..={}", self.n_events),
            }),
            _ => Ok(()),
        }
    }

    /// Encodes one row into its clinical and image blocks. The row's cells
    /// must follow the column order this encoding was fitted with.
    pub fn encode_fused(&self, row: &RawRow) -> Result<FusedInput> {
        if row.values.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: row.values.len(),
                context: "raw row columns",
            });
        }
        let mut clinical = Vec::with_capacity(self.clinical_dim());
        let mut image = Vec::with_capacity(self.image_dim());
        for (col, cell) in self.columns.iter().zip(&row.values) {
            match col {
                ColumnEncoding::Categorical { levels, .. } => {
                    let key = if is_missing(cell) { MISSING_LEVEL } else { cell.trim() };
                    let hit = levels.iter().position(|l| l == key);
                    clinical.extend((0..levels.len()).map(|i| if Some(i) == hit { 1.0 } else { 0.0 }));
                }
                ColumnEncoding::Continuous { name, mean, std } => {
                    let v = parse_numeric(row, name, cell)?.unwrap_or(*mean);
                    clinical.push((v - mean) / std);
                }
                ColumnEncoding::Image { name, mean } => {
                    image.push(parse_numeric(row, name, cell)?.unwrap_or(*mean));
                }
            }
        }
        Ok(FusedInput::new(
            clinical,
            if image.is_empty() { None } else { Some(image) },
        ))
    }

    pub fn encode(&self, row: &RawRow) -> Result<Vec<f64>> {
        Ok(self.encode_fused(row)?.fused())
    }

    /// Encodes labeled rows into records.
    pub fn encode_records(&self, rows: &[RawRow]) -> Result<Vec<SubjectRecord>> {
        rows.iter()
            .map(|r| {
                self.check_event(r)?;
                let (time, event) = match (r.time, r.event) {
                    (Some(t), Some(e)) => (t, e),
                    _ => {
                        return Err(Error::BadValue {
                            row: r.line,
                            column: TIME_COLUMN.into(),
                            message: "row has no time/event label".into(),
                        })
                    }
                };
                SubjectRecord::new(r.id.clone(), time, event, self.encode(r)?)
            })
            .collect()
    }
}

/// Reads a labeled CSV and fits the encoding on all of its rows.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<(Vec<SubjectRecord>, FeatureEncoding)> {
    let rows = read_table(path, schema, true)?;
    let encoding = FeatureEncoding::fit(schema, &rows)?;
    let records = encoding.encode_records(&rows)?;
    Ok((records, encoding))
}
