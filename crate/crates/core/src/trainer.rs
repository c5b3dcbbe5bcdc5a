//! Adam training loop with validation-based model selection, and the
//! on-disk model bundle.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureEncoding, SubjectRecord, TimeGrid};
use crate::encoder::EncoderNet;
use crate::error::{Error, Result};
use crate::mtlr::{MtlrHead, Observation, PredictionGrid};
use crate::model::SurvivalModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchSize {
    Full,
    #[serde(untagged)]
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Ridge strength on the MTLR weights.
    pub c1_head: f64,
    /// Ridge strength on the encoder weights.
    pub c2_encoder: f64,
    /// Strength of the penalty on differences between adjacent-interval
    /// head weights; 0 disables it.
    #[serde(default)]
    pub c_smooth: f64,
    pub max_epochs: usize,
    pub batch_size: BatchSize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            c1_head: 0.0,
            c2_encoder: 0.0,
            c_smooth: 0.0,
            max_epochs: 100,
            batch_size: BatchSize::Full,
            seed: 0,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.c1_head >= 0.0 && self.c2_encoder >= 0.0 && self.c_smooth >= 0.0) {
            return Err(Error::InvalidArgument("regularization strengths must be >= 0".into()));
        }
        if self.patience < 1 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        if self.batch_size == BatchSize::Fixed(0) {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: grads.len(),
            context: "adam parameters vs gradient",
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Regularized training objective after the epoch.
    pub train_loss: f64,
    /// Mean validation negative log-likelihood after the epoch.
    pub valid_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: SurvivalModel,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub final_epoch: usize,
    /// Epoch 0 is the initial model.
    pub history: Vec<EpochLog>,
}

/// Training objective: the model loss plus the optional smoothness term.
pub fn objective(model: &SurvivalModel, cohort: &[Observation], config: &TrainConfig) -> Result<f64> {
    let base = model.loss(cohort, config.c1_head, config.c2_encoder)?;
    Ok(base + 0.5 * config.c_smooth * model.head.difference_penalty())
}

pub fn objective_and_gradient(
    model: &SurvivalModel,
    cohort: &[Observation],
    config: &TrainConfig,
) -> Result<(f64, SurvivalModel)> {
    let (loss, mut grad) = model.loss_and_gradient(cohort, config.c1_head, config.c2_encoder)?;
    if config.c_smooth > 0.0 {
        model.head.add_difference_gradient(config.c_smooth, &mut grad.head);
    }
    Ok((loss + 0.5 * config.c_smooth * model.head.difference_penalty(), grad))
}

fn mean_nll(model: &SurvivalModel, cohort: &[Observation]) -> Result<f64> {
    Ok(-model.log_likelihood(cohort)? / cohort.len() as f64)
}

/// Runs Adam on the regularized mean NLL and returns the best-validation
/// parameters. Deterministic for a given seed.
pub fn train(
    initial: SurvivalModel,
    train_set: &[Observation],
    valid_set: &[Observation],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation cohorts must be non-empty".into()));
    }
    let mut model = initial;
    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batch = match config.batch_size {
        BatchSize::Full => train_set.len(),
        BatchSize::Fixed(b) => b.min(train_set.len()),
    };

    let check = |epoch: usize, loss: f64| {
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::Divergence { epoch, loss })
        }
    };

    let mut history = vec![EpochLog {
        epoch: 0,
        train_loss: check(0, objective(&model, train_set, config)?)?,
        valid_loss: check(0, mean_nll(&model, valid_set)?)?,
    }];
    let mut best = (model.clone(), 0, history[0].valid_loss);
    let mut final_epoch = 0;

    for epoch in 1..=config.max_epochs {
        if batch < train_set.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (_, grad) = if batch == train_set.len() {
                objective_and_gradient(&model, train_set, config)?
            } else {
                let mb: Vec<Observation> = chunk.iter().map(|&i| train_set[i].clone()).collect();
                objective_and_gradient(&model, &mb, config)?
            };
            adam_step(&mut params, &grad.params(), &mut adam, config.learning_rate)?;
            model.set_params(&params)?;
        }
        let log = EpochLog {
            epoch,
            train_loss: check(epoch, objective(&model, train_set, config)?)?,
            valid_loss: check(epoch, mean_nll(&model, valid_set)?)?,
        };
        history.push(log);
        final_epoch = epoch;
        if log.valid_loss < best.2 {
            best = (model.clone(), epoch, log.valid_loss);
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        model: best.0,
        best_epoch: best.1,
        best_valid_loss: best.2,
        final_epoch,
        history,
    })
}

/// Encoder layout for a fresh model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Architecture {
    /// Identity encoder: plain linear MTLR on the encoded features.
    Linear,
    /// ReLU hidden layers of the given widths.
    Deep { hidden: Vec<usize> },
}

impl Architecture {
    /// Three ReLU layers of width 128.
    pub fn default_deep() -> Self {
        Architecture::Deep { hidden: vec![128; 3] }
    }

    pub fn build(&self, input_dim: usize, n_events: usize, n_intervals: usize, seed: u64) -> Result<SurvivalModel> {
        match self {
            Architecture::Linear => SurvivalModel::linear(input_dim, n_events, n_intervals),
            Architecture::Deep { hidden } => SurvivalModel::deep(input_dim, hidden, n_events, n_intervals, seed),
        }
    }
}

/// Turns records into likelihood observations on `grid`.
pub fn observations(records: &[SubjectRecord], grid: &TimeGrid) -> Result<Vec<Observation>> {
    records
        .iter()
        .map(|r| Ok(Observation::new(r.features.clone(), r.event, grid.bin(r.time)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub architecture: Architecture,
    pub config: TrainConfig,
    pub final_epoch: usize,
    pub best_epoch: usize,
    pub validation_loss: f64,
}

/// Everything needed to predict on raw data: grid, encoding and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub grid: TimeGrid,
    pub encoding: FeatureEncoding,
    pub model: SurvivalModel,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format_version: u32,
    grid: TimeGrid,
    encoding: FeatureEncoding,
    encoder: EncoderNet,
    head: MtlrHead,
    meta: TrainingMeta,
}

/// Trains a fresh model of the given architecture and wraps it with the grid
/// and encoding it was fitted against.
pub fn train_bundle(
    grid: TimeGrid,
    encoding: FeatureEncoding,
    train_records: &[SubjectRecord],
    valid_records: &[SubjectRecord],
    architecture: Architecture,
    config: &TrainConfig,
) -> Result<(ModelBundle, Vec<EpochLog>)> {
    let initial = architecture.build(encoding.dim(), encoding.n_events, grid.n_intervals(), config.seed)?;
    let train_obs = observations(train_records, &grid)?;
    let valid_obs = observations(valid_records, &grid)?;
    let outcome = train(initial, &train_obs, &valid_obs, config)?;
    let bundle = ModelBundle::new(
        grid,
        encoding,
        outcome.model,
        TrainingMeta {
            architecture,
            config: config.clone(),
            final_epoch: outcome.final_epoch,
            best_epoch: outcome.best_epoch,
            validation_loss: outcome.best_valid_loss,
        },
    )?;
    Ok((bundle, outcome.history))
}

impl ModelBundle {
    pub fn new(grid: TimeGrid, encoding: FeatureEncoding, model: SurvivalModel, meta: TrainingMeta) -> Result<Self> {
        let bundle = ModelBundle {
            grid,
            encoding,
            model,
            meta,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    fn validate(&self) -> Result<()> {
        let checks = [
            (self.encoding.dim(), self.model.encoder.input_dim(), "encoding width vs encoder input"),
            (self.model.encoder.output_dim(), self.model.head.input_dim(), "encoder output vs head input"),
            (self.grid.n_intervals(), self.model.head.n_intervals(), "grid intervals vs head intervals"),
            (self.encoding.n_events, self.model.head.n_events(), "encoding events vs head events"),
        ];
        for (expected, got, context) in checks {
            if expected != got {
                return Err(Error::DimensionMismatch {
                    expected,
                    got,
                    context,
                });
            }
        }
        Ok(())
    }

    pub fn n_events(&self) -> usize {
        self.model.head.n_events()
    }

    /// Joint PMF for one encoded feature vector.
    pub fn predict(&self, features: &[f64]) -> Result<PredictionGrid> {
        self.model.predict(features)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BundleFile {
            format_version: FORMAT_VERSION,
            grid: self.grid.clone(),
            encoding: self.encoding.clone(),
            encoder: self.model.encoder.clone(),
            head: self.model.head.clone(),
            meta: self.meta.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BundleFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let model = SurvivalModel::new(file.encoder, file.head)?;
        ModelBundle::new(file.grid, file.encoding, model, file.meta)
    }

    /// Writes the bundle atomically (temp file in the same directory, then
    /// rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelBundle::from_json(&text)
    }
}

/// Writes `bytes` to `path` via a sibling temp file and rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
