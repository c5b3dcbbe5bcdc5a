//! Encoder and MTLR head composed into one trainable model.

use crate::encoder::EncoderNet;
use crate::error::{Error, Result};
use crate::mtlr::{subject_nll_and_grad, MtlrHead, Observation, PredictionGrid};

/// `MTLR(f(x))`: an encoder (possibly the identity) feeding an MTLR head.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalModel {
    pub encoder: EncoderNet,
    pub head: MtlrHead,
}

/// Which block of the flattened parameter vector an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    HeadWeights,
    HeadBiases,
    EncoderWeights,
    EncoderBiases,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::HeadWeights => "head.weights",
            ParamGroup::HeadBiases => "head.biases",
            ParamGroup::EncoderWeights => "encoder.weights",
            ParamGroup::EncoderBiases => "encoder.biases",
        }
    }
}

impl SurvivalModel {
    pub fn new(encoder: EncoderNet, head: MtlrHead) -> Result<Self> {
        if encoder.output_dim() != head.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: head.input_dim(),
                got: encoder.output_dim(),
                context: "encoder output vs head input",
            });
        }
        Ok(SurvivalModel { encoder, head })
    }

    /// Linear MTLR: identity encoder, zero-initialized head.
    pub fn linear(input_dim: usize, n_events: usize, n_intervals: usize) -> Result<Self> {
        SurvivalModel::new(
            EncoderNet::identity(input_dim),
            MtlrHead::zeros(n_events, n_intervals, input_dim)?,
        )
    }

    /// ReLU encoder with the given hidden widths and a zero-initialized head.
    pub fn deep(
        input_dim: usize,
        hidden: &[usize],
        n_events: usize,
        n_intervals: usize,
        seed: u64,
    ) -> Result<Self> {
        let dims: Vec<usize> = std::iter::once(input_dim).chain(hidden.iter().copied()).collect();
        let encoder = EncoderNet::init(&dims, seed)?;
        let head = MtlrHead::zeros(n_events, n_intervals, encoder.output_dim())?;
        SurvivalModel::new(encoder, head)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn predict(&self, x: &[f64]) -> Result<PredictionGrid> {
        self.head.joint_pmf(&self.encoder.forward(x)?)
    }

    /// Summed log-likelihood of a cohort of raw (pre-encoder) observations.
    pub fn log_likelihood(&self, cohort: &[Observation]) -> Result<f64> {
        let encoded = cohort
            .iter()
            .map(|o| Ok(Observation::new(self.encoder.forward(&o.x)?, o.event, o.bin)))
            .collect::<Result<Vec<_>>>()?;
        crate::mtlr::log_likelihood(&self.head, &encoded)
    }

    /// Mean NLL plus `(c1/2)||theta||^2 + (c2/2)||W_encoder||^2`.
    pub fn loss(&self, cohort: &[Observation], c1: f64, c2: f64) -> Result<f64> {
        if cohort.is_empty() {
            return Err(Error::InvalidArgument("empty cohort".into()));
        }
        let nll = -self.log_likelihood(cohort)? / cohort.len() as f64;
        Ok(nll + 0.5 * c1 * self.head.weight_penalty() + 0.5 * c2 * self.encoder.weight_penalty())
    }

    /// Loss as in [`SurvivalModel::loss`] and its gradient, returned as a
    /// model-shaped value.
    pub fn loss_and_gradient(&self, cohort: &[Observation], c1: f64, c2: f64) -> Result<(f64, SurvivalModel)> {
        if cohort.is_empty() {
            return Err(Error::InvalidArgument("empty cohort".into()));
        }
        if !(c1 >= 0.0 && c2 >= 0.0) {
            return Err(Error::InvalidArgument("regularization strengths must be >= 0".into()));
        }
        let head = &self.head;
        let (n_events, n_intervals, d) = (head.n_events(), head.n_intervals(), head.input_dim());
        let mut head_grad = MtlrHead::zeros(n_events, n_intervals, d)?;
        let mut enc_grad = self.encoder.zeros_like();
        let scale = 1.0 / cohort.len() as f64;
        let mut nll = 0.0;

        for obs in cohort {
            if obs.event > n_events || !(1..=n_intervals).contains(&obs.bin) {
                return Err(Error::InvalidArgument(format!(
                    "observation (event {}, bin {}) outside the model's range",
                    obs.event, obs.bin
                )));
            }
            let trace = self.encoder.forward_trace(&obs.x)?;
            let z = trace.output();
            let scores = head.edge_scores(z)?;
            let (l, g) = subject_nll_and_grad(&scores, n_events, n_intervals, obs.event, obs.bin);
            nll += l;

            let mut dz = vec![0.0; d];
            for (row, &gr) in g.iter().enumerate() {
                let gr = gr * scale;
                head_grad.biases_mut()[row] += gr;
                let theta = &head.weights()[row * d..(row + 1) * d];
                let gw = &mut head_grad.weights_mut()[row * d..(row + 1) * d];
                for j in 0..d {
                    gw[j] += gr * z[j];
                    dz[j] += gr * theta[j];
                }
            }
            if !self.encoder.is_identity() {
                self.encoder.backward_accumulate(&trace, &dz, &mut enc_grad)?;
            }
        }

        for (g, w) in head_grad.weights_mut().iter_mut().zip(head.weights()) {
            *g += c1 * w;
        }
        for (gl, l) in enc_grad.layers_mut().iter_mut().zip(self.encoder.layers()) {
            for (g, w) in gl.weights.iter_mut().zip(&l.weights) {
                *g += c2 * w;
            }
        }
        let loss = nll * scale + 0.5 * c1 * head.weight_penalty() + 0.5 * c2 * self.encoder.weight_penalty();
        Ok((
            loss,
            SurvivalModel {
                encoder: enc_grad,
                head: head_grad,
            },
        ))
    }

    pub fn n_params(&self) -> usize {
        self.head.weights().len() + self.head.biases().len() + self.encoder.n_params()
    }

    /// All parameters flattened: head weights, head biases, then each encoder
    /// layer's weights and bias in order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend_from_slice(self.head.weights());
        out.extend_from_slice(self.head.biases());
        for l in self.encoder.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Group label of every entry of [`SurvivalModel::params`].
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend(std::iter::repeat_n(ParamGroup::HeadWeights, self.head.weights().len()));
        out.extend(std::iter::repeat_n(ParamGroup::HeadBiases, self.head.biases().len()));
        for l in self.encoder.layers() {
            out.extend(std::iter::repeat_n(ParamGroup::EncoderWeights, l.weights.len()));
            out.extend(std::iter::repeat_n(ParamGroup::EncoderBiases, l.bias.len()));
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                got: flat.len(),
                context: "flattened parameters",
            });
        }
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(self.head.weights_mut());
        take(self.head.biases_mut());
        for l in self.encoder.layers_mut() {
            take(&mut l.weights);
            take(&mut l.bias);
        }
        Ok(())
    }
}
