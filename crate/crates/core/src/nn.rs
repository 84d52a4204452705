//! Fully connected network with one biased-sigmoid hidden layer and a
//! softmax output, trained by plain mini-batch SGD on cross-entropy.
//!
//! Weights are stored row-major as `fan_in x fan_out`, so a batch of inputs
//! `X` (`batch x n_in`) maps to hidden pre-activations `X * W1`.

use std::io::{self, Read};

use rayon::prelude::*;
use thiserror::Error;

use crate::dsp::sigmoid;
use crate::linalg::{gemm, Op};
use crate::mnist::Dataset;
use crate::rng;

/// Examples per forward pass during evaluation.
const EVAL_CHUNK: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("non-finite values in {layer} layer")]
    NonFinite { layer: &'static str },
    #[error("numeric failure in batch {batch}: non-finite values in {layer} layer")]
    NumericFailure { batch: usize, layer: &'static str },
    #[error("empty batch")]
    EmptyBatch,
    #[error("input has {got} features, network expects {expected}")]
    InputSize { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: u8, classes: usize },
}

/// Half-width of the uniform weight distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScale {
    /// `1 / sqrt(fan_in)`.
    FanIn,
    Fixed(f64),
}

impl InitScale {
    pub fn for_fan_in(self, fan_in: usize) -> f64 {
        match self {
            InitScale::FanIn => 1.0 / (fan_in as f64).sqrt(),
            InitScale::Fixed(s) => s,
        }
    }
}

impl std::fmt::Display for InitScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitScale::FanIn => f.write_str("fan_in"),
            InitScale::Fixed(s) => write!(f, "{s}"),
        }
    }
}

impl std::str::FromStr for InitScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "fan_in" || s == "default" {
            return Ok(InitScale::FanIn);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(InitScale::Fixed(v)),
            _ => Err(format!("init scale must be `fan_in` or a positive number, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// `(inputs, hidden units, classes)`.
    pub layer_sizes: [usize; 3],
    pub beta: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_trainable_bias: bool,
    /// Scale of the hidden-layer weights. The output layer always uses
    /// `1 / sqrt(fan_in)`.
    pub init_scale: InitScale,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            layer_sizes: [784, 784, 10],
            beta: 0.0,
            seed: 42,
            learning_rate: 0.1,
            batch_size: 100,
            hidden_trainable_bias: false,
            init_scale: InitScale::FanIn,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.layer_sizes.contains(&0) {
            return Err(NetError::Config(format!(
                "layer sizes must be positive: {:?}",
                self.layer_sizes
            )));
        }
        if !self.beta.is_finite() {
            return Err(NetError::Config(format!("beta must be finite, got {}", self.beta)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(NetError::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NetError::Config("batch size must be positive".into()));
        }
        if let InitScale::Fixed(s) = self.init_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(NetError::Config(format!("init scale must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn n_in(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_hidden(&self) -> usize {
        self.layer_sizes[1]
    }

    pub fn n_out(&self) -> usize {
        self.layer_sizes[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// `n_in x n_hidden`.
    pub w1: Vec<f64>,
    /// Hidden bias; stays zero unless `hidden_trainable_bias` is set.
    /// The fixed `beta` is never folded into it.
    pub b1: Vec<f64>,
    /// `n_hidden x n_out`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub config: NetworkConfig,
}

/// Draws `W1` then `W2` from the seed's init stream. The result does not
/// depend on `beta`, learning rate or batch size.
pub fn init_network(cfg: &NetworkConfig) -> Result<Network, NetError> {
    cfg.validate()?;
    let [n_in, n_hidden, n_out] = cfg.layer_sizes;
    let mut stream = rng::init_stream(cfg.seed);
    let s1 = cfg.init_scale.for_fan_in(n_in);
    let w1 = (0..n_in * n_hidden).map(|_| rng::symmetric(&mut stream, s1)).collect();
    let s2 = InitScale::FanIn.for_fan_in(n_hidden);
    let w2 = (0..n_hidden * n_out).map(|_| rng::symmetric(&mut stream, s2)).collect();
    Ok(Network {
        w1,
        b1: vec![0.0; n_hidden],
        w2,
        b2: vec![0.0; n_out],
        config: *cfg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Activations of one forward pass over `rows` examples.
struct BatchForward {
    rows: usize,
    hidden: Vec<f64>,
    probs: Vec<f64>,
    /// Per-example `-ln p[label]` when labels were supplied.
    log_probs: Vec<f64>,
}

fn softmax_rows(logits: &mut [f64], n_out: usize) -> Vec<f64> {
    let mut log_norm = Vec::with_capacity(logits.len() / n_out);
    for row in logits.chunks_exact_mut(n_out) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
        log_norm.push(max + sum.ln());
    }
    log_norm
}

impl Network {
    pub fn beta(&self) -> f64 {
        self.config.beta
    }

    fn check_input(&self, inputs: &[f64], rows: usize) -> Result<(), NetError> {
        let expected = self.config.n_in();
        if rows == 0 {
            return Err(NetError::EmptyBatch);
        }
        if inputs.len() != rows * expected {
            return Err(NetError::InputSize {
                expected,
                got: inputs.len() / rows,
            });
        }
        Ok(())
    }

    fn forward_batch(&self, inputs: &[f64], rows: usize, labels: Option<&[u8]>) -> Result<BatchForward, NetError> {
        let [n_in, n_hidden, n_out] = self.config.layer_sizes;
        let beta = self.config.beta;

        let mut hidden = vec![0.0; rows * n_hidden];
        gemm(
            rows,
            n_in,
            n_hidden,
            1.0,
            inputs,
            Op::N,
            &self.w1,
            Op::N,
            0.0,
            &mut hidden,
        );
        for row in hidden.chunks_exact_mut(n_hidden) {
            for (h, b) in row.iter_mut().zip(&self.b1) {
                *h = sigmoid(*h + b + beta);
            }
        }
        if hidden.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite { layer: "hidden" });
        }

        let mut probs = vec![0.0; rows * n_out];
        for row in probs.chunks_exact_mut(n_out) {
            row.copy_from_slice(&self.b2);
        }
        gemm(
            rows,
            n_hidden,
            n_out,
            1.0,
            &hidden,
            Op::N,
            &self.w2,
            Op::N,
            1.0,
            &mut probs,
        );
        if probs.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite { layer: "output" });
        }
        let logits_at_label: Vec<f64> = match labels {
            Some(labels) => labels
                .iter()
                .enumerate()
                .map(|(i, &l)| probs[i * n_out + l as usize])
                .collect(),
            None => Vec::new(),
        };
        let log_norm = softmax_rows(&mut probs, n_out);
        let log_probs = logits_at_label.iter().zip(&log_norm).map(|(z, n)| n - z).collect();

        Ok(BatchForward {
            rows,
            hidden,
            probs,
            log_probs,
        })
    }

    /// Hidden activations and class probabilities for one input.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NetError> {
        self.check_input(input, 1)?;
        if input.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite { layer: "input" });
        }
        let out = self.forward_batch(input, 1, None)?;
        Ok((out.hidden, out.probs))
    }

    /// Class probabilities for many inputs (row-major).
    pub fn predict_batch(&self, inputs: &[f64], rows: usize) -> Result<Vec<f64>, NetError> {
        self.check_input(inputs, rows)?;
        Ok(self.forward_batch(inputs, rows, None)?.probs)
    }

    fn check_labels(&self, labels: &[u8]) -> Result<(), NetError> {
        let classes = self.config.n_out();
        match labels.iter().find(|&&l| l as usize >= classes) {
            Some(&label) => Err(NetError::Label { label, classes }),
            None => Ok(()),
        }
    }

    /// Mean cross-entropy over the batch and its gradients.
    ///
    /// The hidden derivative is `y (1 - y)`, which already accounts for
    /// `beta` through `y`.
    pub fn loss_and_gradients(&self, inputs: &[f64], labels: &[u8]) -> Result<(f64, Gradients), NetError> {
        let rows = labels.len();
        self.check_input(inputs, rows)?;
        self.check_labels(labels)?;
        let fwd = self.forward_batch(inputs, rows, Some(labels))?;
        Ok(self.backward(inputs, labels, fwd))
    }

    fn backward(&self, inputs: &[f64], labels: &[u8], fwd: BatchForward) -> (f64, Gradients) {
        let [n_in, n_hidden, n_out] = self.config.layer_sizes;
        let rows = fwd.rows;
        let inv = 1.0 / rows as f64;
        let loss = fwd.log_probs.iter().sum::<f64>() * inv;

        let mut delta_out = fwd.probs;
        for (i, &l) in labels.iter().enumerate() {
            delta_out[i * n_out + l as usize] -= 1.0;
        }
        delta_out.iter_mut().for_each(|d| *d *= inv);

        let mut b2 = vec![0.0; n_out];
        for row in delta_out.chunks_exact(n_out) {
            for (g, d) in b2.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut w2 = vec![0.0; n_hidden * n_out];
        gemm(
            n_hidden,
            rows,
            n_out,
            1.0,
            &fwd.hidden,
            Op::T,
            &delta_out,
            Op::N,
            0.0,
            &mut w2,
        );

        let mut delta_hidden = vec![0.0; rows * n_hidden];
        gemm(
            rows,
            n_out,
            n_hidden,
            1.0,
            &delta_out,
            Op::N,
            &self.w2,
            Op::T,
            0.0,
            &mut delta_hidden,
        );
        for (d, y) in delta_hidden.iter_mut().zip(&fwd.hidden) {
            *d *= y * (1.0 - y);
        }

        let b1 = if self.config.hidden_trainable_bias {
            let mut b1 = vec![0.0; n_hidden];
            for row in delta_hidden.chunks_exact(n_hidden) {
                for (g, d) in b1.iter_mut().zip(row) {
                    *g += d;
                }
            }
            b1
        } else {
            vec![0.0; n_hidden]
        };
        let mut w1 = vec![0.0; n_in * n_hidden];
        gemm(
            n_in,
            rows,
            n_hidden,
            1.0,
            inputs,
            Op::T,
            &delta_hidden,
            Op::N,
            0.0,
            &mut w1,
        );

        (loss, Gradients { w1, b1, w2, b2 })
    }

    fn apply(&mut self, grads: &Gradients) {
        let lr = self.config.learning_rate;
        let step = |params: &mut [f64], g: &[f64]| {
            for (p, g) in params.iter_mut().zip(g) {
                *p -= lr * g;
            }
        };
        step(&mut self.w1, &grads.w1);
        if self.config.hidden_trainable_bias {
            step(&mut self.b1, &grads.b1);
        }
        step(&mut self.w2, &grads.w2);
        step(&mut self.b2, &grads.b2);
    }

    fn non_finite_layer(&self) -> Option<&'static str> {
        let bad = |v: &[f64]| v.iter().any(|x| !x.is_finite());
        if bad(&self.w1) || bad(&self.b1) {
            Some("hidden")
        } else if bad(&self.w2) || bad(&self.b2) {
            Some("output")
        } else {
            None
        }
    }

    /// Predicted class (argmax, lowest index on ties) for every example.
    pub fn classify(&self, data: &Dataset) -> Result<Vec<u8>, NetError> {
        let n_in = self.config.n_in();
        let n_out = self.config.n_out();
        let chunks: Vec<Vec<u8>> = data
            .vectors()
            .par_chunks(EVAL_CHUNK * n_in)
            .map(|chunk| {
                let rows = chunk.len() / n_in;
                let probs = self.predict_batch(chunk, rows)?;
                Ok(probs.chunks_exact(n_out).map(argmax).collect())
            })
            .collect::<Result<_, NetError>>()?;
        Ok(chunks.concat())
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(row: &[f64]) -> u8 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best as u8
}

/// A network plus the number of completed epochs. The shuffle order of the
/// next epoch is derived from `(seed, epoch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub network: Network,
    pub epoch: u64,
}

impl TrainState {
    pub fn new(network: Network) -> Self {
        Self { network, epoch: 0 }
    }
}

/// One full sweep over `train` in the epoch's shuffled order. The final
/// batch may be smaller than `batch_size`.
pub fn sgd_epoch(mut state: TrainState, train: &Dataset) -> Result<TrainState, NetError> {
    if train.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let cfg = state.network.config;
    let n_in = cfg.n_in();
    if train.vectors().len() != train.len() * n_in {
        return Err(NetError::InputSize {
            expected: n_in,
            got: train.vectors().len() / train.len(),
        });
    }
    let order = rng::epoch_order(cfg.seed, state.epoch, train.len());
    let mut inputs = Vec::with_capacity(cfg.batch_size * n_in);
    let mut labels = Vec::with_capacity(cfg.batch_size);

    for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
        inputs.clear();
        labels.clear();
        for &i in idx {
            inputs.extend_from_slice(train.vector(i));
            labels.push(train.labels()[i]);
        }
        let failure = |e: NetError| match e {
            NetError::NonFinite { layer } => NetError::NumericFailure { batch, layer },
            other => other,
        };
        let (_, grads) = state.network.loss_and_gradients(&inputs, &labels).map_err(failure)?;
        state.network.apply(&grads);
        if let Some(layer) = state.network.non_finite_layer() {
            return Err(NetError::NumericFailure { batch, layer });
        }
    }
    state.epoch += 1;
    Ok(state)
}

/// Fraction of examples whose predicted class differs from the label.
pub fn evaluate(net: &Network, test: &Dataset) -> Result<f64, NetError> {
    if test.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let predicted = net.classify(test)?;
    let wrong = predicted.iter().zip(test.labels()).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / test.len() as f64)
}

// Checkpoint layout (all integers and floats little-endian):
//
//   b"DEMODNET"  u32 version
//   u32 n_in  u32 n_hidden  u32 n_out
//   u64 seed  f64 beta  u8 hidden_trainable_bias
//   W1 (n_in*n_hidden) [b1 (n_hidden) if the flag is set] W2 (n_hidden*n_out) b2 (n_out)
pub const CHECKPOINT_TAG: &[u8; 8] = b"DEMODNET";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad format tag)")]
    BadTag,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint has {0} trailing bytes")]
    Trailing(usize),
    #[error("invalid checkpoint: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_checkpoint(net: &Network) -> Vec<u8> {
    let cfg = &net.config;
    let mut out = Vec::with_capacity(41 + 8 * (net.w1.len() + net.b1.len() + net.w2.len() + net.b2.len()));
    out.extend_from_slice(CHECKPOINT_TAG);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for s in cfg.layer_sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.extend_from_slice(&cfg.beta.to_le_bytes());
    out.push(cfg.hidden_trainable_bias as u8);
    let mut put = |v: &[f64]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    put(&net.w1);
    if cfg.hidden_trainable_bias {
        put(&net.b1);
    }
    put(&net.w2);
    put(&net.b2);
    out
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.0.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let bytes = n.checked_mul(8).ok_or(CheckpointError::Truncated)?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decodes a checkpoint. Fields not stored in the file (learning rate,
/// batch size, init scale) take their defaults.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Network, CheckpointError> {
    let mut cur = Cursor(bytes);
    if cur.take(8).map_err(|_| CheckpointError::BadTag)? != CHECKPOINT_TAG {
        return Err(CheckpointError::BadTag);
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let layer_sizes = [cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize];
    let seed = cur.u64()?;
    let beta = f64::from_bits(cur.u64()?);
    let hidden_trainable_bias = match cur.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(CheckpointError::Invalid(format!("bias flag {b}"))),
    };
    let config = NetworkConfig {
        layer_sizes,
        beta,
        seed,
        hidden_trainable_bias,
        ..NetworkConfig::default()
    };
    config.validate().map_err(|e| CheckpointError::Invalid(e.to_string()))?;
    let [n_in, n_hidden, n_out] = layer_sizes;
    let w1_len = n_in.checked_mul(n_hidden).ok_or(CheckpointError::Truncated)?;
    let w2_len = n_hidden.checked_mul(n_out).ok_or(CheckpointError::Truncated)?;
    let w1 = cur.f64s(w1_len)?;
    let b1 = if hidden_trainable_bias {
        cur.f64s(n_hidden)?
    } else {
        vec![0.0; n_hidden]
    };
    let w2 = cur.f64s(w2_len)?;
    let b2 = cur.f64s(n_out)?;
    if !cur.0.is_empty() {
        return Err(CheckpointError::Trailing(cur.0.len()));
    }
    Ok(Network { w1, b1, w2, b2, config })
}

pub fn load_checkpoint(mut reader: impl Read) -> Result<Network, CheckpointError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnist::{build_dataset, Normalization, RawImages};

    fn toy_config(seed: u64, beta: f64) -> NetworkConfig {
        NetworkConfig {
            layer_sizes: [6, 5, 3],
            beta,
            seed,
            ..NetworkConfig::default()
        }
    }

    fn zeroed(cfg: NetworkConfig) -> Network {
        let mut net = init_network(&cfg).unwrap();
        net.w1.iter_mut().for_each(|w| *w = 0.0);
        net.w2.iter_mut().for_each(|w| *w = 0.0);
        net
    }

    #[test]
    fn init_shapes_and_beta_independence() {
        let a = init_network(&NetworkConfig::default()).unwrap();
        assert_eq!(a.w1.len(), 784 * 784);
        assert_eq!(a.w2.len(), 784 * 10);
        assert!(a.b2.iter().all(|&b| b == 0.0));
        let b = init_network(&NetworkConfig {
            beta: 6.0,
            learning_rate: 0.5,
            ..NetworkConfig::default()
        })
        .unwrap();
        assert_eq!(a.w1, b.w1);
        assert_eq!(a.w2, b.w2);
        assert_eq!(a.b2, b.b2);

        let c = init_network(&NetworkConfig {
            seed: 43,
            ..NetworkConfig::default()
        })
        .unwrap();
        assert_ne!(a.w1, c.w1);
    }

    #[test]
    fn init_respects_scale() {
        let net = init_network(&NetworkConfig::default()).unwrap();
        let s = 1.0 / 28.0;
        assert!(net.w1.iter().all(|w| w.abs() < s));
        let net = init_network(&NetworkConfig {
            init_scale: InitScale::Fixed(0.5),
            ..NetworkConfig::default()
        })
        .unwrap();
        assert!(net.w1.iter().all(|w| w.abs() < 0.5));
        assert!(net.w1.iter().any(|w| w.abs() > 0.4));
        assert!(net.w2.iter().all(|w| w.abs() < s));
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let net = zeroed(NetworkConfig::default());
        let (hidden, probs) = net.forward(&[0.3; 784]).unwrap();
        assert!(hidden.iter().all(|&h| h == 0.5));
        assert!(probs.iter().all(|&p| (p - 0.1).abs() < 1e-15));

        let net = zeroed(NetworkConfig {
            beta: 6.0,
            ..NetworkConfig::default()
        });
        let (hidden, probs) = net.forward(&[0.3; 784]).unwrap();
        assert!(hidden.iter().all(|&h| (h - 0.997_527_376_843_365_2).abs() < 1e-15));
        assert!(probs.iter().all(|&p| (p - 0.1).abs() < 1e-15));
    }

    #[test]
    fn uniform_prediction_loss_is_ln_10() {
        let net = zeroed(NetworkConfig::default());
        let (loss, _) = net.loss_and_gradients(&[0.1; 784], &[4]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_prediction_has_vanishing_loss() {
        let mut net = zeroed(toy_config(1, 0.0));
        net.b2 = vec![60.0, 0.0, 0.0];
        let (loss, _) = net.loss_and_gradients(&[0.0; 6], &[0]).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = init_network(&toy_config(1, 0.0)).unwrap();
        assert!(matches!(net.forward(&[0.0; 5]), Err(NetError::InputSize { .. })));
        assert_eq!(
            net.forward(&[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]),
            Err(NetError::NonFinite { layer: "input" })
        );
        let mut huge = net.clone();
        huge.w2[0] = f64::INFINITY;
        assert_eq!(huge.forward(&[0.0; 6]), Err(NetError::NonFinite { layer: "output" }));
        assert!(matches!(
            net.loss_and_gradients(&[0.0; 6], &[3]),
            Err(NetError::Label { .. })
        ));
        assert_eq!(net.loss_and_gradients(&[], &[]), Err(NetError::EmptyBatch));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    fn toy_dataset(n: usize) -> Dataset {
        let pixels = (0..n * 784).map(|i| ((i * 31 + i / 784 * 17) % 256) as u8).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        build_dataset(&RawImages { count: n, pixels }, &labels, Normalization::TrainMean).unwrap()
    }

    fn small_config() -> NetworkConfig {
        NetworkConfig {
            layer_sizes: [784, 16, 10],
            batch_size: 7,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let data = toy_dataset(30);
        let cfg = NetworkConfig {
            learning_rate: 0.0,
            ..small_config()
        };
        let net = init_network(&cfg).unwrap();
        let after = sgd_epoch(TrainState::new(net.clone()), &data).unwrap();
        assert_eq!(after.epoch, 1);
        assert_eq!(after.network, net);
    }

    #[test]
    fn training_is_repeatable() {
        let data = toy_dataset(30);
        let run = || {
            let mut state = TrainState::new(init_network(&small_config()).unwrap());
            for _ in 0..3 {
                state = sgd_epoch(state, &data).unwrap();
            }
            state
        };
        let (a, b) = (run(), run());
        assert_eq!(write_checkpoint(&a.network), write_checkpoint(&b.network));
        assert_eq!(a.epoch, 3);
    }

    #[test]
    fn single_example_loss_decreases() {
        let data = toy_dataset(1);
        let cfg = NetworkConfig {
            learning_rate: 0.01,
            ..small_config()
        };
        let mut state = TrainState::new(init_network(&cfg).unwrap());
        let loss = |net: &Network| net.loss_and_gradients(data.vector(0), &data.labels()[..1]).unwrap().0;
        let mut prev = loss(&state.network);
        for _ in 0..100 {
            state = sgd_epoch(state, &data).unwrap();
            let now = loss(&state.network);
            assert!(now <= prev, "loss rose from {prev} to {now}");
            prev = now;
        }
    }

    #[test]
    fn divergence_reports_batch() {
        let data = toy_dataset(20);
        let cfg = NetworkConfig {
            learning_rate: 1e308,
            ..small_config()
        };
        let err = sgd_epoch(TrainState::new(init_network(&cfg).unwrap()), &data).unwrap_err();
        assert!(matches!(err, NetError::NumericFailure { .. }), "{err:?}");
    }

    #[test]
    fn oracle_network_scores_zero_error() {
        // Output bias pushes every example to its label's class only when
        // the data has a single label.
        let data = {
            let pixels = vec![10u8; 5 * 784];
            build_dataset(&RawImages { count: 5, pixels }, &[3; 5], Normalization::TrainMean).unwrap()
        };
        let mut net = zeroed(small_config());
        net.b2[3] = 1.0;
        assert_eq!(evaluate(&net, &data).unwrap(), 0.0);
        net.b2[3] = -1.0;
        assert_eq!(evaluate(&net, &data).unwrap(), 1.0);
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let mut cfg = toy_config(9, 2.5);
        cfg.hidden_trainable_bias = true;
        let mut net = init_network(&cfg).unwrap();
        net.b1[2] = 0.25;
        let bytes = write_checkpoint(&net);
        assert_eq!(bytes.len(), 41 + 8 * (30 + 5 + 15 + 3));
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, net);

        assert!(matches!(
            read_checkpoint(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Truncated)
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_checkpoint(&extra), Err(CheckpointError::Trailing(1))));
        let mut tag = bytes.clone();
        tag[0] = b'X';
        assert!(matches!(read_checkpoint(&tag), Err(CheckpointError::BadTag)));
        let mut version = bytes;
        version[8] = 2;
        assert!(matches!(read_checkpoint(&version), Err(CheckpointError::Version(2))));
    }
}
