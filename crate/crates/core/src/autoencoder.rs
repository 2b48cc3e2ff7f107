//! Dense autoencoder for content scoring.
//!
//! Architecture: 256 -> 128 -> 64 -> 16 -> 64 -> 128 -> 256. Every dense
//! layer is followed by batch normalization; the hidden layers then apply a
//! rectifier while the 16-unit bottleneck and the output are linear. Training
//! minimizes mean squared reconstruction error with Adam on shuffled
//! mini-batches; batch normalization uses batch statistics while training and
//! running statistics at inference.
//!
//! All arithmetic is `f64` and single-threaded, so a fixed seed reproduces a
//! model bit for bit.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{FeatureVector, DEFAULT_HASH_SEED, FEATURE_DIM};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PERCENTILE: f64 = 99.99999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Encoder widths; the decoder mirrors them back to the input width.
    pub hidden: Vec<usize>,
    /// Weight of the old value in running-statistic updates.
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    /// After the last epoch, replace running statistics with exact
    /// population statistics over the training set.
    pub finalize_bn_stats: bool,
    /// Normalize the reconstruction layer too; when false it is a plain
    /// affine map.
    pub output_batch_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 20,
            batch_size: 128,
            seed: 42,
            hidden: vec![128, 64, 16],
            bn_momentum: 0.99,
            bn_epsilon: 1e-3,
            finalize_bn_stats: true,
            output_batch_norm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseBn {
    /// `inputs x outputs`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub activation: Activation,
    /// When false, gamma, beta and the running statistics are unused.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

struct LayerCache {
    input: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    pre_activation: Array2<f64>,
}

struct LayerGrads {
    weights: Array2<f64>,
    bias: Array1<f64>,
    gamma: Array1<f64>,
    beta: Array1<f64>,
}

impl DenseBn {
    fn new(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        normalize: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        let weights = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-limit..limit));
        Self {
            weights,
            bias: Array1::zeros(outputs),
            gamma: Array1::ones(outputs),
            beta: Array1::zeros(outputs),
            running_mean: Array1::zeros(outputs),
            running_var: Array1::ones(outputs),
            activation,
            normalize,
        }
    }

    fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    fn affine(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }

    fn forward_train(
        &self,
        x: ArrayView2<f64>,
        eps: f64,
    ) -> (Array2<f64>, LayerCache, Array1<f64>, Array1<f64>) {
        let z = self.affine(x);
        let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = &z - &mean;
        let var = (&centered * &centered)
            .mean_axis(Axis(0))
            .expect("non-empty batch");
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let (xhat, y) = if self.normalize {
            let xhat = &centered * &inv_std;
            let y = &xhat * &self.gamma + &self.beta;
            (xhat, y)
        } else {
            (Array2::zeros((0, 0)), z)
        };
        let out = match self.activation {
            Activation::Relu => y.mapv(|v| v.max(0.0)),
            Activation::Identity => y.clone(),
        };
        let cache = LayerCache {
            input: x.to_owned(),
            xhat,
            inv_std,
            pre_activation: y,
        };
        (out, cache, mean, var)
    }

    fn backward(&self, cache: &LayerCache, dout: Array2<f64>) -> (Array2<f64>, LayerGrads) {
        let dy = match self.activation {
            Activation::Relu => {
                let mut d = dout;
                ndarray::Zip::from(&mut d)
                    .and(&cache.pre_activation)
                    .for_each(|g, &y| {
                        if y <= 0.0 {
                            *g = 0.0;
                        }
                    });
                d
            }
            Activation::Identity => dout,
        };
        if !self.normalize {
            let dweights = cache.input.t().dot(&dy);
            let dbias = dy.sum_axis(Axis(0));
            let dx = dy.dot(&self.weights.t());
            let zeros = Array1::zeros(self.outputs());
            return (
                dx,
                LayerGrads {
                    weights: dweights,
                    bias: dbias,
                    gamma: zeros.clone(),
                    beta: zeros,
                },
            );
        }
        let dgamma = (&dy * &cache.xhat).sum_axis(Axis(0));
        let dbeta = dy.sum_axis(Axis(0));
        let dxhat = &dy * &self.gamma;
        let n = dy.nrows() as f64;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let dz =
            ((&dxhat * n) - &sum_dxhat - &(&cache.xhat * &sum_dxhat_xhat)) * &(&cache.inv_std / n);
        let dweights = cache.input.t().dot(&dz);
        let dbias = dz.sum_axis(Axis(0));
        let dx = dz.dot(&self.weights.t());
        (
            dx,
            LayerGrads {
                weights: dweights,
                bias: dbias,
                gamma: dgamma,
                beta: dbeta,
            },
        )
    }

    /// Inference for one row with running statistics. Fixed summation order.
    fn infer_row(&self, x: &[f64], eps: f64, out: &mut Vec<f64>) {
        let n_out = self.outputs();
        out.clear();
        out.extend(self.bias.iter().copied());
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = self.weights.row(i);
            for (o, w) in out.iter_mut().zip(row.iter()) {
                *o += xi * w;
            }
        }
        for j in 0..n_out {
            let y = if self.normalize {
                let norm = (out[j] - self.running_mean[j]) / (self.running_var[j] + eps).sqrt();
                self.gamma[j] * norm + self.beta[j]
            } else {
                out[j]
            };
            out[j] = match self.activation {
                Activation::Relu => y.max(0.0),
                Activation::Identity => y,
            };
        }
    }

    fn param_len(&self) -> usize {
        self.weights.len() + 3 * self.outputs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AEThreshold {
    pub value: f64,
    pub percentile: f64,
    pub training_error_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AEModel {
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub layers: Vec<DenseBn>,
    pub bn_epsilon: f64,
    pub hash_seed: u64,
    pub train_seed: u64,
    #[serde(default)]
    pub threshold: Option<AEThreshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub score: f64,
    pub reconstruction: FeatureVector,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainWarning {
    /// Every training vector is identical; the threshold collapses to ~0.
    DegenerateInput,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: AEModel,
    /// Mean training-mode loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub warnings: Vec<TrainWarning>,
}

fn layer_plan(
    input: usize,
    hidden: &[usize],
    output_bn: bool,
) -> Vec<(usize, usize, Activation, bool)> {
    let mut widths = vec![input];
    widths.extend_from_slice(hidden);
    widths.extend(hidden.iter().rev().skip(1).copied());
    widths.push(input);
    let bottleneck = hidden.len();
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 1 == bottleneck || i + 2 == widths.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            let last = i + 2 == widths.len();
            (w[0], w[1], act, output_bn || !last)
        })
        .collect()
}

impl AEModel {
    /// Freshly initialized (untrained) model.
    pub fn new(input_dim: usize, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let layers = layer_plan(input_dim, &cfg.hidden, cfg.output_batch_norm)
            .into_iter()
            .map(|(i, o, a, bn)| DenseBn::new(i, o, a, bn, &mut rng))
            .collect();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            input_dim,
            hidden: cfg.hidden.clone(),
            layers,
            bn_epsilon: cfg.bn_epsilon,
            hash_seed: DEFAULT_HASH_SEED,
            train_seed: cfg.seed,
            threshold: None,
        }
    }

    /// Width chain, e.g. `[256, 128, 64, 16, 64, 128, 256]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(DenseBn::outputs));
        w
    }

    fn forward_train(
        &self,
        x: ArrayView2<f64>,
    ) -> (
        Array2<f64>,
        Vec<LayerCache>,
        Vec<(Array1<f64>, Array1<f64>)>,
    ) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut stats = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let (out, cache, mean, var) = layer.forward_train(h.view(), self.bn_epsilon);
            caches.push(cache);
            stats.push((mean, var));
            h = out;
        }
        (h, caches, stats)
    }

    fn backward(
        &self,
        caches: &[LayerCache],
        output: &Array2<f64>,
        target: ArrayView2<f64>,
    ) -> Vec<LayerGrads> {
        let scale = 2.0 / output.len() as f64;
        let mut d = (output - &target) * scale;
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let (dx, g) = layer.backward(cache, d);
            grads.push(g);
            d = dx;
        }
        grads.reverse();
        grads
    }

    /// Training-mode (batch statistics) mean squared reconstruction loss.
    pub fn batch_loss(&self, x: ArrayView2<f64>) -> f64 {
        let (out, _, _) = self.forward_train(x);
        mse(&out, x)
    }

    /// Training-mode loss and its gradient, flattened in [`Self::params`] order.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>) -> (f64, Vec<f64>) {
        let (out, caches, _) = self.forward_train(x);
        let loss = mse(&out, x);
        let grads = self.backward(&caches, &out, x);
        let mut flat = Vec::with_capacity(self.param_count());
        for g in grads {
            flat.extend(g.weights.iter());
            flat.extend(g.bias.iter());
            flat.extend(g.gamma.iter());
            flat.extend(g.beta.iter());
        }
        (loss, flat)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseBn::param_len).sum()
    }

    /// All trainable parameters: per layer weights (row-major), bias, gamma, beta.
    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            flat.extend(l.weights.iter());
            flat.extend(l.bias.iter());
            flat.extend(l.gamma.iter());
            flat.extend(l.beta.iter());
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for p in l
                .weights
                .iter_mut()
                .chain(l.bias.iter_mut())
                .chain(l.gamma.iter_mut())
                .chain(l.beta.iter_mut())
            {
                *p = it.next().expect("length checked");
            }
        }
    }

    /// Inference-mode reconstruction of one vector.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.infer_row(&cur, self.bn_epsilon, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn score(&self, x: &FeatureVector) -> ScoreResult {
        let recon = self.reconstruct(x.as_slice());
        let score = mse_score(x.as_slice(), &recon);
        let flagged = self.threshold.as_ref().is_some_and(|t| score > t.value);
        ScoreResult {
            score,
            reconstruction: FeatureVector(recon),
            flagged,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: AEModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn mse(out: &Array2<f64>, target: ArrayView2<f64>) -> f64 {
    let diff = out - &target;
    diff.mapv(|v| v * v).sum() / out.len() as f64
}

/// `(1/n) * sum((x_i - xhat_i)^2)`.
pub fn mse_score(x: &[f64], recon: &[f64]) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    x.iter()
        .zip(recon)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64
}

struct AdamSlot {
    m: Vec<f64>,
    v: Vec<f64>,
}

fn to_matrix(vectors: &[FeatureVector], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((vectors.len(), dim));
    for (mut row, v) in m.rows_mut().into_iter().zip(vectors) {
        row.assign(&ndarray::ArrayView1::from(v.as_slice()));
    }
    m
}

pub fn train(benign: &[FeatureVector], cfg: &TrainConfig) -> Result<TrainReport> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be >= 1".into()));
    }
    if benign.len() < cfg.batch_size {
        return Err(Error::InsufficientData(format!(
            "autoencoder needs at least {} vectors, got {}",
            cfg.batch_size,
            benign.len()
        )));
    }
    let dim = benign[0].len();
    if benign.iter().any(|v| v.len() != dim) {
        return Err(Error::Config("feature vectors differ in length".into()));
    }
    let mut warnings = Vec::new();
    if benign.iter().all(|v| v == &benign[0]) {
        warnings.push(TrainWarning::DegenerateInput);
    }

    let data = to_matrix(benign, dim);
    let mut model = AEModel::new(dim, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut adam: Vec<AdamSlot> = model
        .layers
        .iter()
        .map(|l| AdamSlot {
            m: vec![0.0; l.param_len()],
            v: vec![0.0; l.param_len()],
        })
        .collect();
    let mut step: i32 = 0;
    let mut order: Vec<usize> = (0..benign.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // a single-row batch has no variance to normalize with
            if chunk.len() < 2 {
                continue;
            }
            let batch = data.select(Axis(0), chunk);
            let (out, caches, stats) = model.forward_train(batch.view());
            loss_sum += mse(&out, batch.view()) * chunk.len() as f64;
            seen += chunk.len();
            let grads = model.backward(&caches, &out, batch.view());
            step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(step);
            let bc2 = 1.0 - cfg.beta2.powi(step);
            for ((layer, g), (slot, (mean, var))) in model
                .layers
                .iter_mut()
                .zip(grads)
                .zip(adam.iter_mut().zip(stats))
            {
                let params = layer
                    .weights
                    .iter_mut()
                    .chain(layer.bias.iter_mut())
                    .chain(layer.gamma.iter_mut())
                    .chain(layer.beta.iter_mut());
                let grads = g
                    .weights
                    .iter()
                    .chain(g.bias.iter())
                    .chain(g.gamma.iter())
                    .chain(g.beta.iter());
                for (((p, gr), m), v) in params
                    .zip(grads)
                    .zip(slot.m.iter_mut())
                    .zip(slot.v.iter_mut())
                {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gr;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gr * gr;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
                }
                let mom = cfg.bn_momentum;
                layer.running_mean = &layer.running_mean * mom + &(mean * (1.0 - mom));
                layer.running_var = &layer.running_var * mom + &(var * (1.0 - mom));
            }
        }
        epoch_losses.push(if seen == 0 {
            0.0
        } else {
            loss_sum / seen as f64
        });
    }

    if cfg.finalize_bn_stats {
        finalize_running_stats(&mut model, &data);
    }
    for l in &mut model.layers {
        l.running_var.mapv_inplace(|v| v.max(f64::MIN_POSITIVE));
    }

    Ok(TrainReport {
        model,
        epoch_losses,
        warnings,
    })
}

/// Sets each layer's running statistics to the exact mean and variance of
/// its pre-normalization activations over `data`, layer by layer in
/// inference mode.
fn finalize_running_stats(model: &mut AEModel, data: &Array2<f64>) {
    let eps = model.bn_epsilon;
    let mut h = data.clone();
    for layer in &mut model.layers {
        let z = layer.affine(h.view());
        let mean = z.mean_axis(Axis(0)).expect("non-empty data");
        let centered = &z - &mean;
        let var = (&centered * &centered)
            .mean_axis(Axis(0))
            .expect("non-empty data");
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let y = if layer.normalize {
            &centered * &inv_std * &layer.gamma + &layer.beta
        } else {
            z
        };
        h = match layer.activation {
            Activation::Relu => y.mapv(|v| v.max(0.0)),
            Activation::Identity => y,
        };
        layer.running_mean = mean;
        layer.running_var = var;
    }
}

/// Empirical quantile with linear interpolation at 1-based rank
/// `p/100 * (n + 1)`, clamped to `[1, n]`. When `p/100 > 1 - 1/n` (e.g.
/// 99.99999 with fewer than ten million scores) this is the maximum.
pub fn quantile_exclusive(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let rank = (percentile / 100.0 * (n as f64 + 1.0)).clamp(1.0, n as f64);
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo >= n || frac == 0.0 {
        return sorted[lo - 1];
    }
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

pub fn calibrate_threshold(training_scores: &[f64]) -> AEThreshold {
    calibrate_threshold_at(training_scores, DEFAULT_PERCENTILE)
}

pub fn calibrate_threshold_at(training_scores: &[f64], percentile: f64) -> AEThreshold {
    let mut sorted = training_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    AEThreshold {
        value: quantile_exclusive(&sorted, percentile),
        percentile,
        training_error_count: sorted.len(),
    }
}

/// Scores every training vector with `model` and stores the calibrated
/// threshold in it.
pub fn fit_threshold(model: &mut AEModel, training: &[FeatureVector]) -> AEThreshold {
    let scores: Vec<f64> = training.iter().map(|x| model.score(x).score).collect();
    let t = calibrate_threshold(&scores);
    model.threshold = Some(t.clone());
    t
}

/// Model input width used by the engine.
pub const INPUT_DIM: usize = FEATURE_DIM;

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 8,
            hidden: vec![8, 4, 2],
            ..TrainConfig::default()
        }
    }

    fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| FeatureVector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn default_architecture() {
        let m = AEModel::new(FEATURE_DIM, &TrainConfig::default());
        assert_eq!(m.widths(), [256, 128, 64, 16, 64, 128, 256]);
        let acts: Vec<Activation> = m.layers.iter().map(|l| l.activation).collect();
        use Activation::*;
        assert_eq!(acts, [Relu, Relu, Identity, Relu, Relu, Identity]);
        for w in m.layers.windows(2) {
            assert_eq!(w[0].outputs(), w[1].inputs());
        }
    }

    #[test]
    fn perfect_reconstruction_scores_zero() {
        assert_eq!(mse_score(&[1.0, -2.0], &[1.0, -2.0]), 0.0);
        let mut x = vec![0.0; 256];
        let mut r = x.clone();
        r[17] = 1.0;
        x[3] = 2.0;
        r[3] = 2.0;
        assert_eq!(mse_score(&x, &r), 1.0 / 256.0);
        assert_eq!(1.0 / 256.0, 0.00390625);
    }

    #[test]
    fn threshold_is_max_for_small_samples() {
        let t = calibrate_threshold(&[0.2, 0.1, 0.3]);
        assert_eq!(t.value, 0.3);
        assert_eq!(t.training_error_count, 3);
        let t = calibrate_threshold(&[0.5; 10]);
        assert_eq!(t.value, 0.5);
        assert!(0.5 <= t.value, "equal scores are not flagged");
    }

    #[test]
    fn quantile_interpolates_between_order_statistics() {
        let xs: Vec<f64> = (1..=9).map(f64::from).collect();
        // rank 0.5 * 10 = 5
        assert_eq!(quantile_exclusive(&xs, 50.0), 5.0);
        // rank 0.25 * 10 = 2.5
        assert_eq!(quantile_exclusive(&xs, 25.0), 2.5);
        assert_eq!(quantile_exclusive(&xs, 0.0), 1.0);
    }

    #[test]
    fn too_few_vectors_is_insufficient() {
        let v = random_vectors(4, 16, 1);
        assert!(matches!(
            train(&v, &small_cfg()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let v = random_vectors(40, 16, 2);
        let a = train(&v, &small_cfg()).unwrap().model;
        let b = train(&v, &small_cfg()).unwrap().model;
        assert_eq!(a, b);
        assert_eq!(
            a.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            b.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn degenerate_input_warns() {
        let v = vec![FeatureVector(vec![1.0; 16]); 16];
        let r = train(&v, &small_cfg()).unwrap();
        assert_eq!(r.warnings, [TrainWarning::DegenerateInput]);
    }

    #[test]
    fn json_round_trip_preserves_scores() {
        let v = random_vectors(40, 16, 3);
        let mut m = train(&v, &small_cfg()).unwrap().model;
        fit_threshold(&mut m, &v);
        let back = AEModel::from_json(&m.to_json()).unwrap();
        for x in &v {
            assert_eq!(m.score(x).score.to_bits(), back.score(x).score.to_bits());
        }
        assert_eq!(back, m);
    }

    #[test]
    fn training_samples_are_never_flagged() {
        let v = random_vectors(64, 16, 4);
        let mut m = train(&v, &small_cfg()).unwrap().model;
        fit_threshold(&mut m, &v);
        assert!(v.iter().all(|x| !m.score(x).flagged));
    }
}
