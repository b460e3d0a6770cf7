//! The preference inference model: a small feed-forward regressor from a
//! normalized return summary to a point on the preference simplex.
//!
//! The network is rectifier-activated with a softmax output head, so every
//! prediction is a valid preference vector no matter the parameters.
//! Gradients are computed by reverse accumulation through the softmax and
//! loss jointly; training is plain mini-batch SGD with early stopping on
//! validation loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demos::{DemoSet, Demonstration, FeatureStats, ReturnSummary, Split};
use crate::error::{DwpiError, Result};
use crate::morl::{enumerate_simplex, PreferenceSpace, PreferenceVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Mean of the squared Euclidean distance (default; smooth everywhere).
    SquaredL2,
    /// Mean of the plain Euclidean distance.
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Early-stopping patience: epochs without validation improvement.
    pub patience: usize,
    pub loss_kind: LossKind,
    pub seed: u64,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(DwpiError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DwpiError::InvalidConfig(
                "learning_rate must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Layer {
    /// Row-major `out x in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Layer {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b[r];
            out.push(z);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) layers: Vec<Layer>,
    pub(crate) normalizer: FeatureStats,
    pub(crate) space: PreferenceSpace,
    pub(crate) spec_hash: String,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

impl MlpModel {
    /// Fresh model with `[m, hidden.., m]` layers, uniform init scaled by
    /// fan-in/fan-out, deterministic in the seed.
    pub fn new(
        m: usize,
        hidden: &[usize],
        normalizer: FeatureStats,
        grid_step: f64,
        spec_hash: String,
        seed: u64,
    ) -> Result<Self> {
        if normalizer.mean.len() != m || normalizer.std.len() != m {
            return Err(DwpiError::DimensionMismatch {
                expected: m,
                got: normalizer.mean.len(),
            });
        }
        let mut sizes = vec![m];
        sizes.extend_from_slice(hidden);
        sizes.push(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|io| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    w: (0..fan_in * fan_out)
                        .map(|_| rng.gen_range(-scale..scale))
                        .collect(),
                    b: vec![0.0; fan_out],
                    rows: fan_out,
                    cols: fan_in,
                }
            })
            .collect();
        Ok(MlpModel {
            layers,
            normalizer,
            space: enumerate_simplex(m, grid_step)?,
            spec_hash,
        })
    }

    pub fn m(&self) -> usize {
        self.layers[0].cols
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].cols];
        sizes.extend(self.layers.iter().map(|l| l.rows));
        sizes
    }

    /// Total parameter count, matching the flat order of [`Gradients`]:
    /// per layer, weights then biases.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Adds `delta` to the flat parameter at `idx`. Indexing follows
    /// [`Self::param_count`]; used for finite-difference gradient checks.
    pub fn nudge_param(&mut self, idx: usize, delta: f64) {
        let mut i = idx;
        for layer in &mut self.layers {
            if i < layer.w.len() {
                layer.w[i] += delta;
                return;
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                layer.b[i] += delta;
                return;
            }
            i -= layer.b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn space(&self) -> &PreferenceSpace {
        &self.space
    }

    pub fn spec_hash(&self) -> &str {
        &self.spec_hash
    }

    pub fn normalizer(&self) -> &FeatureStats {
        &self.normalizer
    }

    fn normalize(&self, f: &ReturnSummary) -> Result<Vec<f64>> {
        if f.m() != self.m() {
            return Err(DwpiError::DimensionMismatch {
                expected: self.m(),
                got: f.m(),
            });
        }
        if f.returns().iter().any(|x| !x.is_finite()) {
            return Err(DwpiError::NonFinite("model input".into()));
        }
        Ok(f
            .returns()
            .iter()
            .zip(self.normalizer.mean.iter().zip(&self.normalizer.std))
            .map(|(x, (mu, sd))| (x - mu) / sd)
            .collect())
    }

    /// Forward pass keeping pre-activations for backprop. Returns
    /// (activations per layer input, pre-activations, softmax output).
    fn forward_trace(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let mut activations = vec![input.to_vec()];
        let mut pre = Vec::new();
        let mut z = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(activations.last().unwrap(), &mut z);
            pre.push(z.clone());
            if i + 1 < self.layers.len() {
                activations.push(z.iter().map(|v| v.max(0.0)).collect());
            }
        }
        let p = softmax(pre.last().unwrap());
        (activations, pre, p)
    }

    /// Maps a return summary to a point on the simplex.
    pub fn forward(&self, f: &ReturnSummary) -> Result<PreferenceVector> {
        let x = self.normalize(f)?;
        let (_, _, p) = self.forward_trace(&x);
        PreferenceVector::new(p)
    }

    /// Forward pass plus Euclidean snap to the model's lattice.
    pub fn infer(&self, f: &ReturnSummary) -> Result<Inference> {
        let raw = self.forward(f)?;
        let idx = self.space.nearest_index(&raw);
        Ok(Inference {
            snapped: self.space.points()[idx].clone(),
            snapped_index: idx,
            raw,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub raw: PreferenceVector,
    pub snapped: PreferenceVector,
    pub snapped_index: usize,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Mean loss over a batch.
pub fn loss(model: &MlpModel, batch: &[&Demonstration], kind: LossKind) -> Result<f64> {
    if batch.is_empty() {
        return Err(DwpiError::Empty("batch".into()));
    }
    let mut total = 0.0;
    for d in batch {
        let p = model.forward(&d.features)?;
        let sq: f64 = p
            .weights()
            .iter()
            .zip(d.target.weights())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += match kind {
            LossKind::SquaredL2 => sq,
            LossKind::L2 => sq.sqrt(),
        };
    }
    Ok(total / batch.len() as f64)
}

/// Exact mean-loss gradients for every parameter, by reverse accumulation
/// through the softmax head and the loss jointly.
pub fn backward(model: &MlpModel, batch: &[&Demonstration], kind: LossKind) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(DwpiError::Empty("batch".into()));
    }
    let mut grads = Gradients::zeros_like(model);
    let scale = 1.0 / batch.len() as f64;
    for d in batch {
        let x = model.normalize(&d.features)?;
        let (activations, pre, p) = model.forward_trace(&x);
        // dL/dp for this item.
        let diff: Vec<f64> = p
            .iter()
            .zip(d.target.weights())
            .map(|(a, b)| a - b)
            .collect();
        let dl_dp: Vec<f64> = match kind {
            LossKind::SquaredL2 => diff.iter().map(|d| 2.0 * d).collect(),
            LossKind::L2 => {
                let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    vec![0.0; diff.len()]
                } else {
                    diff.iter().map(|d| d / norm).collect()
                }
            }
        };
        // Softmax Jacobian: dL/dz_i = p_i * (g_i - sum_j g_j p_j).
        let dot: f64 = dl_dp.iter().zip(&p).map(|(g, pi)| g * pi).sum();
        let mut delta: Vec<f64> = dl_dp
            .iter()
            .zip(&p)
            .map(|(g, pi)| pi * (g - dot))
            .collect();
        for l in (0..model.layers.len()).rev() {
            let layer = &model.layers[l];
            let input = &activations[l];
            let (gw, gb) = &mut grads.layers[l];
            for r in 0..layer.rows {
                gb[r] += scale * delta[r];
                for c in 0..layer.cols {
                    gw[r * layer.cols + c] += scale * delta[r] * input[c];
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.cols];
                for (c, pv) in prev.iter_mut().enumerate() {
                    for r in 0..layer.rows {
                        *pv += layer.w[r * layer.cols + c] * delta[r];
                    }
                }
                // Rectifier derivative at the previous pre-activation.
                for (pv, z) in prev.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *pv = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Mini-batch SGD with per-epoch shuffling and early stopping on the
/// validation loss; returns the best-validation snapshot and the loss
/// history. Deterministic given the seed.
pub fn fit(
    mut model: MlpModel,
    ds: &DemoSet,
    cfg: &FitConfig,
) -> Result<(MlpModel, Vec<EpochStats>)> {
    cfg.validate()?;
    let train = ds.of_split(Split::Train);
    let val = ds.of_split(Split::Val);
    if train.is_empty() {
        return Err(DwpiError::Empty("train split".into()));
    }
    if val.is_empty() {
        return Err(DwpiError::Empty("validation split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    for epoch in 0..cfg.max_epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut train_loss_acc = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Demonstration> = chunk.iter().map(|i| train[*i]).collect();
            let grads = backward(&model, &batch, cfg.loss_kind)?;
            train_loss_acc += loss(&model, &batch, cfg.loss_kind)? * batch.len() as f64;
            for (layer, (gw, gb)) in model.layers.iter_mut().zip(&grads.layers) {
                for (w, g) in layer.w.iter_mut().zip(gw) {
                    *w -= cfg.learning_rate * g;
                }
                for (b, g) in layer.b.iter_mut().zip(gb) {
                    *b -= cfg.learning_rate * g;
                }
            }
        }
        let train_loss = train_loss_acc / train.len() as f64;
        let val_loss = loss(&model, &val, cfg.loss_kind)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(DwpiError::Diverged { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}
