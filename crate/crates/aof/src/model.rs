//! A small differentiable point-cloud classifier: shared per-point MLP,
//! global max pool, dense head. Forward and backward passes are written by
//! hand so that exact input gradients are available to the attack loops.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis, Ix1, Ix2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::optim::Adam;
use crate::pointcloud::{LabeledDataset, PointCloud};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("stale gradient tape: tape generation {tape} vs model generation {model}")]
    StaleTape { tape: u64, model: u64 },
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad model file: {detail}")]
    BadModelFile { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Layer widths (h1, h2, h3, C): per-point MLP 3 -> h1 -> h2, max pool,
/// head h2 -> h3 -> C.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub h1: usize,
    pub h2: usize,
    pub h3: usize,
    pub c: usize,
}

impl Dims {
    pub fn new(h1: usize, h2: usize, h3: usize, c: usize) -> Self {
        Dims { h1, h2, h3, c }
    }
}

/// One affine layer: weight is (input dim) x (output dim).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// PointNet-style classifier. Layers 0-1 are the shared per-point MLP,
/// layers 2-3 the dense head; rectifier after every layer except the last.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub layers: Vec<Layer>,
    pub dims: Dims,
    /// Bumped on every parameter update; used to detect stale tapes.
    generation: u64,
}

impl Classifier {
    /// He-initialized classifier, deterministic given the seed.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = [(3, dims.h1), (dims.h1, dims.h2), (dims.h2, dims.h3), (dims.h3, dims.c)];
        let layers = shapes
            .iter()
            .map(|&(fan_in, fan_out)| {
                let std = (2.0 / fan_in as f64).sqrt();
                let weight = Array2::from_shape_fn((fan_in, fan_out), |_| {
                    let g: f64 = rng.sample(StandardNormal);
                    g * std
                });
                Layer { weight, bias: Array1::zeros(fan_out) }
            })
            .collect();
        Classifier { layers, dims, generation: 0 }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    fn bump_generation(&mut self) {
        self.generation += 1;
    }
}

/// Cached activations from a forward pass, sufficient for exact gradients
/// with respect to parameters and input coordinates.
#[derive(Debug, Clone)]
pub struct GradientTape {
    input: Array2<f64>,
    /// Pre-activation outputs of the two per-point layers.
    z1: Array2<f64>,
    z2: Array2<f64>,
    a1: Array2<f64>,
    /// Row index of the pooled maximum per channel (lowest index on ties).
    argmax: Vec<usize>,
    pooled: Array1<f64>,
    z3: Array1<f64>,
    a3: Array1<f64>,
    generation: u64,
}

/// Gradients with the same shapes as the classifier's layers.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<Layer>,
}

impl ParamGrads {
    fn zeros_like(model: &Classifier) -> Self {
        ParamGrads {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            l.weight *= s;
            l.bias *= s;
        }
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Forward pass producing logits and a gradient tape.
pub fn forward(model: &Classifier, cloud: &PointCloud) -> Result<(Array1<f64>, GradientTape)> {
    if cloud.points.ncols() != 3 {
        return Err(ModelError::ShapeMismatch(format!(
            "cloud has {} columns",
            cloud.points.ncols()
        )));
    }
    if !cloud.is_finite() {
        return Err(ModelError::InvalidArgument("cloud has non-finite coordinates".into()));
    }
    let input = cloud.points.clone();
    let z1 = input.dot(&model.layers[0].weight) + &model.layers[0].bias;
    let a1 = z1.mapv(relu);
    let z2 = a1.dot(&model.layers[1].weight) + &model.layers[1].bias;
    let a2 = z2.mapv(relu);
    let h2 = model.dims.h2;
    let n = a2.nrows();
    let mut argmax = vec![0usize; h2];
    let mut pooled = Array1::zeros(h2);
    for j in 0..h2 {
        let mut best = a2[[0, j]];
        let mut best_i = 0usize;
        for i in 1..n {
            if a2[[i, j]] > best {
                best = a2[[i, j]];
                best_i = i;
            }
        }
        argmax[j] = best_i;
        pooled[j] = best;
    }
    let z3 = pooled.dot(&model.layers[2].weight) + &model.layers[2].bias;
    let a3 = z3.mapv(relu);
    let logits = a3.dot(&model.layers[3].weight) + &model.layers[3].bias;
    let tape = GradientTape {
        input,
        z1,
        z2,
        a1,
        argmax,
        pooled,
        z3,
        a3,
        generation: model.generation,
    };
    Ok((logits, tape))
}

fn check_tape(model: &Classifier, tape: &GradientTape) -> Result<()> {
    if tape.generation != model.generation {
        return Err(ModelError::StaleTape { tape: tape.generation, model: model.generation });
    }
    Ok(())
}

/// Shared backward pass up to the pooled feature gradient.
fn backward_to_pool(
    model: &Classifier,
    tape: &GradientTape,
    loss_grad_logits: &Array1<f64>,
) -> (Array1<f64>, Array2<f64>) {
    // Head.
    let d_a3 = model.layers[3].weight.dot(loss_grad_logits);
    let d_z3 = &d_a3 * &tape.z3.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    let d_pool = model.layers[2].weight.dot(&d_z3);
    // Route pooled gradients to the argmax rows.
    let n = tape.input.nrows();
    let mut d_a2 = Array2::zeros((n, model.dims.h2));
    for j in 0..model.dims.h2 {
        d_a2[[tape.argmax[j], j]] += d_pool[j];
    }
    (d_z3, d_a2)
}

/// Exact gradient of the scalar loss with respect to the input coordinates.
pub fn backward_input(
    model: &Classifier,
    tape: &GradientTape,
    loss_grad_logits: &Array1<f64>,
) -> Result<Array2<f64>> {
    check_tape(model, tape)?;
    let (_, d_a2) = backward_to_pool(model, tape, loss_grad_logits);
    let d_z2 = &d_a2 * &tape.z2.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    let d_a1 = d_z2.dot(&model.layers[1].weight.t());
    let d_z1 = &d_a1 * &tape.z1.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    Ok(d_z1.dot(&model.layers[0].weight.t()))
}

/// Exact parameter gradients of the scalar loss.
pub fn backward_params(
    model: &Classifier,
    tape: &GradientTape,
    loss_grad_logits: &Array1<f64>,
) -> Result<ParamGrads> {
    check_tape(model, tape)?;
    let (d_z3, d_a2) = backward_to_pool(model, tape, loss_grad_logits);
    let mut grads = ParamGrads::zeros_like(model);
    // Final head layer.
    grads.layers[3].weight = outer(&tape.a3, loss_grad_logits);
    grads.layers[3].bias = loss_grad_logits.clone();
    grads.layers[2].weight = outer(&tape.pooled, &d_z3);
    grads.layers[2].bias = d_z3;
    // Per-point layers.
    let d_z2 = &d_a2 * &tape.z2.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    grads.layers[1].weight = tape.a1.t().dot(&d_z2);
    grads.layers[1].bias = d_z2.sum_axis(Axis(0));
    let d_a1 = d_z2.dot(&model.layers[1].weight.t());
    let d_z1 = &d_a1 * &tape.z1.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    grads.layers[0].weight = tape.input.t().dot(&d_z1);
    grads.layers[0].bias = d_z1.sum_axis(Axis(0));
    Ok(grads)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Numerically stable softmax cross-entropy; returns (loss, d_loss/d_logits).
pub fn cross_entropy(logits: &Array1<f64>, label: usize) -> (f64, Array1<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|z| (z - max).exp());
    let sum = exps.sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad = exps / sum;
    grad[label] -= 1.0;
    (loss, grad)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            weight_decay: 0.0,
        }
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub final_train_accuracy: f64,
    pub final_test_accuracy: Option<f64>,
    pub final_loss: f64,
}

/// Cross-entropy mini-batch Adam training; deterministic given the seed.
/// The dataset's train split is used for optimization; test accuracy is
/// reported when the dataset has a test split.
pub fn train(
    dataset: &LabeledDataset,
    cfg: &TrainConfig,
    dims: Dims,
) -> Result<(Classifier, TrainReport)> {
    if cfg.learning_rate <= 0.0 {
        return Err(ModelError::InvalidArgument("learning_rate must be > 0".into()));
    }
    if cfg.epochs < 1 {
        return Err(ModelError::InvalidArgument("epochs must be >= 1".into()));
    }
    let train_set = dataset.train_set();
    let test_set = dataset.test_set();
    if train_set.is_empty() {
        return Err(ModelError::InvalidArgument("empty train split".into()));
    }
    for cloud in &train_set.clouds {
        match cloud.label {
            Some(l) if l < dims.c => {}
            Some(l) => {
                return Err(ModelError::InvalidArgument(format!(
                    "label {l} out of range for {} classes",
                    dims.c
                )))
            }
            None => return Err(ModelError::InvalidArgument("unlabeled training cloud".into())),
        }
    }
    let mut model = Classifier::init(dims, cfg.seed);
    let mut w_opts: Vec<Adam<Ix2>> = model
        .layers
        .iter()
        .map(|l| Adam::new(cfg.learning_rate, Ix2(l.weight.nrows(), l.weight.ncols())))
        .collect();
    let mut b_opts: Vec<Adam<Ix1>> = model
        .layers
        .iter()
        .map(|l| Adam::new(cfg.learning_rate, Ix1(l.bias.len())))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_loss = 0.0;
    for epoch in 0..cfg.epochs {
        // Fisher-Yates with the seeded stream.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grads = ParamGrads::zeros_like(&model);
            for &idx in batch {
                let cloud = &train_set.clouds[idx];
                let (logits, tape) = forward(&model, cloud)?;
                let (loss, d_logits) = cross_entropy(&logits, cloud.label.unwrap());
                if !loss.is_finite() {
                    return Err(ModelError::Diverged { epoch });
                }
                epoch_loss += loss;
                grads.add_assign(&backward_params(&model, &tape, &d_logits)?);
            }
            grads.scale(1.0 / batch.len() as f64);
            if cfg.weight_decay > 0.0 {
                for (g, l) in grads.layers.iter_mut().zip(&model.layers) {
                    g.weight.scaled_add(cfg.weight_decay, &l.weight);
                }
            }
            for (i, g) in grads.layers.iter().enumerate() {
                w_opts[i].step(&mut model.layers[i].weight, &g.weight);
                b_opts[i].step(&mut model.layers[i].bias, &g.bias);
            }
            model.bump_generation();
        }
        last_loss = epoch_loss / n as f64;
    }
    let report = TrainReport {
        final_train_accuracy: accuracy(&model, &train_set)?,
        final_test_accuracy: if test_set.is_empty() {
            None
        } else {
            Some(accuracy(&model, &test_set)?)
        },
        final_loss: last_loss,
    };
    Ok((model, report))
}

/// Predicted class of a cloud: argmax logit, ties to the lowest class index.
pub fn predict(model: &Classifier, cloud: &PointCloud) -> Result<usize> {
    let (logits, _) = forward(model, cloud)?;
    let mut best = 0usize;
    for i in 1..logits.len() {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Fraction of clouds whose prediction equals their label.
pub fn accuracy(model: &Classifier, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for cloud in &dataset.clouds {
        let label = cloud
            .label
            .ok_or_else(|| ModelError::InvalidArgument("unlabeled cloud".into()))?;
        if predict(model, cloud)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

const MODEL_MAGIC: &[u8; 9] = b"AOFMODEL1";

/// Serialize: magic, 4 dims as u32 LE, then parameters in declaration order
/// (weight row-major then bias, per layer), f64 LE.
pub fn save_model(model: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| ModelError::Io { path: path.to_path_buf(), source: e };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let io = |e| ModelError::Io { path: path.to_path_buf(), source: e };
    w.write_all(MODEL_MAGIC).map_err(io)?;
    for d in [model.dims.h1, model.dims.h2, model.dims.h3, model.dims.c] {
        w.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
    }
    for layer in &model.layers {
        for v in layer.weight.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        for v in layer.bias.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Parse a model file; see [`save_model`] for the layout.
pub fn parse_model(bytes: &[u8], path: &Path) -> Result<Classifier> {
    let bad = |detail: String| ModelError::BadModelFile { path: path.to_path_buf(), detail };
    let mut r = bytes;
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic".into()))?;
    if &magic != MODEL_MAGIC {
        return Err(bad("magic mismatch".into()));
    }
    let mut dim = |what: &str| -> Result<usize> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| bad(format!("truncated {what}")))?;
        let v = u32::from_le_bytes(b) as usize;
        if v == 0 || v > 1 << 20 {
            return Err(bad(format!("implausible {what}: {v}")));
        }
        Ok(v)
    };
    let dims = Dims::new(dim("h1")?, dim("h2")?, dim("h3")?, dim("c")?);
    let shapes = [(3, dims.h1), (dims.h1, dims.h2), (dims.h2, dims.h3), (dims.h3, dims.c)];
    let expected: usize = shapes
        .iter()
        .map(|&(a, b)| (a * b + b) * 8)
        .sum();
    if r.len() != expected {
        return Err(bad(format!(
            "expected {expected} parameter bytes, found {}",
            r.len()
        )));
    }
    let mut next = || {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).unwrap();
        f64::from_le_bytes(b)
    };
    let layers = shapes
        .iter()
        .map(|&(fan_in, fan_out)| {
            let weight = Array2::from_shape_fn((fan_in, fan_out), |_| next());
            let bias = Array1::from_iter((0..fan_out).map(|_| next()));
            Layer { weight, bias }
        })
        .collect();
    Ok(Classifier { layers, dims, generation: 0 })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })?;
    parse_model(&bytes, path)
}
