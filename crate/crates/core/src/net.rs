//! Small fully connected classifier with rectified hidden layers.
//!
//! The last hidden layer's activations are the "penultimate features" the
//! detectors operate on; the final affine layer is the classification head.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{read_interchange, write_interchange, FeatureSet, HeadWeights, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;

pub const MAX_HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// (out × in)
    weight: Matrix,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::Shape(format!(
                "layer weight has {} rows but bias has {} entries",
                weight.rows(),
                bias.len()
            )));
        }
        Ok(Layer { weight, bias })
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_sizes: vec![32],
            epochs: 40,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.len() > MAX_HIDDEN_LAYERS {
            return Err(Error::Invalid(format!(
                "need 1..={MAX_HIDDEN_LAYERS} hidden layers, got {}",
                self.hidden_sizes.len()
            )));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Invalid(
                "hidden layer widths must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax cross-entropy.
    CrossEntropy,
    /// Per-class sigmoid cross-entropy against one-hot targets, averaged over
    /// classes.
    #[default]
    BinaryCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNet {
    layers: Vec<Layer>,
    class_ids: Vec<i32>,
}

struct Trace {
    /// inputs to each layer; `acts[0]` is the network input
    acts: Vec<Matrix>,
    /// pre-activations of each layer
    pre: Vec<Matrix>,
}

impl TaskNet {
    pub fn from_layers(layers: Vec<Layer>, class_ids: Vec<i32>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Invalid(
                "a task net needs at least one hidden layer and an output layer".into(),
            ));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].fan_out(),
                    i + 1,
                    w[1].fan_in()
                )));
            }
        }
        let out = layers.last().unwrap().fan_out();
        if out != class_ids.len() {
            return Err(Error::Shape(format!(
                "output width {out} != {} classes",
                class_ids.len()
            )));
        }
        Ok(TaskNet { layers, class_ids })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn class_ids(&self) -> &[i32] {
        &self.class_ids
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_in()
    }

    pub fn head(&self) -> HeadWeights {
        let last = self.layers.last().unwrap();
        HeadWeights::new(
            last.weight.clone(),
            last.bias.clone(),
            self.class_ids.clone(),
        )
        .expect("layer invariants imply a valid head")
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input width {} != net input width {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &Matrix) -> Trace {
        let mut acts = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = acts[l]
                .affine_transposed(&layer.weight, &layer.bias)
                .expect("shapes checked on construction");
            if l < last {
                acts.push(z.map(relu));
            }
            pre.push(z);
        }
        Trace { acts, pre }
    }

    /// Logits via a direct pass through every layer.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.trace(x).pre.pop().unwrap())
    }

    /// Rectified activations of the last hidden layer.
    pub fn penultimate(&self, x: &Matrix) -> Result<FeatureSet> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            h = h.affine_transposed(&layer.weight, &layer.bias)?.map(relu);
        }
        Ok(FeatureSet::from_trusted(h))
    }

    /// Applies the output layer to (possibly shaped) features.
    pub fn logits(&self, features: &FeatureSet) -> Result<Matrix> {
        let last = self.layers.last().unwrap();
        features
            .matrix()
            .affine_transposed(&last.weight, &last.bias)
    }

    pub fn label_indices(&self, labels: &[i32]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.class_ids
                    .binary_search(l)
                    .map_err(|_| Error::UnknownClass(*l))
            })
            .collect()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<i32>> {
        let logits = self.forward(x)?;
        Ok(logits
            .row_iter()
            .map(|r| self.class_ids[argmax(r)])
            .collect())
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Invalid("accuracy of an empty dataset".into()));
        }
        let pred = self.predict(data.inputs())?;
        let hits = pred
            .iter()
            .zip(data.labels())
            .filter(|(p, l)| p == l)
            .count();
        Ok(hits as f64 / data.len() as f64)
    }

    /// Loss of each sample under `kind`.
    pub fn per_sample_loss(&self, x: &Matrix, y: &[i32], kind: LossKind) -> Result<Vec<f64>> {
        let idx = self.label_indices(y)?;
        let logits = self.forward(x)?;
        check_rows(&logits, &idx)?;
        Ok(logits
            .row_iter()
            .zip(&idx)
            .map(|(z, &t)| sample_loss(z, t, kind))
            .collect())
    }

    pub fn mean_loss(&self, x: &Matrix, y: &[i32], kind: LossKind) -> Result<f64> {
        let l = self.per_sample_loss(x, y, kind)?;
        Ok(l.iter().sum::<f64>() / l.len().max(1) as f64)
    }

    /// Gradient of the mean loss with respect to the inputs.
    pub fn input_gradient(&self, x: &Matrix, y: &[i32], kind: LossKind) -> Result<Matrix> {
        self.check_input(x)?;
        let idx = self.label_indices(y)?;
        check_rows(x, &idx)?;
        let trace = self.trace(x);
        let dlogits = loss_grad(trace.pre.last().unwrap(), &idx, kind);
        Ok(self.backprop(&trace, dlogits, true).1.unwrap())
    }

    /// Gradient of the mean loss with respect to every parameter, flattened
    /// in [`TaskNet::flat_params`] order.
    pub fn param_gradient(&self, x: &Matrix, y: &[i32], kind: LossKind) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let idx = self.label_indices(y)?;
        check_rows(x, &idx)?;
        let trace = self.trace(x);
        let dlogits = loss_grad(trace.pre.last().unwrap(), &idx, kind);
        let (grads, _) = self.backprop(&trace, dlogits, false);
        Ok(flatten(&grads))
    }

    /// All weights then biases, layer by layer, weights row-major.
    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn with_flat_params(&self, params: &[f64]) -> Result<TaskNet> {
        let expected: usize = self
            .layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum();
        if params.len() != expected {
            return Err(Error::Shape(format!(
                "{} parameters supplied, net has {expected}",
                params.len()
            )));
        }
        let mut net = self.clone();
        let mut off = 0;
        for l in &mut net.layers {
            let w = l.weight.as_mut_slice();
            w.copy_from_slice(&params[off..off + w.len()]);
            off += w.len();
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(net)
    }

    /// Returns per-layer parameter gradients and, if requested, the input gradient.
    fn backprop(
        &self,
        trace: &Trace,
        mut delta: Matrix,
        want_input: bool,
    ) -> (Vec<Layer>, Option<Matrix>) {
        let n_layers = self.layers.len();
        let mut grads: Vec<Layer> = Vec::with_capacity(n_layers);
        let mut input_grad = None;
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let a_in = &trace.acts[l];
            let mut gw = Matrix::zeros(layer.fan_out(), layer.fan_in());
            let mut gb = vec![0.0; layer.fan_out()];
            for (d, a) in delta.row_iter().zip(a_in.row_iter()) {
                for (k, &dk) in d.iter().enumerate() {
                    if dk == 0.0 {
                        continue;
                    }
                    gb[k] += dk;
                    for (g, &av) in gw.row_mut(k).iter_mut().zip(a) {
                        *g += dk * av;
                    }
                }
            }
            grads.push(Layer {
                weight: gw,
                bias: gb,
            });
            if l == 0 && !want_input {
                break;
            }
            // propagate to this layer's input
            let mut upstream = Matrix::zeros(delta.rows(), layer.fan_in());
            for (r, d) in delta.row_iter().enumerate() {
                let u = upstream.row_mut(r);
                for (k, &dk) in d.iter().enumerate() {
                    if dk == 0.0 {
                        continue;
                    }
                    for (uj, &w) in u.iter_mut().zip(layer.weight.row(k)) {
                        *uj += dk * w;
                    }
                }
            }
            if l == 0 {
                input_grad = Some(upstream);
                break;
            }
            // rectifier derivative at the previous layer's pre-activation
            let pre = &trace.pre[l - 1];
            for (u, p) in upstream.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if *p <= 0.0 {
                    *u = 0.0;
                }
            }
            delta = upstream;
        }
        grads.reverse();
        (grads, input_grad)
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

fn check_rows(x: &Matrix, idx: &[usize]) -> Result<()> {
    if x.rows() != idx.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.rows(),
            idx.len()
        )));
    }
    Ok(())
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut v = Vec::new();
    for l in layers {
        v.extend_from_slice(l.weight.as_slice());
        v.extend_from_slice(&l.bias);
    }
    v
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sample_loss(z: &[f64], target: usize, kind: LossKind) -> f64 {
    match kind {
        LossKind::CrossEntropy => log_sum_exp(z) - z[target],
        LossKind::BinaryCrossEntropy => {
            let c = z.len() as f64;
            z.iter()
                .enumerate()
                .map(|(k, &v)| {
                    if k == target {
                        softplus(-v)
                    } else {
                        softplus(v)
                    }
                })
                .sum::<f64>()
                / c
        }
    }
}

/// d(mean loss)/d(logits).
fn loss_grad(logits: &Matrix, idx: &[usize], kind: LossKind) -> Matrix {
    let n = logits.rows() as f64;
    let c = logits.cols() as f64;
    let mut g = Matrix::zeros(logits.rows(), logits.cols());
    for (r, (z, &t)) in logits.row_iter().zip(idx).enumerate() {
        let out = g.row_mut(r);
        match kind {
            LossKind::CrossEntropy => {
                let lse = log_sum_exp(z);
                for (k, o) in out.iter_mut().enumerate() {
                    let p = (z[k] - lse).exp();
                    *o = (p - if k == t { 1.0 } else { 0.0 }) / n;
                }
            }
            LossKind::BinaryCrossEntropy => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = (sigmoid(z[k]) - if k == t { 1.0 } else { 0.0 }) / (n * c);
                }
            }
        }
    }
    g
}

fn init_layers(
    input_dim: usize,
    cfg: &TrainConfig,
    classes: usize,
    rng: &mut seed::Rng,
) -> Vec<Layer> {
    let mut widths = vec![input_dim];
    widths.extend_from_slice(&cfg.hidden_sizes);
    widths.push(classes);
    widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = || rng.random_range(-bound..=bound);
            let weight: Vec<f64> = (0..fan_in * fan_out).map(|_| draw()).collect();
            let bias: Vec<f64> = (0..fan_out).map(|_| draw()).collect();
            Layer {
                weight: Matrix::from_vec(fan_out, fan_in, weight).unwrap(),
                bias,
            }
        })
        .collect()
}

/// Row order used before shuffling: by label, then inputs lexicographically.
/// Makes training independent of the order rows arrive in.
fn canonical_order(data: &LabeledDataset) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let x = data.inputs();
    let y = data.labels();
    idx.sort_by(|&a, &b| {
        y[a].cmp(&y[b]).then_with(|| {
            x.row(a)
                .iter()
                .zip(x.row(b))
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    idx
}

/// Minibatch gradient descent on softmax cross-entropy. Deterministic given
/// `(data, cfg)`.
pub fn train(data: &LabeledDataset, cfg: &TrainConfig) -> Result<TaskNet> {
    cfg.validate()?;
    let groups = data.indices_by_class();
    let present: Vec<i32> = groups
        .iter()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(c, _)| *c)
        .collect();
    if present.len() < 2 {
        return Err(Error::Invalid(format!(
            "training needs at least 2 classes with samples, found {}",
            present.len()
        )));
    }
    if let Some((c, _)) = groups.iter().find(|(_, rows)| rows.is_empty()) {
        return Err(Error::InsufficientSamples {
            class: *c,
            detail: "no training rows".into(),
        });
    }
    let class_ids = data.class_ids().to_vec();
    let mut rng = seed::rng(cfg.seed);
    let layers = init_layers(data.dim(), cfg, class_ids.len(), &mut rng);
    let mut net = TaskNet::from_layers(layers, class_ids)?;
    let targets = net.label_indices(data.labels())?;
    let mut order = canonical_order(data);
    let lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.inputs().select_rows(batch);
            let t: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let trace = net.trace(&x);
            let logits = trace.pre.last().unwrap();
            let loss: f64 = logits
                .row_iter()
                .zip(&t)
                .map(|(z, &k)| sample_loss(z, k, LossKind::CrossEntropy))
                .sum();
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    batch: batch_no,
                });
            }
            let dlogits = loss_grad(logits, &t, LossKind::CrossEntropy);
            let (grads, _) = net.backprop(&trace, dlogits, false);
            for (layer, g) in net.layers.iter_mut().zip(&grads) {
                for (w, gw) in layer
                    .weight
                    .as_mut_slice()
                    .iter_mut()
                    .zip(g.weight.as_slice())
                {
                    *w -= lr * gw;
                }
                for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= lr * gb;
                }
            }
        }
    }
    Ok(net)
}

/// Hidden layers as stored in the JSON sidecar; the output layer lives in a
/// `head` interchange file next to it.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetSidecar {
    class_ids: Vec<i32>,
    hidden: Vec<Layer>,
    head_file: String,
}

fn head_path_for(sidecar: &Path) -> PathBuf {
    let stem = sidecar
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "net".into());
    sidecar.with_file_name(format!("{stem}.head.oodf"))
}

/// Writes `<path>` (JSON: class ids and hidden layers) plus `<stem>.head.oodf`.
pub fn save_net(net: &TaskNet, path: &Path) -> Result<()> {
    let head_path = head_path_for(path);
    write_interchange(&head_path, &net.head().into())?;
    let sidecar = NetSidecar {
        class_ids: net.class_ids.clone(),
        hidden: net.layers[..net.layers.len() - 1].to_vec(),
        head_file: head_path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned(),
    };
    let json = serde_json::to_vec_pretty(&sidecar)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_net(path: &Path) -> Result<TaskNet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let sidecar: NetSidecar = serde_json::from_slice(&bytes)?;
    let head = read_interchange(&path.with_file_name(&sidecar.head_file))?.into_head()?;
    if head.class_ids() != sidecar.class_ids.as_slice() {
        return Err(Error::Invalid(
            "head class ids disagree with sidecar".into(),
        ));
    }
    let mut layers = sidecar.hidden;
    layers.push(Layer::new(head.weight().clone(), head.bias().to_vec())?);
    TaskNet::from_layers(layers, sidecar.class_ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(hidden_w: Vec<f64>, hidden_b: Vec<f64>, in_dim: usize) -> TaskNet {
        let h = hidden_b.len();
        TaskNet::from_layers(
            vec![
                Layer::new(Matrix::from_vec(h, in_dim, hidden_w).unwrap(), hidden_b).unwrap(),
                Layer::new(Matrix::zeros(2, h), vec![0.0, 0.0]).unwrap(),
            ],
            vec![0, 1],
        )
        .unwrap()
    }

    #[test]
    fn rectifier_zeroes_negative_preactivation() {
        let net = tiny(vec![1.0], vec![0.0], 1);
        let f = net
            .penultimate(&Matrix::from_vec(1, 1, vec![-3.0]).unwrap())
            .unwrap();
        assert_eq!(f.matrix().get(0, 0), 0.0);
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let net = tiny(vec![0.0; 6], vec![0.0; 3], 2);
        let f = net
            .penultimate(&Matrix::from_rows(&[vec![1.0, -2.0], vec![5.0, 7.0]]).unwrap())
            .unwrap();
        assert!(f.matrix().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_is_affine() {
        let net = TaskNet::from_layers(
            vec![
                Layer::new(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![0.0]).unwrap(),
                Layer::new(Matrix::from_vec(1, 1, vec![2.0]).unwrap(), vec![1.0]).unwrap(),
            ],
            vec![0],
        )
        .unwrap();
        let f = FeatureSet::new(Matrix::from_vec(1, 1, vec![3.0]).unwrap()).unwrap();
        assert_eq!(net.logits(&f).unwrap().get(0, 0), 7.0);
        let zero = FeatureSet::new(Matrix::zeros(4, 1)).unwrap();
        assert!(net
            .logits(&zero)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 1.0));
    }

    #[test]
    fn constant_output_net_has_zero_input_gradient() {
        let net = tiny(vec![0.0; 4], vec![0.0; 2], 2);
        let x = Matrix::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5]]).unwrap();
        for kind in [LossKind::CrossEntropy, LossKind::BinaryCrossEntropy] {
            let g = net.input_gradient(&x, &[0, 1], kind).unwrap();
            assert!(g.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradient_is_linear_in_upstream_scale() {
        let mut rng = seed::rng(3);
        let cfg = TrainConfig {
            hidden_sizes: vec![5],
            ..TrainConfig::default()
        };
        let net = TaskNet::from_layers(init_layers(3, &cfg, 2, &mut rng), vec![0, 1]).unwrap();
        let x = Matrix::from_rows(&[vec![0.2, -0.4, 1.0]]).unwrap();
        let trace = net.trace(&x);
        let d = loss_grad(trace.pre.last().unwrap(), &[1], LossKind::CrossEntropy);
        let (_, once) = net.backprop(&trace, d.clone(), true);
        let (_, twice) = net.backprop(&trace, d.map(|v| 2.0 * v), true);
        for (a, b) in once
            .unwrap()
            .as_slice()
            .iter()
            .zip(twice.unwrap().as_slice())
        {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn invalid_label_rejected() {
        let net = tiny(vec![1.0], vec![0.0], 1);
        let x = Matrix::zeros(1, 1);
        assert!(matches!(
            net.input_gradient(&x, &[9], LossKind::CrossEntropy),
            Err(Error::UnknownClass(9))
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = tiny(vec![1.0], vec![0.0], 1);
        assert!(net.penultimate(&Matrix::zeros(2, 3)).is_err());
        let f = FeatureSet::new(Matrix::zeros(1, 4)).unwrap();
        assert!(net.logits(&f).is_err());
    }

    #[test]
    fn zero_epochs_return_initialization() {
        let data = LabeledDataset::new(
            Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap(),
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let cfg = TrainConfig {
            hidden_sizes: vec![3],
            epochs: 0,
            batch_size: 2,
            learning_rate: 0.1,
            seed: 5,
        };
        let net = train(&data, &cfg).unwrap();
        let mut rng = seed::rng(5);
        assert_eq!(net.layers, init_layers(1, &cfg, 2, &mut rng));
    }

    #[test]
    fn single_class_rejected() {
        let data = LabeledDataset::new(Matrix::zeros(3, 2), vec![4, 4, 4]).unwrap();
        assert!(train(&data, &TrainConfig::default()).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = seed::rng(1);
        let cfg = TrainConfig {
            hidden_sizes: vec![4, 3],
            ..TrainConfig::default()
        };
        let net = TaskNet::from_layers(init_layers(2, &cfg, 3, &mut rng), vec![1, 5, 8]).unwrap();
        let path = dir.path().join("net.json");
        save_net(&net, &path).unwrap();
        assert!(dir.path().join("net.head.oodf").exists());
        assert_eq!(load_net(&path).unwrap(), net);
    }
}
