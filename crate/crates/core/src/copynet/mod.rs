//! The copy model: a small dense feed-forward network with ReLU hidden
//! layers and a softmax output, trained to imitate an oracle's hard labels.

mod loss;
mod optim;
mod train;

pub use loss::{empirical_risk, gradient, loss_with_memory, rho_batch, uncertainty_rho};
pub use optim::{adam_step, OptimizerState};
pub use train::{
    train_capacity_loop, AttemptRecord, CapacityBudget, EpsilonSchedule, TightenRule,
    TrainDiagnostics,
};

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::PointBatch;
use crate::error::{Error, Result};
use crate::util::argmax;

/// Hidden widths used throughout the experiments.
pub const DEFAULT_HIDDEN: [usize; 3] = [64, 32, 10];

/// Dense ReLU network with a softmax head; the copy model.
///
/// Weight matrices are stored `(fan_in, fan_out)`; every parameter is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct CopyNet {
    input_dim: usize,
    n_classes: usize,
    hidden: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Per-parameter gradients, shaped exactly like the network they came from.
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradientSet {
    pub(crate) fn zeros_like(net: &CopyNet) -> Self {
        GradientSet {
            weights: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }
}

impl CopyNet {
    /// Fresh network with He-initialized weights (variance `2 / fan_in`) and
    /// zero biases.
    pub fn new(input_dim: usize, hidden: &[usize], n_classes: usize, seed: u64) -> Result<Self> {
        check_architecture(input_dim, hidden, n_classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = layer_dims(input_dim, hidden, n_classes);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
                let g: f64 = rng.sample(StandardNormal);
                g * std
            });
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(CopyNet {
            input_dim,
            n_classes,
            hidden: hidden.to_vec(),
            weights,
            biases,
        })
    }

    /// Builds a network from explicit parameters, validating shapes and
    /// finiteness.
    pub fn from_parts(
        input_dim: usize,
        hidden: &[usize],
        n_classes: usize,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        check_architecture(input_dim, hidden, n_classes)?;
        let dims = layer_dims(input_dim, hidden, n_classes);
        if weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} layers, got {} weight and {} bias arrays",
                dims.len() - 1,
                weights.len(),
                biases.len()
            )));
        }
        for (l, pair) in dims.windows(2).enumerate() {
            if weights[l].dim() != (pair[0], pair[1]) || biases[l].len() != pair[1] {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} expects weights {}x{} and bias {}",
                    pair[0], pair[1], pair[1]
                )));
            }
        }
        let finite = weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Numeric("network parameters must be finite".into()));
        }
        Ok(CopyNet {
            input_dim,
            n_classes,
            hidden: hidden.to_vec(),
            weights,
            biases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub(crate) fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub(crate) fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    /// Class-probability rows for a batch (softmax with max subtraction).
    pub fn forward(&self, batch: &PointBatch) -> Result<Array2<f64>> {
        Ok(self.forward_trace(batch)?.probs)
    }

    /// Argmax class per point; ties resolve to the lowest class index.
    pub fn predict(&self, batch: &PointBatch) -> Result<Vec<usize>> {
        let probs = self.forward(batch)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|row| argmax(row.as_slice().expect("probability rows are contiguous")))
            .collect())
    }

    /// Forward pass that keeps pre-activations and activations for backprop.
    pub(crate) fn forward_trace(&self, batch: &PointBatch) -> Result<ForwardTrace> {
        if batch.dim() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "network expects input dimension {}, got {}",
                self.input_dim,
                batch.dim()
            )));
        }
        let layers = self.weights.len();
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(layers);
        let mut zs: Vec<Array2<f64>> = Vec::with_capacity(layers);
        let mut a = batch.points().clone();
        for l in 0..layers {
            let z = a.dot(&self.weights[l]) + &self.biases[l];
            zs.push(z.clone());
            if l + 1 < layers {
                a = z.mapv(|v| v.max(0.0));
                acts.push(a.clone());
            } else {
                a = softmax_rows(z);
            }
        }
        Ok(ForwardTrace {
            input: batch.points().clone(),
            zs,
            hidden_acts: acts,
            probs: a,
        })
    }

    /// Euclidean distance between two parameter vectors (concatenated).
    pub fn param_distance(&self, other: &CopyNet) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut sq = 0.0;
        for (a, b) in self.weights.iter().zip(&other.weights) {
            sq += a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        for (a, b) in self.biases.iter().zip(&other.biases) {
            sq += a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        Ok(sq.sqrt())
    }

    pub(crate) fn check_same_shape(&self, other: &CopyNet) -> Result<()> {
        if self.input_dim != other.input_dim
            || self.n_classes != other.n_classes
            || self.hidden != other.hidden
        {
            return Err(Error::DimensionMismatch(
                "networks have different architectures".into(),
            ));
        }
        Ok(())
    }

    /// Serializes architecture plus row-major parameters to JSON.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let doc = SavedNet {
            input_dim: self.input_dim,
            hidden: self.hidden.clone(),
            n_classes: self.n_classes,
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| b.iter().copied().collect())
                .collect(),
        };
        let text = serde_json::to_string(&doc)?;
        fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let doc: SavedNet = serde_json::from_str(&text)?;
        let dims = layer_dims(doc.input_dim, &doc.hidden, doc.n_classes);
        if doc.weights.len() + 1 != dims.len() {
            return Err(Error::BadData("saved network has wrong layer count".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in dims.windows(2).enumerate() {
            let w = Array2::from_shape_vec((pair[0], pair[1]), doc.weights[l].clone())
                .map_err(|_| Error::BadData(format!("layer {l} weight array has wrong length")))?;
            if doc.biases[l].len() != pair[1] {
                return Err(Error::BadData(format!("layer {l} bias array has wrong length")));
            }
            weights.push(w);
            biases.push(Array1::from_vec(doc.biases[l].clone()));
        }
        CopyNet::from_parts(doc.input_dim, &doc.hidden, doc.n_classes, weights, biases)
    }
}

fn check_architecture(input_dim: usize, hidden: &[usize], n_classes: usize) -> Result<()> {
    if input_dim == 0 {
        return Err(Error::InvalidArgument("input dimension must be >= 1".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if hidden.contains(&0) {
        return Err(Error::InvalidArgument("hidden widths must be >= 1".into()));
    }
    Ok(())
}

fn layer_dims(input_dim: usize, hidden: &[usize], n_classes: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(n_classes);
    dims
}

/// Row-wise softmax computed with max subtraction for overflow safety.
fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    z
}

pub(crate) struct ForwardTrace {
    pub input: Array2<f64>,
    /// Pre-activations per layer.
    pub zs: Vec<Array2<f64>>,
    /// Post-ReLU activations for hidden layers only.
    pub hidden_acts: Vec<Array2<f64>>,
    pub probs: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct SavedNet {
    input_dim: usize,
    hidden: Vec<usize>,
    n_classes: usize,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}
