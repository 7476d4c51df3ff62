//! Adam optimizer with bias correction.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{CopyNet, GradientSet};

const DEFAULT_BETA1: f64 = 0.9;
const DEFAULT_BETA2: f64 = 0.999;
const DEFAULT_EPS: f64 = 1e-8;

/// Moment accumulators and hyperparameters for Adam.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl OptimizerState {
    /// Fresh state (zero moments) shaped like `net`.
    pub fn new(net: &CopyNet, lr: f64) -> Result<Self> {
        Self::with_hyperparams(net, lr, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS)
    }

    pub fn with_hyperparams(
        net: &CopyNet,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and > 0, got {lr}"
            )));
        }
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
            return Err(Error::InvalidArgument(
                "moment decay rates must lie in [0, 1)".into(),
            ));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        Ok(OptimizerState {
            m_w: net.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: net.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: net.biases().iter().map(|b| Array1::zeros(b.len())).collect(),
            v_b: net.biases().iter().map(|b| Array1::zeros(b.len())).collect(),
            step: 0,
            lr,
            beta1,
            beta2,
            eps,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }
}

/// One bias-corrected Adam update applied in place; the step counter
/// increments by one.
pub fn adam_step(net: &mut CopyNet, grads: &GradientSet, opt: &mut OptimizerState) -> Result<()> {
    if grads.weights.len() != net.weights().len()
        || grads
            .weights
            .iter()
            .zip(net.weights())
            .any(|(g, w)| g.dim() != w.dim())
        || grads
            .biases
            .iter()
            .zip(net.biases())
            .any(|(g, b)| g.len() != b.len())
    {
        return Err(Error::DimensionMismatch(
            "gradient shapes do not match the network".into(),
        ));
    }
    opt.step += 1;
    let t = opt.step as i32;
    let (b1, b2) = (opt.beta1, opt.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let lr = opt.lr;
    let eps = opt.eps;

    for l in 0..grads.weights.len() {
        let m = &mut opt.m_w[l];
        let v = &mut opt.v_w[l];
        let g = &grads.weights[l];
        let w = &mut net.weights_mut()[l];
        ndarray::Zip::from(w)
            .and(m)
            .and(v)
            .and(g)
            .for_each(|w, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        let m = &mut opt.m_b[l];
        let v = &mut opt.v_b[l];
        let g = &grads.biases[l];
        let b = &mut net.biases_mut()[l];
        ndarray::Zip::from(b)
            .and(m)
            .and(v)
            .and(g)
            .for_each(|b, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *b -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}
