//! Capacity-controlled training: minimize the memory-aware loss in
//! mini-batch epochs under a stepwise-tightening risk bound, growing the
//! epoch allowance when the current bound is out of reach.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SyntheticSet;
use crate::error::{Error, Result};

use super::{adam_step, empirical_risk, gradient, CopyNet, OptimizerState};

/// How the intermediate risk bound moves toward its target.
///
/// The default halves the bound but never crosses the target. `LiteralMin`
/// instead takes `min(bound/2, target)`, which collapses to the target in a
/// single step when the initial bound is much larger.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TightenRule {
    #[default]
    FloorAtTarget,
    LiteralMin,
}

/// Stepwise-tightening sequence of risk bounds `eps_k`, starting at a loose
/// initial constant and approaching the target risk.
#[derive(Clone, Debug)]
pub struct EpsilonSchedule {
    current: f64,
    target: f64,
    initial: f64,
    rule: TightenRule,
}

impl EpsilonSchedule {
    pub fn new(initial: f64, target: f64, rule: TightenRule) -> Result<Self> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "target risk must be finite and > 0, got {target}"
            )));
        }
        if !(initial >= target && initial.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initial bound must be finite and >= target, got {initial}"
            )));
        }
        Ok(EpsilonSchedule {
            current: initial,
            target,
            initial,
            rule,
        })
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    /// Moves the bound one step toward the target according to the rule.
    pub fn tighten(&mut self) {
        self.current = match self.rule {
            TightenRule::FloorAtTarget => (self.current / 2.0).max(self.target),
            TightenRule::LiteralMin => (self.current / 2.0).min(self.target),
        };
    }
}

/// Epoch allowance per training attempt, grown multiplicatively up to a hard
/// cap; the cap also bounds the total epochs of one training call.
#[derive(Clone, Debug)]
pub struct CapacityBudget {
    allowance: usize,
    growth: f64,
    cap: usize,
}

impl CapacityBudget {
    pub fn new(allowance: usize, growth: f64, cap: usize) -> Result<Self> {
        if allowance == 0 {
            return Err(Error::InvalidArgument("epoch allowance must be >= 1".into()));
        }
        if !(growth > 1.0 && growth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "growth factor must be finite and > 1, got {growth}"
            )));
        }
        if cap < allowance {
            return Err(Error::InvalidArgument(format!(
                "hard cap {cap} must be >= the initial allowance {allowance}"
            )));
        }
        Ok(CapacityBudget {
            allowance,
            growth,
            cap,
        })
    }

    pub fn allowance(&self) -> usize {
        self.allowance
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Enlarges the allowance by the growth factor, saturating at the cap.
    pub fn grow(&mut self) {
        let grown = (self.allowance as f64 * self.growth).round() as usize;
        self.allowance = grown.max(self.allowance + 1).min(self.cap);
    }
}

/// One attempt at reaching the current bound within the epoch allowance.
#[derive(Clone, Debug)]
pub struct AttemptRecord {
    pub eps_k: f64,
    pub epochs: usize,
    pub risk_after: f64,
    /// Best risk observed so far across the whole call; non-increasing.
    pub best_risk: f64,
    pub reached: bool,
}

/// Trace of one `train_capacity_loop` call.
#[derive(Clone, Debug)]
pub struct TrainDiagnostics {
    pub epochs_used: usize,
    pub initial_risk: f64,
    /// Risk of the returned (best observed) parameters.
    pub final_risk: f64,
    pub attempts: Vec<AttemptRecord>,
}

/// Trains `net` on `set` until its empirical risk beats the schedule target
/// or the total epoch cap runs out, returning the best-risk parameters seen.
///
/// Each attempt runs class-balanced mini-batch Adam epochs against the
/// current bound `eps_k`; a successful attempt tightens the bound, a failed
/// one enlarges the epoch allowance. Training warm-starts from `net` and
/// anchors the memory term at `theta_prev`.
#[allow(clippy::too_many_arguments)]
pub fn train_capacity_loop(
    net: &CopyNet,
    set: &SyntheticSet,
    eps: EpsilonSchedule,
    budget: CapacityBudget,
    theta_prev: &CopyNet,
    lambda: f64,
    batch: usize,
    lr: f64,
    rng_seed: u64,
) -> Result<(CopyNet, TrainDiagnostics)> {
    if set.is_empty() {
        return Err(Error::BadData("cannot train on an empty set".into()));
    }
    if batch == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    net.check_same_shape(theta_prev)?;

    let mut eps = eps;
    let mut budget = budget;
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut opt = OptimizerState::new(&net, lr)?;

    let mut risk = empirical_risk(&net, set)?;
    let initial_risk = risk;
    let mut best = (net.clone(), risk);
    let mut attempts = Vec::new();
    let mut total_epochs = 0usize;

    if risk < eps.target() {
        return Ok((
            net,
            TrainDiagnostics {
                epochs_used: 0,
                initial_risk,
                final_risk: risk,
                attempts,
            },
        ));
    }

    let pools = class_pools(set);
    let batches_per_epoch = set.len().div_ceil(batch);

    while risk >= eps.target() && total_epochs < budget.cap() {
        let allowance = budget.allowance().min(budget.cap() - total_epochs);
        let mut used = 0;
        while risk >= eps.current() && used < allowance {
            run_epoch(
                &mut net,
                set,
                &pools,
                theta_prev,
                lambda,
                batch,
                batches_per_epoch,
                &mut opt,
                &mut rng,
            )?;
            used += 1;
            total_epochs += 1;
            risk = empirical_risk(&net, set)?;
            if risk < best.1 {
                best = (net.clone(), risk);
            }
        }
        let reached = risk < eps.current();
        attempts.push(AttemptRecord {
            eps_k: eps.current(),
            epochs: used,
            risk_after: risk,
            best_risk: best.1,
            reached,
        });
        if risk < eps.target() {
            break;
        }
        if reached {
            eps.tighten();
        } else {
            budget.grow();
        }
    }

    let final_risk = best.1;
    Ok((
        best.0,
        TrainDiagnostics {
            epochs_used: total_epochs,
            initial_risk,
            final_risk,
            attempts,
        },
    ))
}

/// Indices of set members per oracle class, skipping empty classes.
fn class_pools(set: &SyntheticSet) -> Vec<Vec<usize>> {
    let labels = set.labels();
    let mut pools = vec![Vec::new(); set.n_classes()];
    for (i, &l) in labels.iter().enumerate() {
        pools[l].push(i);
    }
    pools.retain(|p| !p.is_empty());
    pools
}

/// One epoch of class-balanced mini-batch steps: every batch draws (near)
/// equally from each populated class, with replacement.
#[allow(clippy::too_many_arguments)]
fn run_epoch(
    net: &mut CopyNet,
    set: &SyntheticSet,
    pools: &[Vec<usize>],
    theta_prev: &CopyNet,
    lambda: f64,
    batch: usize,
    batches_per_epoch: usize,
    opt: &mut OptimizerState,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let base = batch / pools.len();
    let rem = batch % pools.len();
    for _ in 0..batches_per_epoch {
        let mut indices = Vec::with_capacity(batch);
        for (k, pool) in pools.iter().enumerate() {
            let count = base + usize::from(k < rem);
            for _ in 0..count {
                indices.push(pool[rng.random_range(0..pool.len())]);
            }
        }
        let mini = set.select(&indices);
        let grads = gradient(net, &mini, theta_prev, lambda)?;
        adam_step(net, &grads, opt)?;
    }
    Ok(())
}
