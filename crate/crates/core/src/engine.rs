//! The copying strategies: pure sequential accumulation, uncertainty-based
//! sample filtering, the full sequential scheme with adaptive memory weight,
//! and the single-pass baselines.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::copynet::{
    rho_batch, train_capacity_loop, CapacityBudget, CopyNet, EpsilonSchedule, TightenRule,
};
use crate::datagen::{LabeledDataset, PointBatch, Sampler};
use crate::error::{Error, Result};
use crate::metrics::{copy_accuracy, conv_metric, eff_metric, expected_sample_fraction};
use crate::oracle::Oracle;

/// Minimum set size after filtering: one full default batch, so training
/// always has something to chew on.
pub const FILTER_FLOOR: usize = 32;

/// Ordered synthetic points with their oracle labels and (optionally) the
/// per-point uncertainty computed against a stated parameter snapshot.
#[derive(Clone, Debug)]
pub struct SyntheticSet {
    points: PointBatch,
    onehots: Array2<f64>,
    rho: Option<Vec<f64>>,
}

impl SyntheticSet {
    /// Validates that labels are exact one-hot rows matching the points.
    pub fn new(points: PointBatch, onehots: Array2<f64>) -> Result<Self> {
        if points.len() != onehots.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} label rows",
                points.len(),
                onehots.nrows()
            )));
        }
        if onehots.ncols() < 2 {
            return Err(Error::BadData("one-hot labels need at least two classes".into()));
        }
        for (i, row) in onehots.rows().into_iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::BadData(format!("label row {i} is not one-hot")));
            }
        }
        Ok(SyntheticSet {
            points,
            onehots,
            rho: None,
        })
    }

    /// Labels a batch with the oracle and wraps the pair.
    pub fn from_oracle(points: PointBatch, oracle: &Oracle) -> Result<Self> {
        let onehots = oracle.predict_onehot(&points)?;
        SyntheticSet::new(points, onehots)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn n_classes(&self) -> usize {
        self.onehots.ncols()
    }

    pub fn points(&self) -> &PointBatch {
        &self.points
    }

    pub fn onehots(&self) -> &Array2<f64> {
        &self.onehots
    }

    /// Class index per point (position of the 1 in each one-hot row).
    pub fn labels(&self) -> Vec<usize> {
        self.onehots
            .rows()
            .into_iter()
            .map(|row| row.iter().position(|&v| v == 1.0).expect("validated one-hot"))
            .collect()
    }

    /// New set containing the given rows in the given order; cached
    /// uncertainties follow their rows.
    pub fn select(&self, indices: &[usize]) -> SyntheticSet {
        let mut onehots = Array2::zeros((indices.len(), self.n_classes()));
        for (r, &i) in indices.iter().enumerate() {
            onehots.row_mut(r).assign(&self.onehots.row(i));
        }
        SyntheticSet {
            points: self.points.select(indices),
            onehots,
            rho: self
                .rho
                .as_ref()
                .map(|rho| indices.iter().map(|&i| rho[i]).collect()),
        }
    }

    /// Appends `other` after `self`; any cached uncertainties are dropped
    /// because no single snapshot covers both parts.
    pub fn union(&self, other: &SyntheticSet) -> Result<SyntheticSet> {
        if self.n_classes() != other.n_classes() {
            return Err(Error::DimensionMismatch(format!(
                "cannot union sets with {} and {} classes",
                self.n_classes(),
                other.n_classes()
            )));
        }
        let points = self.points.concat(&other.points)?;
        let onehots = ndarray::concatenate(
            ndarray::Axis(0),
            &[self.onehots.view(), other.onehots.view()],
        )
        .expect("class counts checked above");
        Ok(SyntheticSet {
            points,
            onehots,
            rho: None,
        })
    }

    /// Recomputes every cached uncertainty against `net`.
    pub fn refresh_rho(&mut self, net: &CopyNet) -> Result<()> {
        let probs = net.forward(&self.points)?;
        self.rho = Some(rho_batch(&probs, &self.onehots)?);
        Ok(())
    }

    /// Cached uncertainties, if refreshed since the last structural change.
    pub fn rho(&self) -> Option<&[f64]> {
        self.rho.as_deref()
    }

    pub fn mean_rho(&self) -> Option<f64> {
        self.rho.as_ref().map(|rho| {
            if rho.is_empty() {
                0.0
            } else {
                rho.iter().sum::<f64>() / rho.len() as f64
            }
        })
    }
}

/// Adaptive memory weight plus the set size it last saw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaState {
    pub lambda: f64,
    pub prev_size: usize,
}

impl LambdaState {
    pub fn new(lambda0: f64, initial_size: usize) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and > 0, got {lambda0}"
            )));
        }
        Ok(LambdaState {
            lambda: lambda0,
            prev_size: initial_size,
        })
    }
}

/// Halves lambda when the set grew (or held), multiplies by 1.5 when it
/// shrank; remembers the new size.
pub fn update_lambda(state: LambdaState, current_size: usize) -> LambdaState {
    let lambda = if current_size >= state.prev_size {
        state.lambda * 0.5
    } else {
        state.lambda * 1.5
    };
    LambdaState {
        lambda,
        prev_size: current_size,
    }
}

/// Copying strategy tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Sequential,
    PureSequential,
    SinglePass,
    Online,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Strategy::Sequential => "sequential",
            Strategy::PureSequential => "pure-sequential",
            Strategy::SinglePass => "single-pass",
            Strategy::Online => "online",
        };
        f.write_str(name)
    }
}

/// How the sequential strategy uses the memory term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    /// Adaptive: updated from set-size changes each iteration.
    #[default]
    Auto,
    /// Constant at `lambda0`.
    Fixed,
    /// Memory term disabled; the logged lambda is 0.
    Off,
}

/// Everything one run needs. Field defaults follow the reference experiment
/// setup; the epoch caps default to desk-scale values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    /// Iterations T beyond the initial one; arrays get T+1 entries.
    pub iterations: usize,
    /// Fresh samples per iteration (n).
    pub samples_per_iter: usize,
    /// Uncertainty threshold for the filter step.
    pub delta: f64,
    pub lambda0: f64,
    pub lambda_mode: LambdaMode,
    /// Target empirical risk.
    pub epsilon: f64,
    /// Initial loose risk bound (C).
    pub epsilon_init: f64,
    pub tighten_rule: TightenRule,
    pub learning_rate: f64,
    /// Hard epoch cap for each training call.
    pub epochs_per_iter: usize,
    /// Initial per-attempt epoch allowance.
    pub epoch_allowance: usize,
    pub allowance_growth: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub sampler: Sampler,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(strategy: Strategy, sampler: Sampler, seed: u64) -> Self {
        RunConfig {
            strategy,
            iterations: 30,
            samples_per_iter: 100,
            delta: 1e-6,
            lambda0: 0.5,
            lambda_mode: LambdaMode::Auto,
            epsilon: 1e-3,
            epsilon_init: 1.0,
            tighten_rule: TightenRule::FloorAtTarget,
            learning_rate: 5e-4,
            epochs_per_iter: 150,
            epoch_allowance: 50,
            allowance_growth: 2.0,
            batch_size: 32,
            hidden: vec![64, 32, 10],
            sampler,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_iter == 0 {
            return Err(Error::InvalidArgument("samples_per_iter must be >= 1".into()));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda0 must be finite and > 0, got {}",
                self.lambda0
            )));
        }
        // Schedule, budget, and optimizer constructors re-check their own
        // fields; validating here reports problems before any work happens.
        EpsilonSchedule::new(self.epsilon_init, self.epsilon, self.tighten_rule)?;
        CapacityBudget::new(
            self.epoch_allowance,
            self.allowance_growth,
            self.epochs_per_iter,
        )?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be >= 1".into()));
        }
        self.sampler.validate()
    }

    fn schedule(&self) -> Result<EpsilonSchedule> {
        EpsilonSchedule::new(self.epsilon_init, self.epsilon, self.tighten_rule)
    }

    fn budget(&self) -> Result<CapacityBudget> {
        CapacityBudget::new(
            self.epoch_allowance,
            self.allowance_growth,
            self.epochs_per_iter,
        )
    }
}

/// Per-iteration time series of one run plus the final parameters.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: RunConfig,
    pub accuracy: Vec<f64>,
    pub mean_rho: Vec<f64>,
    pub set_size: Vec<usize>,
    pub lambda: Vec<f64>,
    pub final_net: CopyNet,
    pub wall_time_secs: f64,
}

/// Flat summary of a run for JSON emission.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub final_accuracy: f64,
    pub conv: Option<f64>,
    pub eff: Option<f64>,
    pub expected_sample_fraction: Option<f64>,
    pub final_set_size: usize,
    pub wall_time_secs: f64,
}

impl RunRecord {
    /// Writes the per-iteration series as `iter,accuracy,mean_rho,set_size,lambda`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        writer
            .write_record(["iter", "accuracy", "mean_rho", "set_size", "lambda"])
            .map_err(|e| Error::csv(path, e))?;
        for t in 0..self.accuracy.len() {
            writer
                .write_record([
                    t.to_string(),
                    self.accuracy[t].to_string(),
                    self.mean_rho[t].to_string(),
                    self.set_size[t].to_string(),
                    self.lambda[t].to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    /// Summary with the config echo; conv/eff are present only when the run
    /// has at least two recorded iterations.
    pub fn summary(&self) -> RunSummary {
        let conv = conv_metric(&self.accuracy).ok();
        let eff = if self.set_size.len() >= 2 {
            eff_metric(&self.set_size, self.config.samples_per_iter).ok()
        } else {
            None
        };
        RunSummary {
            config: self.config.clone(),
            final_accuracy: *self.accuracy.last().expect("records are never empty"),
            conv,
            eff,
            expected_sample_fraction: eff.map(expected_sample_fraction),
            final_set_size: *self.set_size.last().expect("records are never empty"),
            wall_time_secs: self.wall_time_secs,
        }
    }

    pub fn write_summary_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary())?;
        fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    /// True when every recorded series (not wall time) matches `other`.
    pub fn same_trajectory(&self, other: &RunRecord) -> bool {
        self.accuracy == other.accuracy
            && self.mean_rho == other.mean_rho
            && self.set_size == other.set_size
            && self.lambda == other.lambda
            && self.final_net == other.final_net
    }
}

/// Draws `n` fresh samples, labels them, unions them with `prev`, and keeps
/// the points whose uncertainty under `net` is at least `delta`, preserving
/// input order.
///
/// Floor rule: if fewer than `FILTER_FLOOR` points survive, the
/// `FILTER_FLOOR` highest-uncertainty points of the union are kept instead
/// (all of them when the union is smaller than the floor).
pub fn filter_step(
    prev: &SyntheticSet,
    n: usize,
    delta: f64,
    sampler: &Sampler,
    oracle: &Oracle,
    net: &CopyNet,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticSet> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta must be finite and >= 0, got {delta}"
        )));
    }
    if sampler.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch(format!(
            "sampler dimension {} vs oracle dimension {}",
            sampler.dim(),
            oracle.dim()
        )));
    }
    let fresh = SyntheticSet::from_oracle(sampler.draw(n, rng), oracle)?;
    let mut xi = prev.union(&fresh)?;
    xi.refresh_rho(net)?;
    let rho = xi.rho().expect("just refreshed").to_vec();

    let kept: Vec<usize> = (0..xi.len()).filter(|&i| rho[i] >= delta).collect();
    let floor = FILTER_FLOOR.min(xi.len());
    if kept.len() >= floor {
        return Ok(xi.select(&kept));
    }

    // Keep the highest-uncertainty points (ties to the lower index), then
    // restore input order.
    let mut by_rho: Vec<usize> = (0..xi.len()).collect();
    by_rho.sort_by(|&a, &b| {
        rho[b]
            .partial_cmp(&rho[a])
            .expect("rho is finite")
            .then(a.cmp(&b))
    });
    let mut top: Vec<usize> = by_rho.into_iter().take(floor).collect();
    top.sort_unstable();
    Ok(xi.select(&top))
}

fn ensure_strategy(cfg: &RunConfig, expected: Strategy, op: &str) -> Result<()> {
    if cfg.strategy != expected {
        return Err(Error::InvalidArgument(format!(
            "{op} requires strategy \"{expected}\", config says \"{}\"",
            cfg.strategy
        )));
    }
    Ok(())
}

fn check_run_inputs(cfg: &RunConfig, oracle: &Oracle, test: &LabeledDataset) -> Result<()> {
    cfg.validate()?;
    if cfg.sampler.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch(format!(
            "sampler dimension {} vs oracle dimension {}",
            cfg.sampler.dim(),
            oracle.dim()
        )));
    }
    if test.is_empty() {
        return Err(Error::BadData("test split is empty".into()));
    }
    if test.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch(format!(
            "test dimension {} vs oracle dimension {}",
            test.dim(),
            oracle.dim()
        )));
    }
    if test.n_classes() > oracle.n_classes() {
        return Err(Error::BadData(format!(
            "test split has {} classes but the oracle only {}",
            test.n_classes(),
            oracle.n_classes()
        )));
    }
    Ok(())
}

fn evaluate_accuracy(net: &CopyNet, test: &LabeledDataset) -> Result<f64> {
    copy_accuracy(&net.predict(test.points())?, test.labels())
}

/// How an iterative strategy evolves its synthetic set.
#[derive(Clone, Copy, PartialEq)]
enum SetPolicy {
    /// Union then uncertainty filter (full sequential scheme).
    Filtered,
    /// Union, keep everything.
    Accumulate,
    /// Fresh samples only.
    Replace,
}

/// Shared driver: iteration 0 trains from scratch on n fresh samples; each
/// later iteration rebuilds the set by policy, then trains warm-started.
///
/// All strategies consume the seeded RNG in the same order (one draw of n
/// points per iteration, one derived seed per training call), which makes
/// trajectories comparable across strategies under equal seeds.
fn run_iterative(
    cfg: &RunConfig,
    oracle: &Oracle,
    test: &LabeledDataset,
    policy: SetPolicy,
) -> Result<RunRecord> {
    let start = Instant::now();
    check_run_inputs(cfg, oracle, test)?;

    let memory_on = policy == SetPolicy::Filtered && cfg.lambda_mode != LambdaMode::Off;
    let logged_lambda0 = match (policy, cfg.lambda_mode) {
        (SetPolicy::Filtered, LambdaMode::Auto) | (SetPolicy::Filtered, LambdaMode::Fixed) => {
            cfg.lambda0
        }
        _ => 0.0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = CopyNet::new(
        cfg.sampler.dim(),
        &cfg.hidden,
        oracle.n_classes(),
        rng.next_u64(),
    )?;

    let mut set = SyntheticSet::from_oracle(cfg.sampler.draw(cfg.samples_per_iter, &mut rng), oracle)?;
    let train_seed = rng.next_u64();
    let (mut theta, _) = train_capacity_loop(
        &init,
        &set,
        cfg.schedule()?,
        cfg.budget()?,
        &init,
        0.0,
        cfg.batch_size,
        cfg.learning_rate,
        train_seed,
    )?;
    set.refresh_rho(&theta)?;

    let steps = cfg.iterations + 1;
    let mut accuracy = Vec::with_capacity(steps);
    let mut mean_rho = Vec::with_capacity(steps);
    let mut set_size = Vec::with_capacity(steps);
    let mut lambda_log = Vec::with_capacity(steps);
    accuracy.push(evaluate_accuracy(&theta, test)?);
    mean_rho.push(set.mean_rho().expect("rho refreshed"));
    set_size.push(set.len());
    lambda_log.push(logged_lambda0);

    let mut lam_state = LambdaState::new(cfg.lambda0, set.len())?;

    for _t in 1..=cfg.iterations {
        set = match policy {
            SetPolicy::Filtered => filter_step(
                &set,
                cfg.samples_per_iter,
                cfg.delta,
                &cfg.sampler,
                oracle,
                &theta,
                &mut rng,
            )?,
            SetPolicy::Accumulate => {
                let fresh = SyntheticSet::from_oracle(
                    cfg.sampler.draw(cfg.samples_per_iter, &mut rng),
                    oracle,
                )?;
                set.union(&fresh)?
            }
            SetPolicy::Replace => {
                SyntheticSet::from_oracle(cfg.sampler.draw(cfg.samples_per_iter, &mut rng), oracle)?
            }
        };

        let lambda_eff = if memory_on {
            match cfg.lambda_mode {
                LambdaMode::Auto => {
                    lam_state = update_lambda(lam_state, set.len());
                    lam_state.lambda
                }
                LambdaMode::Fixed => cfg.lambda0,
                LambdaMode::Off => unreachable!("memory_on excludes Off"),
            }
        } else {
            0.0
        };

        let train_seed = rng.next_u64();
        let (next_theta, _) = train_capacity_loop(
            &theta,
            &set,
            cfg.schedule()?,
            cfg.budget()?,
            &theta,
            lambda_eff,
            cfg.batch_size,
            cfg.learning_rate,
            train_seed,
        )?;
        theta = next_theta;
        set.refresh_rho(&theta)?;

        accuracy.push(evaluate_accuracy(&theta, test)?);
        mean_rho.push(set.mean_rho().expect("rho refreshed"));
        set_size.push(set.len());
        lambda_log.push(lambda_eff);
    }

    Ok(RunRecord {
        config: cfg.clone(),
        accuracy,
        mean_rho,
        set_size,
        lambda: lambda_log,
        final_net: theta,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Full sequential scheme: filter step, adaptive memory weight, warm-started
/// capacity training each iteration.
pub fn run_sequential(cfg: &RunConfig, oracle: &Oracle, test: &LabeledDataset) -> Result<RunRecord> {
    ensure_strategy(cfg, Strategy::Sequential, "run_sequential")?;
    run_iterative(cfg, oracle, test, SetPolicy::Filtered)
}

/// Accumulates every sample, no filtering and no memory term; the set grows
/// by exactly n per iteration.
pub fn run_pure_sequential(
    cfg: &RunConfig,
    oracle: &Oracle,
    test: &LabeledDataset,
) -> Result<RunRecord> {
    ensure_strategy(cfg, Strategy::PureSequential, "run_pure_sequential")?;
    run_iterative(cfg, oracle, test, SetPolicy::Accumulate)
}

/// Trains one net across iterations on fresh samples only (|S_t| = n).
pub fn run_online(cfg: &RunConfig, oracle: &Oracle, test: &LabeledDataset) -> Result<RunRecord> {
    ensure_strategy(cfg, Strategy::Online, "run_online")?;
    run_iterative(cfg, oracle, test, SetPolicy::Replace)
}

/// Draws all n*T samples at once and trains a single time; the record holds
/// one summary point.
pub fn run_single_pass(
    cfg: &RunConfig,
    oracle: &Oracle,
    test: &LabeledDataset,
) -> Result<RunRecord> {
    ensure_strategy(cfg, Strategy::SinglePass, "run_single_pass")?;
    let start = Instant::now();
    check_run_inputs(cfg, oracle, test)?;
    let total = cfg.samples_per_iter * cfg.iterations;
    if total == 0 {
        return Err(Error::InvalidArgument(
            "single-pass needs samples_per_iter * iterations >= 1".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = CopyNet::new(
        cfg.sampler.dim(),
        &cfg.hidden,
        oracle.n_classes(),
        rng.next_u64(),
    )?;
    let mut set = SyntheticSet::from_oracle(cfg.sampler.draw(total, &mut rng), oracle)?;
    let train_seed = rng.next_u64();
    let (theta, _) = train_capacity_loop(
        &init,
        &set,
        cfg.schedule()?,
        cfg.budget()?,
        &init,
        0.0,
        cfg.batch_size,
        cfg.learning_rate,
        train_seed,
    )?;
    set.refresh_rho(&theta)?;

    Ok(RunRecord {
        config: cfg.clone(),
        accuracy: vec![evaluate_accuracy(&theta, test)?],
        mean_rho: vec![set.mean_rho().expect("rho refreshed")],
        set_size: vec![set.len()],
        lambda: vec![0.0],
        final_net: theta,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
