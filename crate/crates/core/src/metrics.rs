//! Evaluation quantities for copying runs — copy accuracy, the normalized
//! convergence-area metric, the sample-efficiency metric, operational-point
//! selection — plus a finite-grid checker for the uncertainty-mass
//! convergence bound behind the sequential scheme.

use serde::{Deserialize, Serialize};

use crate::engine::{RunRecord, Strategy};
use crate::error::{Error, Result};
use crate::util::{argmax, trapezoid};

/// Default weight for the exponential uncertainty mass; it rescales the mass
/// without moving its argmax, so there is little reason to change it.
pub const DEFAULT_GAMMA: f64 = 1.0;

/// Fraction of predictions matching the reference labels.
pub fn copy_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument(
            "accuracy needs at least one prediction".into(),
        ));
    }
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Trapezoidal area of `curve` over t = 0..T, normalized by T times the
/// curve maximum. In (0, 1] for non-negative curves with a positive max.
fn normalized_curve_area(curve: &[f64]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::InvalidArgument(
            "curve needs at least two points".into(),
        ));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadData("curve contains non-finite values".into()));
    }
    let max = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::InvalidArgument(
            "curve maximum must be positive".into(),
        ));
    }
    let t_max = (curve.len() - 1) as f64;
    Ok(trapezoid(curve) / (t_max * max))
}

/// Convergence metric: normalized area under the accuracy curve. A constant
/// curve scores 1; a linear ramp from zero scores 0.5; curves that saturate
/// early score close to 1.
pub fn conv_metric(acc_curve: &[f64]) -> Result<f64> {
    normalized_curve_area(acc_curve)
}

/// Alternative reading that applies the same normalized-area formula to the
/// per-iteration accuracy increments instead of the raw curve. Kept behind
/// an explicit call because the raw-curve reading is the one consistent with
/// the steady-state interpretation below.
pub fn conv_metric_increments(acc_curve: &[f64]) -> Result<f64> {
    if acc_curve.len() < 3 {
        return Err(Error::InvalidArgument(
            "increment curve needs at least three accuracy points".into(),
        ));
    }
    let increments: Vec<f64> = acc_curve.windows(2).map(|w| w[1] - w[0]).collect();
    normalized_curve_area(&increments)
}

/// Fraction of the run after which a saturating curve is effectively steady:
/// 2(1 - conv). A conv of 0.9 means steady state near 0.2 T.
pub fn conv_steady_state_fraction(conv: f64) -> f64 {
    2.0 * (1.0 - conv)
}

/// True when the curve never drops by more than `tol` between consecutive
/// points; the steady-state interpretation only makes sense for such curves.
pub fn is_effectively_nondecreasing(curve: &[f64], tol: f64) -> bool {
    curve.windows(2).all(|w| w[1] >= w[0] - tol)
}

/// Efficiency metric: 1 minus the area under the set-size curve relative to
/// the keep-everything reference n·t. Keeping all samples scores exactly 0;
/// an (unreachable) empty set at every iteration scores 1.
pub fn eff_metric(sizes: &[usize], n: usize) -> Result<f64> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArgument(
            "efficiency needs at least two set sizes (T >= 1)".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let curve: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let t_max = (sizes.len() - 1) as f64;
    let reference = n as f64 * t_max * t_max / 2.0;
    Ok(1.0 - trapezoid(&curve) / reference)
}

/// Rough fraction of the available sample budget a run actually holds on
/// average: (1 - eff) / 2. Callers pass eff <= 1.
pub fn expected_sample_fraction(eff: f64) -> f64 {
    (1.0 - eff) / 2.0
}

/// Per-run metric digest used for sweep aggregation and the results CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub dataset: String,
    pub strategy: Strategy,
    pub delta: f64,
    pub lambda0: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub conv: f64,
    pub eff: f64,
    pub mean_rho: Vec<f64>,
    pub final_size: usize,
}

/// Header matching [`MetricSummary::csv_row`].
pub fn results_csv_header() -> &'static str {
    "dataset,strategy,delta,lambda0,seed,accuracy,conv,eff,final_size"
}

impl MetricSummary {
    /// Computes the digest from a finished run; conv and eff use the same T
    /// and n the run used. Runs recording fewer than two iterations (the
    /// single-pass baseline) have no curves to integrate and are rejected.
    pub fn from_record(dataset: impl Into<String>, record: &RunRecord) -> Result<Self> {
        let conv = conv_metric(&record.accuracy)?;
        let eff = eff_metric(&record.set_size, record.config.samples_per_iter)?;
        Ok(MetricSummary {
            dataset: dataset.into(),
            strategy: record.config.strategy,
            delta: record.config.delta,
            lambda0: record.config.lambda0,
            seed: record.config.seed,
            accuracy: *record.accuracy.last().expect("validated by conv_metric"),
            conv,
            eff,
            mean_rho: record.mean_rho.clone(),
            final_size: *record.set_size.last().expect("validated by eff_metric"),
        })
    }

    /// One results-CSV line (no trailing newline), matching
    /// [`results_csv_header`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.strategy,
            self.delta,
            self.lambda0,
            self.seed,
            self.accuracy,
            self.conv,
            self.eff,
            self.final_size
        )
    }
}

/// Indices (into the caller's summary list) of the best runs among those
/// whose accuracy stays within 5% of the single-pass result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalPoints {
    pub best_accuracy: usize,
    pub best_efficiency: usize,
    pub best_convergence: usize,
    pub qualifying: Vec<usize>,
}

/// Selects operational points among `runs`: the qualifying set holds every
/// run with accuracy above 0.95 times `single_pass_accuracy`, and the three
/// winners maximize accuracy, eff, and conv over that set. Ties break toward
/// higher eff, then higher conv, then lower delta. Returns `None` when no
/// run qualifies.
pub fn select_operational_points(
    runs: &[MetricSummary],
    single_pass_accuracy: f64,
) -> Result<Option<OperationalPoints>> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("no runs to select from".into()));
    }
    if !single_pass_accuracy.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "single-pass accuracy must be finite, got {single_pass_accuracy}"
        )));
    }
    for (i, run) in runs.iter().enumerate() {
        if !(run.accuracy.is_finite() && run.conv.is_finite() && run.eff.is_finite()) {
            return Err(Error::BadData(format!(
                "run {i} has non-finite metrics"
            )));
        }
    }

    let qualifying: Vec<usize> = (0..runs.len())
        .filter(|&i| runs[i].accuracy > 0.95 * single_pass_accuracy)
        .collect();
    if qualifying.is_empty() {
        return Ok(None);
    }

    // Lexicographic preference: the criterion itself, then the tie ladder.
    let pick = |criterion: fn(&MetricSummary) -> f64| -> usize {
        *qualifying
            .iter()
            .max_by(|&&a, &&b| {
                let (ra, rb) = (&runs[a], &runs[b]);
                criterion(ra)
                    .partial_cmp(&criterion(rb))
                    .expect("metrics validated finite")
                    .then(ra.eff.partial_cmp(&rb.eff).expect("finite"))
                    .then(ra.conv.partial_cmp(&rb.conv).expect("finite"))
                    .then(rb.delta.partial_cmp(&ra.delta).expect("finite"))
            })
            .expect("qualifying set is nonempty")
    };

    Ok(Some(OperationalPoints {
        best_accuracy: pick(|r| r.accuracy),
        best_efficiency: pick(|r| r.eff),
        best_convergence: pick(|r| r.conv),
        qualifying,
    }))
}

/// A finite family of 1-D hard threshold classifiers (predict class 1 iff
/// x >= theta) over a fixed labeled master set. Small enough to evaluate the
/// uncertainty mass exhaustively.
#[derive(Clone, Debug)]
pub struct ThresholdProblem {
    thetas: Vec<f64>,
    xs: Vec<f64>,
    labels: Vec<usize>,
}

impl ThresholdProblem {
    pub fn new(thetas: Vec<f64>, xs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::InvalidArgument("theta grid is empty".into()));
        }
        if xs.is_empty() {
            return Err(Error::InvalidArgument("master set is empty".into()));
        }
        if xs.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points vs {} labels",
                xs.len(),
                labels.len()
            )));
        }
        if thetas.iter().chain(xs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::BadData("thresholds and points must be finite".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::BadData("threshold labels must be 0 or 1".into()));
        }
        Ok(ThresholdProblem { thetas, xs, labels })
    }

    /// Random instance: an even theta grid on [-3, 3], uniform points on the
    /// same interval, labels from a random true threshold with a few flips.
    pub fn random(n_thetas: usize, n_points: usize, seed: u64) -> Result<Self> {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        if n_thetas == 0 || n_points == 0 {
            return Err(Error::InvalidArgument(
                "need at least one threshold and one point".into(),
            ));
        }
        let thetas: Vec<f64> = (0..n_thetas)
            .map(|i| -3.0 + 6.0 * i as f64 / (n_thetas.max(2) - 1) as f64)
            .collect();
        let truth = rng.random_range(-2.0..2.0);
        let xs: Vec<f64> = (0..n_points).map(|_| rng.random_range(-3.0..3.0)).collect();
        let labels: Vec<usize> = xs
            .iter()
            .map(|&x| {
                let clean = usize::from(x >= truth);
                if rng.random_range(0.0..1.0) < 0.1 {
                    1 - clean
                } else {
                    clean
                }
            })
            .collect();
        ThresholdProblem::new(thetas, xs, labels)
    }

    pub fn n_points(&self) -> usize {
        self.xs.len()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// Squared uncertainty of a hard classifier on one point: 0 when the
    /// threshold classifies it correctly, 1 otherwise.
    fn rho_sq(&self, theta: f64, i: usize) -> f64 {
        let predicted = usize::from(self.xs[i] >= theta);
        if predicted == self.labels[i] {
            0.0
        } else {
            1.0
        }
    }

    /// Uncertainty mass F(theta) = sum over the subset of exp(-gamma rho^2).
    fn mass(&self, theta: f64, subset_len: usize, gamma: f64) -> f64 {
        self.mass_range(theta, 0, subset_len, gamma)
    }

    /// Mass restricted to the points with index in `start..end`.
    fn mass_range(&self, theta: f64, start: usize, end: usize, gamma: f64) -> f64 {
        (start..end)
            .map(|i| (-gamma * self.rho_sq(theta, i)).exp())
            .sum()
    }

    /// How many of the first `subset_len` points the threshold classifies
    /// correctly. The mass is strictly increasing in this count, so the mass
    /// argmax always achieves the maximal count.
    pub fn correct_count(&self, theta: f64, subset_len: usize) -> usize {
        (0..subset_len)
            .filter(|&i| self.rho_sq(theta, i) == 0.0)
            .count()
    }
}

/// Bound check at one subset size.
#[derive(Clone, Debug, Serialize)]
pub struct LevelReport {
    pub size: usize,
    /// sup over theta of |F - F_i|.
    pub sup_diff: f64,
    /// The theoretical cap |S| - size.
    pub bound: f64,
    pub bound_holds: bool,
    /// Index into the theta grid maximizing F_i.
    pub argmax_index: usize,
}

/// Outcome of [`check_theorem_convergence`].
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub gamma: f64,
    /// Argmax of the mass over the full master set.
    pub master_argmax: usize,
    pub levels: Vec<LevelReport>,
    pub all_bounds_hold: bool,
    /// First level index from which every argmax matches the master's, if
    /// the sequence stabilizes at all.
    pub stabilized_from: Option<usize>,
}

impl ConvergenceReport {
    pub fn stabilized(&self) -> bool {
        self.stabilized_from.is_some()
    }
}

/// Evaluates the uncertainty mass F_i over nested prefix subsets of the
/// master set and verifies, exhaustively over the theta grid, that
/// (a) sup |F - F_i| never exceeds the excluded-point count |S \ S_i| and
/// (b) the argmax stabilizes to the master argmax from some level on.
///
/// Subsets are prefixes, so `sizes` must be strictly increasing, at least 1,
/// and at most the master set size.
pub fn check_theorem_convergence(
    problem: &ThresholdProblem,
    gamma: f64,
    sizes: &[usize],
) -> Result<ConvergenceReport> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be finite and > 0, got {gamma}"
        )));
    }
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("need at least one subset size".into()));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "subset sizes must be strictly increasing (nested prefixes)".into(),
        ));
    }
    if sizes[0] == 0 {
        return Err(Error::InvalidArgument("subset sizes must be >= 1".into()));
    }
    let total = problem.n_points();
    if *sizes.last().expect("nonempty") > total {
        return Err(Error::InvalidArgument(format!(
            "largest subset size {} exceeds the master set size {total}",
            sizes.last().expect("nonempty")
        )));
    }

    let master: Vec<f64> = problem
        .thetas
        .iter()
        .map(|&t| problem.mass(t, total, gamma))
        .collect();
    let master_argmax = argmax(&master);

    let mut levels = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let masses: Vec<f64> = problem
            .thetas
            .iter()
            .map(|&t| problem.mass(t, size, gamma))
            .collect();
        // Over a nested prefix, F - F_i is exactly the mass of the excluded
        // suffix; summing it directly avoids cancellation between two large
        // rounded totals, so the attained-equality case stays exact.
        let sup_diff = problem
            .thetas
            .iter()
            .map(|&t| problem.mass_range(t, size, total, gamma))
            .fold(0.0, f64::max);
        let bound = (total - size) as f64;
        levels.push(LevelReport {
            size,
            sup_diff,
            bound,
            bound_holds: sup_diff <= bound,
            argmax_index: argmax(&masses),
        });
    }

    let all_bounds_hold = levels.iter().all(|l| l.bound_holds);
    let stabilized_from = (0..levels.len())
        .find(|&j| levels[j..].iter().all(|l| l.argmax_index == master_argmax));

    Ok(ConvergenceReport {
        gamma,
        master_argmax,
        levels,
        all_bounds_hold,
        stabilized_from,
    })
}
