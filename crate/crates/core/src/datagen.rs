//! Two-dimensional toy datasets, CSV loading, z-score standardization, and
//! the synthetic query samplers used to probe an oracle.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView1, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A batch of points in row-major layout: one row per point.
///
/// Every entry is finite; this is checked on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PointBatch(Array2<f64>);

impl PointBatch {
    /// Wraps a matrix whose rows are points. Rejects NaN/infinite entries.
    pub fn from_array(points: Array2<f64>) -> Result<Self> {
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "point batch contains a non-finite coordinate".into(),
            ));
        }
        Ok(PointBatch(points))
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    /// Ambient dimension (columns).
    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    /// Stacks `other` below `self`. Dimensions must agree.
    pub fn concat(&self, other: &PointBatch) -> Result<PointBatch> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot concatenate batches of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let stacked = concatenate(Axis(0), &[self.0.view(), other.0.view()])
            .expect("shapes checked above");
        Ok(PointBatch(stacked))
    }

    /// New batch containing the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointBatch {
        let mut out = Array2::zeros((indices.len(), self.dim()));
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).assign(&self.0.row(i));
        }
        PointBatch(out)
    }
}

/// Per-dimension mean and population standard deviation fitted on a batch.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationParams {
    /// Fits mean and population std (divide by `n`) per dimension.
    ///
    /// A dimension with zero spread cannot be standardized and is an error.
    pub fn fit(batch: &PointBatch) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::BadData("cannot fit standardization on an empty batch".into()));
        }
        let n = batch.len() as f64;
        let mean: Vec<f64> = batch.points().mean_axis(Axis(0)).unwrap().to_vec();
        let mut std = vec![0.0; batch.dim()];
        for (j, s) in std.iter_mut().enumerate() {
            let var = batch
                .points()
                .column(j)
                .iter()
                .map(|v| (v - mean[j]).powi(2))
                .sum::<f64>()
                / n;
            *s = var.sqrt();
            if *s == 0.0 {
                return Err(Error::BadData(format!(
                    "dimension {j} has zero variance; cannot standardize"
                )));
            }
        }
        Ok(StandardizationParams { mean, std })
    }

    /// Applies `(x - mean) / std` per dimension.
    pub fn apply(&self, batch: &PointBatch) -> Result<PointBatch> {
        self.check_dim(batch)?;
        let mut out = batch.points().clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        PointBatch::from_array(out)
    }

    /// Inverse transform `x * std + mean`.
    pub fn invert(&self, batch: &PointBatch) -> Result<PointBatch> {
        self.check_dim(batch)?;
        let mut out = batch.points().clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        PointBatch::from_array(out)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn check_dim(&self, batch: &PointBatch) -> Result<()> {
        if batch.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "standardization fitted on dimension {}, got batch of dimension {}",
                self.mean.len(),
                batch.dim()
            )));
        }
        Ok(())
    }
}

/// Points with integer class labels in `0..n_classes`.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    points: PointBatch,
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(points: PointBatch, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::InvalidArgument(
                "a labeled dataset needs at least two classes".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::BadData(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(LabeledDataset {
            points,
            labels,
            n_classes,
        })
    }

    pub fn points(&self) -> &PointBatch {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Number of points per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            points: self.points.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Splits into (train, test) preserving per-class proportions.
    ///
    /// Each class must have at least two members so both sides stay populated.
    pub fn split_stratified(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for class in 0..self.n_classes {
            let mut members: Vec<usize> = (0..self.len())
                .filter(|&i| self.labels[i] == class)
                .collect();
            if members.len() < 2 {
                return Err(Error::BadData(format!(
                    "class {class} has {} members; need at least 2 to split",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            let raw = (test_fraction * members.len() as f64).round() as usize;
            let n_test = raw.clamp(1, members.len() - 1);
            test_idx.extend_from_slice(&members[..n_test]);
            train_idx.extend_from_slice(&members[n_test..]);
        }
        Ok((self.select(&train_idx), self.select(&test_idx)))
    }

    /// Writes `x0,..,x{d-1},label` with a header row.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        writer.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for i in 0..self.len() {
            let mut record: Vec<String> =
                self.points.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.labels[i].to_string());
            writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads a CSV with a header row; the `label` column (any position) holds
    /// integer classes and every other column is a feature.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let label_col = headers
            .iter()
            .position(|h| h == "label")
            .ok_or_else(|| Error::BadData(format!("{}: no `label` column", path.display())))?;

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<usize> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let mut features = Vec::with_capacity(headers.len() - 1);
            for (col, field) in record.iter().enumerate() {
                if col == label_col {
                    labels.push(field.parse::<usize>().map_err(|_| {
                        Error::BadData(format!(
                            "{}: row {}: label `{field}` is not a non-negative integer",
                            path.display(),
                            line + 1
                        ))
                    })?);
                } else {
                    features.push(field.parse::<f64>().map_err(|_| {
                        Error::BadData(format!(
                            "{}: row {}: feature `{field}` is not numeric",
                            path.display(),
                            line + 1
                        ))
                    })?);
                }
            }
            rows.push(features);
        }
        if rows.is_empty() {
            return Err(Error::BadData(format!("{}: empty dataset", path.display())));
        }
        let dim = rows[0].len();
        let mut points = Array2::zeros((rows.len(), dim));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                points[[i, j]] = v;
            }
        }
        let n_classes = labels.iter().max().unwrap() + 1;
        LabeledDataset::new(PointBatch::from_array(points)?, labels, n_classes)
    }
}

/// Fits standardization on `ds` and returns the transformed dataset with the
/// fitted parameters (apply the same params to any held-out split).
pub fn standardize(ds: &LabeledDataset) -> Result<(LabeledDataset, StandardizationParams)> {
    let params = StandardizationParams::fit(ds.points())?;
    let points = params.apply(ds.points())?;
    let out = LabeledDataset::new(points, ds.labels().to_vec(), ds.n_classes())?;
    Ok((out, params))
}

// ---------------------------------------------------------------------------
// Toy geometry. The same curves and regions back both the generators and the
// analytic oracles, so a noiseless dataset is always consistent with its rule.
// ---------------------------------------------------------------------------

pub(crate) const SPIRAL_T0: f64 = 0.5 * PI;
pub(crate) const SPIRAL_T1: f64 = 3.0 * PI;

/// Point on spiral arm 0 or 1 at parameter `t`; radius grows linearly with
/// `t` and arm 1 is arm 0 rotated by pi.
pub(crate) fn spiral_xy(arm: usize, t: f64) -> (f64, f64) {
    let r = t / SPIRAL_T1;
    let sign = if arm == 0 { 1.0 } else { -1.0 };
    (sign * r * t.cos(), sign * r * t.sin())
}

/// Point on moon arc 0 (upper unit half-circle) or arc 1 (lower half-circle
/// of the circle centered at (1, 0.5)) at parameter `t` in `[0, pi]`.
pub(crate) fn moon_xy(class: usize, t: f64) -> (f64, f64) {
    if class == 0 {
        (t.cos(), t.sin())
    } else {
        (1.0 - t.cos(), 0.5 - t.sin())
    }
}

pub(crate) const YY_DISK_RADIUS: f64 = 1.0;
pub(crate) const YY_LOBE_RADIUS: f64 = 0.5;
pub(crate) const YY_DOT_RADIUS: f64 = 1.0 / 6.0;

/// Interlocking two-class region rule on the unit disk: two half-radius lobes
/// centered at (0, +-1/2) carry opposite classes with a small dot of the
/// other class inside each, and the remainder splits on the sign of x.
pub(crate) fn yinyang_label(x: f64, y: f64) -> usize {
    let d_up = (x * x + (y - YY_LOBE_RADIUS).powi(2)).sqrt();
    let d_down = (x * x + (y + YY_LOBE_RADIUS).powi(2)).sqrt();
    if d_up <= YY_DOT_RADIUS {
        return 1;
    }
    if d_down <= YY_DOT_RADIUS {
        return 0;
    }
    if d_up <= YY_LOBE_RADIUS {
        return 0;
    }
    if d_down <= YY_LOBE_RADIUS {
        return 1;
    }
    if x >= 0.0 {
        0
    } else {
        1
    }
}

fn check_generator_args(n: usize, noise: f64) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "generator size must be an even number >= 2, got {n}"
        )));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise must be finite and >= 0, got {noise}"
        )));
    }
    Ok(())
}

fn assemble(points: Vec<(f64, f64)>, labels: Vec<usize>) -> Result<LabeledDataset> {
    let mut arr = Array2::zeros((points.len(), 2));
    for (i, (x, y)) in points.iter().enumerate() {
        arr[[i, 0]] = *x;
        arr[[i, 1]] = *y;
    }
    LabeledDataset::new(PointBatch::from_array(arr)?, labels, 2)
}

/// Two interleaved spiral arms with `n/2` points per class and Gaussian
/// coordinate noise of standard deviation `noise`.
pub fn make_spirals(n: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    check_generator_args(n, noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for arm in 0..2 {
        for _ in 0..n / 2 {
            let t = rng.random_range(SPIRAL_T0..SPIRAL_T1);
            let (x, y) = spiral_xy(arm, t);
            let ex: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            points.push((x + noise * ex, y + noise * ey));
            labels.push(arm);
        }
    }
    assemble(points, labels)
}

/// Two facing half-circle arcs ("moons") with `n/2` points per class.
pub fn make_moons(n: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    check_generator_args(n, noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        for _ in 0..n / 2 {
            let t = rng.random_range(0.0..PI);
            let (x, y) = moon_xy(class, t);
            let ex: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            points.push((x + noise * ex, y + noise * ey));
            labels.push(class);
        }
    }
    assemble(points, labels)
}

/// Interlocking yin-yang regions sampled uniformly on the unit disk, `n/2`
/// points per class; noise is added after the clean point is labeled.
pub fn make_yinyang(n: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    check_generator_args(n, noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = n / 2;
    let mut buckets: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    while buckets[0].len() < target || buckets[1].len() < target {
        let x = rng.random_range(-YY_DISK_RADIUS..YY_DISK_RADIUS);
        let y = rng.random_range(-YY_DISK_RADIUS..YY_DISK_RADIUS);
        if x * x + y * y > YY_DISK_RADIUS * YY_DISK_RADIUS {
            continue;
        }
        let label = yinyang_label(x, y);
        if buckets[label].len() >= target {
            continue;
        }
        let ex: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        buckets[label].push((x + noise * ex, y + noise * ey));
    }
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (class, bucket) in buckets.iter().enumerate() {
        for &(x, y) in bucket {
            points.push((x, y));
            labels.push(class);
        }
    }
    assemble(points, labels)
}

/// Distribution the copying process draws synthetic queries from.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sampler {
    /// Independent standard normal coordinates.
    StandardNormal { dim: usize },
    /// Uniform over an axis-aligned box.
    UniformBox { lows: Vec<f64>, highs: Vec<f64> },
}

impl Sampler {
    pub fn standard_normal(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("sampler dimension must be >= 1".into()));
        }
        Ok(Sampler::StandardNormal { dim })
    }

    pub fn uniform_box(lows: Vec<f64>, highs: Vec<f64>) -> Result<Self> {
        if lows.is_empty() || lows.len() != highs.len() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds must be non-empty and equal length, got {} and {}",
                lows.len(),
                highs.len()
            )));
        }
        for (j, (lo, hi)) in lows.iter().zip(&highs).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "box bounds for dimension {j} must be finite with low < high, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Sampler::UniformBox { lows, highs })
    }

    /// Validates bounds of a deserialized sampler.
    pub fn validate(&self) -> Result<()> {
        match self {
            Sampler::StandardNormal { dim } => Sampler::standard_normal(*dim).map(|_| ()),
            Sampler::UniformBox { lows, highs } => {
                Sampler::uniform_box(lows.clone(), highs.clone()).map(|_| ())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Sampler::StandardNormal { dim } => *dim,
            Sampler::UniformBox { lows, .. } => lows.len(),
        }
    }

    /// Draws `n` points, consuming the RNG row by row.
    pub fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> PointBatch {
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                out[[i, j]] = match self {
                    Sampler::StandardNormal { .. } => rng.sample(StandardNormal),
                    Sampler::UniformBox { lows, highs } => rng.random_range(lows[j]..highs[j]),
                };
            }
        }
        PointBatch(out)
    }
}

/// Draws `n` standard-normal points of dimension `d` from a fresh seeded RNG.
pub fn draw_normal(n: usize, d: usize, seed: u64) -> Result<PointBatch> {
    let sampler = Sampler::standard_normal(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.draw(n, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn draw_normal_is_reproducible_and_seed_sensitive() {
        let a = draw_normal(5, 3, 7).unwrap();
        let b = draw_normal(5, 3, 7).unwrap();
        let c = draw_normal(5, 3, 8).unwrap();
        assert_eq!(a.points(), b.points());
        assert_ne!(a.points(), c.points());
        assert_eq!((a.len(), a.dim()), (5, 3));
    }

    #[test]
    fn draw_normal_matches_standard_moments() {
        let batch = draw_normal(20_000, 2, 11).unwrap();
        for j in 0..2 {
            let col = batch.points().column(j);
            let mean = col.mean().unwrap();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 0.03, "mean of dim {j} was {mean}");
            assert!((var.sqrt() - 1.0).abs() < 0.03, "std of dim {j} was {}", var.sqrt());
        }
    }

    #[test]
    fn draw_normal_rejects_zero_dim() {
        assert!(draw_normal(5, 0, 1).is_err());
    }

    #[test]
    fn standardize_two_point_line() {
        let pts = PointBatch::from_array(ndarray::array![[1.0], [3.0]]).unwrap();
        let params = StandardizationParams::fit(&pts).unwrap();
        assert_eq!(params.mean, vec![2.0]);
        assert_eq!(params.std, vec![1.0]);
        let out = params.apply(&pts).unwrap();
        assert_eq!(out.points(), &ndarray::array![[-1.0], [1.0]]);
    }

    #[test]
    fn standardize_round_trips() {
        let batch = draw_normal(64, 3, 3).unwrap();
        let params = StandardizationParams::fit(&batch).unwrap();
        let back = params.invert(&params.apply(&batch).unwrap()).unwrap();
        for (a, b) in batch.points().iter().zip(back.points().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn standardize_rejects_constant_dimension() {
        let pts = PointBatch::from_array(ndarray::array![[1.0, 2.0], [1.0, 3.0]]).unwrap();
        assert!(StandardizationParams::fit(&pts).is_err());
    }

    #[test]
    fn standardization_params_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        let params = StandardizationParams {
            mean: vec![0.5, -0.25],
            std: vec![2.0, 0.125],
        };
        params.save_json(&path).unwrap();
        assert_eq!(StandardizationParams::load_json(&path).unwrap(), params);
    }

    #[test]
    fn spirals_are_balanced_and_on_curve_when_noiseless() {
        let ds = make_spirals(200, 0.0, 5).unwrap();
        assert_eq!(ds.class_counts(), vec![100, 100]);
        for i in 0..ds.len() {
            let r = ds.points().row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            // Radius on either arm stays within [t0/t1, 1].
            assert!((SPIRAL_T0 / SPIRAL_T1 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn moons_lie_on_their_arcs_when_noiseless() {
        let ds = make_moons(100, 0.0, 5).unwrap();
        assert_eq!(ds.class_counts(), vec![50, 50]);
        for i in 0..ds.len() {
            let p = ds.points().row(i);
            if ds.labels()[i] == 0 {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
                assert!(p[1] >= -1e-12);
            } else {
                let r = ((p[0] - 1.0).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
                assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
                assert!(p[1] <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn yinyang_labels_match_region_rule() {
        let ds = make_yinyang(300, 0.0, 9).unwrap();
        assert_eq!(ds.class_counts(), vec![150, 150]);
        for i in 0..ds.len() {
            let p = ds.points().row(i);
            assert!(p[0] * p[0] + p[1] * p[1] <= 1.0 + 1e-12);
            assert_eq!(ds.labels()[i], yinyang_label(p[0], p[1]));
        }
    }

    #[test]
    fn generators_reject_odd_sizes_and_negative_noise() {
        assert!(make_spirals(7, 0.0, 1).is_err());
        assert!(make_moons(10, -0.1, 1).is_err());
        assert!(make_yinyang(0, 0.0, 1).is_err());
    }

    #[test]
    fn split_preserves_class_ratios() {
        let ds = make_moons(200, 0.05, 3).unwrap();
        let (train, test) = ds.split_stratified(0.25, 17).unwrap();
        assert_eq!(train.class_counts(), vec![75, 75]);
        assert_eq!(test.class_counts(), vec![25, 25]);
        assert_eq!(train.len() + test.len(), ds.len());
        // Same seed reproduces the same split.
        let (train2, _) = ds.split_stratified(0.25, 17).unwrap();
        assert_eq!(train.points(), train2.points());
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = make_moons(20, 0.0, 3).unwrap();
        assert!(ds.split_stratified(0.0, 1).is_err());
        assert!(ds.split_stratified(1.0, 1).is_err());
        assert!(ds.split_stratified(-0.5, 1).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let ds = make_spirals(40, 0.01, 21).unwrap();
        ds.to_csv(&path).unwrap();
        let back = LabeledDataset::from_csv(&path).unwrap();
        assert_eq!(ds.points(), back.points());
        assert_eq!(ds.labels(), back.labels());
        assert_eq!(ds.n_classes(), back.n_classes());
    }

    #[test]
    fn csv_requires_label_column_and_numeric_features() {
        let dir = tempfile::tempdir().unwrap();
        let no_label = dir.path().join("no_label.csv");
        std::fs::write(&no_label, "x0,x1\n1.0,2.0\n").unwrap();
        assert!(matches!(
            LabeledDataset::from_csv(&no_label),
            Err(Error::BadData(_))
        ));

        let bad_feature = dir.path().join("bad_feature.csv");
        std::fs::write(&bad_feature, "x0,label\nabc,0\n").unwrap();
        assert!(matches!(
            LabeledDataset::from_csv(&bad_feature),
            Err(Error::BadData(_))
        ));
    }

    #[test]
    fn uniform_box_sampler_stays_in_bounds() {
        let sampler = Sampler::uniform_box(vec![-1.0, 0.0], vec![1.0, 4.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = sampler.draw(500, &mut rng);
        for row in batch.points().rows() {
            assert!(row[0] >= -1.0 && row[0] < 1.0);
            assert!(row[1] >= 0.0 && row[1] < 4.0);
        }
    }

    #[test]
    fn uniform_box_rejects_inverted_bounds() {
        assert!(Sampler::uniform_box(vec![1.0], vec![1.0]).is_err());
        assert!(Sampler::uniform_box(vec![0.0], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn generators_stay_balanced_and_finite(
            half in 1usize..60,
            noise in 0.0f64..0.3,
            seed in 0u64..1000,
        ) {
            let n = half * 2;
            for ds in [
                make_spirals(n, noise, seed).unwrap(),
                make_moons(n, noise, seed).unwrap(),
                make_yinyang(n, noise, seed).unwrap(),
            ] {
                prop_assert_eq!(ds.class_counts(), vec![half, half]);
                prop_assert!(ds.points().points().iter().all(|v| v.is_finite()));
            }
        }

        #[test]
        fn standardized_batch_has_zero_mean_unit_std(seed in 0u64..500) {
            let batch = draw_normal(50, 2, seed).unwrap();
            let params = StandardizationParams::fit(&batch).unwrap();
            let out = params.apply(&batch).unwrap();
            let fitted = StandardizationParams::fit(&out).unwrap();
            for j in 0..2 {
                prop_assert!(fitted.mean[j].abs() < 1e-9);
                prop_assert!((fitted.std[j] - 1.0).abs() < 1e-9);
            }
        }
    }
}
