//! Black-box interface to the original model: hard one-hot labels for
//! arbitrary query points, backed by analytic rules, a 1-NN table, or a
//! CSV-loaded lookup grid.

use ndarray::Array2;

use crate::datagen::{
    spiral_xy, yinyang_label, LabeledDataset, PointBatch, StandardizationParams, SPIRAL_T0,
    SPIRAL_T1,
};
use crate::error::{Error, Result};

/// Closed-form toy decision rules over the plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyRule {
    Spirals,
    Moons,
    YinYang,
}

/// Resolution of the polyline used to measure distance to a spiral arm.
const SPIRAL_LOOKUP_POINTS: usize = 4096;

#[derive(Clone, Debug)]
struct AnalyticOracle {
    rule: ToyRule,
    /// Maps standardized queries back to the raw space the rule lives in.
    to_raw: Option<StandardizationParams>,
    /// Dense arm polylines, present only for the spiral rule.
    spiral_arms: Option<Vec<Vec<(f64, f64)>>>,
}

#[derive(Clone, Debug)]
struct NnOracle {
    reference: LabeledDataset,
}

/// Axis-aligned lookup grid: per-dimension cell centers plus a row-major
/// label table (first dimension is the major axis).
#[derive(Clone, Debug)]
pub struct GridOracle {
    axes: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
}

#[derive(Clone, Debug)]
enum OracleKind {
    Analytic(AnalyticOracle),
    NearestNeighbor(NnOracle),
    Grid(GridOracle),
}

/// The original model, observed only through hard labels.
///
/// Immutable after construction; safe to share across threads.
#[derive(Clone, Debug)]
pub struct Oracle {
    kind: OracleKind,
    n_classes: usize,
    dim: usize,
}

impl Oracle {
    /// Oracle evaluating a closed-form toy rule. When `to_raw` is given,
    /// standardized queries are mapped back to raw coordinates first.
    pub fn analytic(rule: ToyRule, to_raw: Option<StandardizationParams>) -> Result<Self> {
        if let Some(params) = &to_raw {
            if params.mean.len() != 2 {
                return Err(Error::DimensionMismatch(
                    "toy rules are 2-dimensional; standardization params must match".into(),
                ));
            }
        }
        let spiral_arms = (rule == ToyRule::Spirals).then(|| {
            (0..2)
                .map(|arm| {
                    (0..SPIRAL_LOOKUP_POINTS)
                        .map(|k| {
                            let t = SPIRAL_T0
                                + (SPIRAL_T1 - SPIRAL_T0) * k as f64
                                    / (SPIRAL_LOOKUP_POINTS - 1) as f64;
                            spiral_xy(arm, t)
                        })
                        .collect()
                })
                .collect()
        });
        Ok(Oracle {
            kind: OracleKind::Analytic(AnalyticOracle {
                rule,
                to_raw,
                spiral_arms,
            }),
            n_classes: 2,
            dim: 2,
        })
    }

    /// Oracle built from a lookup grid.
    pub fn from_grid(grid: GridOracle) -> Self {
        let n_classes = grid.n_classes;
        let dim = grid.axes.len();
        Oracle {
            kind: OracleKind::Grid(grid),
            n_classes,
            dim,
        }
    }

    /// Loads a lookup grid whose cells are enumerated as labeled points in a
    /// CSV file (datagen format) covering a full cartesian product of
    /// per-dimension coordinates.
    pub fn grid_from_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let ds = LabeledDataset::from_csv(path)?;
        Ok(Oracle::from_grid(GridOracle::from_points(&ds)?))
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Hard labels for a batch, one one-hot row per query point.
    pub fn predict_onehot(&self, batch: &PointBatch) -> Result<Array2<f64>> {
        let labels = self.predict_labels(batch)?;
        let mut out = Array2::zeros((labels.len(), self.n_classes));
        for (i, &l) in labels.iter().enumerate() {
            out[[i, l]] = 1.0;
        }
        Ok(out)
    }

    /// Hard labels for a batch as class indices.
    pub fn predict_labels(&self, batch: &PointBatch) -> Result<Vec<usize>> {
        if batch.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "oracle expects dimension {}, got batch of dimension {}",
                self.dim,
                batch.dim()
            )));
        }
        match &self.kind {
            OracleKind::Analytic(a) => a.predict(batch),
            OracleKind::NearestNeighbor(nn) => Ok(nn.predict(batch)),
            OracleKind::Grid(g) => Ok(g.predict(batch)),
        }
    }
}

/// Oracle that labels a query with the label of its nearest reference point
/// (Euclidean distance, ties to the lowest reference index).
pub fn make_nn_oracle(reference: &LabeledDataset) -> Result<Oracle> {
    if reference.is_empty() {
        return Err(Error::BadData(
            "nearest-neighbor oracle needs a nonempty reference set".into(),
        ));
    }
    Ok(Oracle {
        n_classes: reference.n_classes(),
        dim: reference.dim(),
        kind: OracleKind::NearestNeighbor(NnOracle {
            reference: reference.clone(),
        }),
    })
}

impl AnalyticOracle {
    fn predict(&self, batch: &PointBatch) -> Result<Vec<usize>> {
        let raw = match &self.to_raw {
            Some(params) => params.invert(batch)?,
            None => batch.clone(),
        };
        let mut labels = Vec::with_capacity(raw.len());
        for row in raw.points().rows() {
            let (x, y) = (row[0], row[1]);
            let label = match self.rule {
                ToyRule::Spirals => self.nearest_spiral_arm(x, y),
                ToyRule::Moons => nearest_moon_arc(x, y),
                ToyRule::YinYang => yinyang_label(x, y),
            };
            labels.push(label);
        }
        Ok(labels)
    }

    fn nearest_spiral_arm(&self, x: f64, y: f64) -> usize {
        let arms = self.spiral_arms.as_ref().expect("built for spiral rule");
        let mut best = (f64::INFINITY, 0);
        for (arm, polyline) in arms.iter().enumerate() {
            for &(px, py) in polyline {
                let d2 = (x - px).powi(2) + (y - py).powi(2);
                if d2 < best.0 {
                    best = (d2, arm);
                }
            }
        }
        best.1
    }
}

/// Distance from a point to each moon arc; the nearer arc's class wins and
/// exact ties go to class 0.
fn nearest_moon_arc(x: f64, y: f64) -> usize {
    // Arc 0: upper half of the unit circle at the origin.
    let d0 = if y >= 0.0 {
        ((x * x + y * y).sqrt() - 1.0).abs()
    } else {
        let left = ((x + 1.0).powi(2) + y * y).sqrt();
        let right = ((x - 1.0).powi(2) + y * y).sqrt();
        left.min(right)
    };
    // Arc 1: lower half of the unit circle centered at (1, 0.5).
    let (qx, qy) = (x - 1.0, y - 0.5);
    let d1 = if qy <= 0.0 {
        ((qx * qx + qy * qy).sqrt() - 1.0).abs()
    } else {
        let left = ((qx + 1.0).powi(2) + qy * qy).sqrt();
        let right = ((qx - 1.0).powi(2) + qy * qy).sqrt();
        left.min(right)
    };
    if d0 <= d1 {
        0
    } else {
        1
    }
}

impl NnOracle {
    fn predict(&self, batch: &PointBatch) -> Vec<usize> {
        let refs = self.reference.points().points();
        batch
            .points()
            .rows()
            .into_iter()
            .map(|q| {
                let mut best = (f64::INFINITY, 0usize);
                for (i, r) in refs.rows().into_iter().enumerate() {
                    let d2: f64 = q
                        .iter()
                        .zip(r.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    // Strict `<` keeps the lowest index on ties.
                    if d2 < best.0 {
                        best = (d2, i);
                    }
                }
                self.reference.labels()[best.1]
            })
            .collect()
    }
}

impl GridOracle {
    /// Builds a grid from per-dimension cell centers and a row-major label
    /// table whose length is the product of the axis lengths.
    pub fn new(axes: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        for (j, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(Error::InvalidArgument(format!("grid axis {j} is empty")));
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::BadData(format!(
                    "grid axis {j} must be finite and strictly increasing"
                )));
            }
        }
        let cells: usize = axes.iter().map(Vec::len).product();
        if labels.len() != cells {
            return Err(Error::DimensionMismatch(format!(
                "grid has {cells} cells but {} labels",
                labels.len()
            )));
        }
        if n_classes < 2 || labels.iter().any(|&l| l >= n_classes) {
            return Err(Error::BadData(
                "grid labels must fit in at least two classes".into(),
            ));
        }
        Ok(GridOracle {
            axes,
            labels,
            n_classes,
        })
    }

    /// Reconstructs a grid from labeled cell-center points. The points must
    /// cover the full cartesian product of the coordinates seen per axis,
    /// each cell exactly once.
    pub fn from_points(ds: &LabeledDataset) -> Result<Self> {
        let dim = ds.dim();
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for (j, axis) in axes.iter_mut().enumerate() {
            let mut vals: Vec<f64> = ds.points().points().column(j).to_vec();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            *axis = vals;
        }
        let cells: usize = axes.iter().map(Vec::len).product();
        if cells != ds.len() {
            return Err(Error::BadData(format!(
                "grid points do not form a full cartesian product: {} cells implied, {} points",
                cells,
                ds.len()
            )));
        }
        let mut labels = vec![usize::MAX; cells];
        for i in 0..ds.len() {
            let mut idx = 0;
            for (j, axis) in axes.iter().enumerate() {
                let v = ds.points().row(i)[j];
                let pos = axis
                    .binary_search_by(|probe| probe.partial_cmp(&v).unwrap())
                    .map_err(|_| Error::BadData("grid point drifted off its axis".into()))?;
                idx = idx * axis.len() + pos;
            }
            if labels[idx] != usize::MAX {
                return Err(Error::BadData("duplicate grid cell in input points".into()));
            }
            labels[idx] = ds.labels()[i];
        }
        GridOracle::new(axes, labels, ds.n_classes())
    }

    fn predict(&self, batch: &PointBatch) -> Vec<usize> {
        batch
            .points()
            .rows()
            .into_iter()
            .map(|row| {
                let mut idx = 0;
                for (j, axis) in self.axes.iter().enumerate() {
                    idx = idx * axis.len() + nearest_coordinate(axis, row[j]);
                }
                self.labels[idx]
            })
            .collect()
    }
}

/// Index of the axis coordinate nearest to `v` (ties to the lower index);
/// queries beyond either end clamp to the outermost cell.
fn nearest_coordinate(axis: &[f64], v: f64) -> usize {
    match axis.binary_search_by(|probe| probe.partial_cmp(&v).unwrap()) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i == axis.len() => axis.len() - 1,
        Err(i) => {
            if v - axis[i - 1] <= axis[i] - v {
                i - 1
            } else {
                i
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{
        make_moons, make_spirals, make_yinyang, standardize, LabeledDataset, PointBatch,
    };
    use ndarray::array;
    use proptest::prelude::*;

    fn batch(rows: Vec<[f64; 2]>) -> PointBatch {
        let mut arr = Array2::zeros((rows.len(), 2));
        for (i, r) in rows.iter().enumerate() {
            arr[[i, 0]] = r[0];
            arr[[i, 1]] = r[1];
        }
        PointBatch::from_array(arr).unwrap()
    }

    #[test]
    fn nn_oracle_is_identity_on_its_reference() {
        let ds = make_spirals(100, 0.0, 3).unwrap();
        let oracle = make_nn_oracle(&ds).unwrap();
        let labels = oracle.predict_labels(ds.points()).unwrap();
        assert_eq!(labels, ds.labels());
    }

    #[test]
    fn nn_tie_goes_to_lowest_reference_index() {
        let ds = LabeledDataset::new(batch(vec![[0.0, 0.0], [2.0, 0.0]]), vec![0, 1], 2).unwrap();
        let oracle = make_nn_oracle(&ds).unwrap();
        assert_eq!(oracle.predict_labels(&batch(vec![[1.0, 0.0]])).unwrap(), vec![0]);
    }

    #[test]
    fn single_reference_point_labels_everything() {
        let ds = LabeledDataset::new(batch(vec![[0.5, -0.5]]), vec![1], 2).unwrap();
        let oracle = make_nn_oracle(&ds).unwrap();
        let queries = batch(vec![[-3.0, 4.0], [0.0, 0.0], [100.0, 2.0]]);
        assert_eq!(oracle.predict_labels(&queries).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn nn_oracle_rejects_empty_reference() {
        let empty = LabeledDataset::new(batch(vec![]), vec![], 2).unwrap();
        assert!(make_nn_oracle(&empty).is_err());
    }

    #[test]
    fn analytic_rules_agree_with_noiseless_generators() {
        let cases = [
            (ToyRule::Spirals, make_spirals(200, 0.0, 7).unwrap()),
            (ToyRule::Moons, make_moons(200, 0.0, 7).unwrap()),
            (ToyRule::YinYang, make_yinyang(200, 0.0, 7).unwrap()),
        ];
        for (rule, ds) in cases {
            let oracle = Oracle::analytic(rule, None).unwrap();
            let labels = oracle.predict_labels(ds.points()).unwrap();
            assert_eq!(labels, ds.labels(), "rule {rule:?} disagreed with its generator");
        }
    }

    #[test]
    fn analytic_oracle_accepts_standardized_queries() {
        let ds = make_moons(200, 0.0, 11).unwrap();
        let (std_ds, params) = standardize(&ds).unwrap();
        let oracle = Oracle::analytic(ToyRule::Moons, Some(params)).unwrap();
        let labels = oracle.predict_labels(std_ds.points()).unwrap();
        assert_eq!(labels, std_ds.labels());
    }

    #[test]
    fn predict_is_deterministic_under_repetition() {
        let oracle = Oracle::analytic(ToyRule::YinYang, None).unwrap();
        let queries = batch(vec![[0.1, 0.4], [-0.3, -0.6], [0.9, 0.0]]);
        let first = oracle.predict_onehot(&queries).unwrap();
        for _ in 0..1000 {
            assert_eq!(oracle.predict_onehot(&queries).unwrap(), first);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let oracle = Oracle::analytic(ToyRule::Spirals, None).unwrap();
        let bad = PointBatch::from_array(array![[0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            oracle.predict_labels(&bad),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn grid_lookup_uses_nearest_cell_and_clamps() {
        // 2x2 grid, x-axis major: labels [(0,0), (0,1), (1,0), (1,1)].
        let grid = GridOracle::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]], vec![0, 1, 1, 0], 2)
            .unwrap();
        let oracle = Oracle::from_grid(grid);
        let queries = batch(vec![
            [0.1, -5.0], // clamps to cell (0,0) -> 0
            [0.9, 0.2],  // nearest centers (1,0) -> 1
            [-9.0, 9.0], // clamps to (0,1) -> 1
            [2.0, 2.0],  // clamps to (1,1) -> 0
        ]);
        assert_eq!(oracle.predict_labels(&queries).unwrap(), vec![0, 1, 1, 0]);
    }

    #[test]
    fn grid_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let centers = batch(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
        let ds = LabeledDataset::new(centers, vec![0, 1, 1, 0], 2).unwrap();
        ds.to_csv(&path).unwrap();
        let oracle = Oracle::grid_from_csv(&path).unwrap();
        assert_eq!(
            oracle.predict_labels(&batch(vec![[0.2, 0.1], [0.8, 0.9]])).unwrap(),
            vec![0, 0]
        );
    }

    #[test]
    fn grid_rejects_incomplete_or_duplicated_cells() {
        let three_points = LabeledDataset::new(
            batch(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]),
            vec![0, 1, 1],
            2,
        )
        .unwrap();
        assert!(GridOracle::from_points(&three_points).is_err());

        assert!(GridOracle::new(vec![vec![0.0, 1.0]], vec![0, 2], 2).is_err());
        assert!(GridOracle::new(vec![vec![1.0, 0.0]], vec![0, 1], 2).is_err());
    }

    proptest! {
        #[test]
        fn onehot_rows_are_valid_for_every_oracle(seed in 0u64..200) {
            let queries = crate::datagen::draw_normal(20, 2, seed).unwrap();
            let reference = make_moons(30, 0.1, seed).unwrap();
            let oracles = vec![
                Oracle::analytic(ToyRule::Spirals, None).unwrap(),
                Oracle::analytic(ToyRule::Moons, None).unwrap(),
                Oracle::analytic(ToyRule::YinYang, None).unwrap(),
                make_nn_oracle(&reference).unwrap(),
            ];
            for oracle in oracles {
                let onehot = oracle.predict_onehot(&queries).unwrap();
                for row in onehot.rows() {
                    let sum: f64 = row.sum();
                    prop_assert_eq!(sum, 1.0);
                    prop_assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
                }
            }
        }
    }
}
