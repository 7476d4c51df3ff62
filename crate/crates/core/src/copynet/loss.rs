//! Uncertainty measure, empirical risk, memory-aware loss, and its exact
//! gradient.
//!
//! The per-point uncertainty is `rho(z) = ||f_C(z) - f_O(z)||_2 / sqrt(n_c)`,
//! the risk is the mean of `rho^2` over a synthetic set, and the training
//! loss adds `lambda * ||theta - theta_prev||_2` over the concatenated
//! parameters (unsquared, subgradient 0 at zero distance).

use ndarray::{Array2, ArrayView1, Axis};

use crate::engine::SyntheticSet;
use crate::error::{Error, Result};

use super::{CopyNet, GradientSet};

/// Normalized Euclidean distance between a probability row and a one-hot
/// row: 0 iff equal, at most 1.
pub fn uncertainty_rho(
    copy_probs: ArrayView1<'_, f64>,
    oracle_label: ArrayView1<'_, f64>,
    n_c: usize,
) -> Result<f64> {
    if copy_probs.len() != n_c || oracle_label.len() != n_c {
        return Err(Error::DimensionMismatch(format!(
            "expected two vectors of length {n_c}, got {} and {}",
            copy_probs.len(),
            oracle_label.len()
        )));
    }
    let sq: f64 = copy_probs
        .iter()
        .zip(oracle_label.iter())
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok((sq / n_c as f64).sqrt().min(1.0))
}

/// `uncertainty_rho` for every row pair of two equally shaped matrices.
pub fn rho_batch(probs: &Array2<f64>, onehots: &Array2<f64>) -> Result<Vec<f64>> {
    if probs.dim() != onehots.dim() {
        return Err(Error::DimensionMismatch(format!(
            "probability matrix {:?} vs one-hot matrix {:?}",
            probs.dim(),
            onehots.dim()
        )));
    }
    let n_c = probs.ncols();
    probs
        .rows()
        .into_iter()
        .zip(onehots.rows())
        .map(|(p, y)| uncertainty_rho(p, y, n_c))
        .collect()
}

/// Mean squared uncertainty of the copy over a synthetic set.
pub fn empirical_risk(net: &CopyNet, set: &SyntheticSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::BadData("empirical risk over an empty set".into()));
    }
    let probs = net.forward(set.points())?;
    let rho = rho_batch(&probs, set.onehots())?;
    Ok(rho.iter().map(|r| r * r).sum::<f64>() / rho.len() as f64)
}

/// Empirical risk plus the memory term `lambda * ||theta - theta_prev||_2`.
///
/// With `lambda == 0` this is bit-for-bit the empirical risk.
pub fn loss_with_memory(
    net: &CopyNet,
    set: &SyntheticSet,
    theta_prev: &CopyNet,
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    net.check_same_shape(theta_prev)?;
    let risk = empirical_risk(net, set)?;
    if lambda == 0.0 {
        Ok(risk)
    } else {
        Ok(risk + lambda * net.param_distance(theta_prev)?)
    }
}

/// Exact gradient of `loss_with_memory` for every parameter.
///
/// Subgradient conventions: 0 at the ReLU kink and 0 for the norm term at
/// `theta == theta_prev`.
pub fn gradient(
    net: &CopyNet,
    set: &SyntheticSet,
    theta_prev: &CopyNet,
    lambda: f64,
) -> Result<GradientSet> {
    if set.is_empty() {
        return Err(Error::BadData("gradient over an empty set".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    net.check_same_shape(theta_prev)?;

    let trace = net.forward_trace(set.points())?;
    let m = set.len() as f64;
    let n_c = net.n_classes() as f64;
    let layers = net.weights().len();
    let mut grads = GradientSet::zeros_like(net);

    // Risk term: d/dp of mean rho^2 is (2 / (m * n_c)) (P - Y), pushed
    // through the softmax Jacobian: dz = p .* (g - <g, p>).
    let g = (&trace.probs - set.onehots()) * (2.0 / (m * n_c));
    let row_dot = (&g * &trace.probs).sum_axis(Axis(1)).insert_axis(Axis(1));
    let mut dz = &trace.probs * &(g - row_dot);

    for l in (0..layers).rev() {
        let a_prev = if l == 0 {
            &trace.input
        } else {
            &trace.hidden_acts[l - 1]
        };
        grads.weights[l] = a_prev.t().dot(&dz);
        grads.biases[l] = dz.sum_axis(Axis(0));
        if l > 0 {
            let mut da = dz.dot(&net.weights()[l].t());
            // ReLU passes gradient only where the pre-activation is positive.
            da.zip_mut_with(&trace.zs[l - 1], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            dz = da;
        }
    }

    if lambda > 0.0 {
        let dist = net.param_distance(theta_prev)?;
        if dist > 0.0 {
            let scale = lambda / dist;
            for l in 0..layers {
                grads.weights[l].zip_mut_with(
                    &(&net.weights()[l] - &theta_prev.weights()[l]),
                    |g, &d| *g += scale * d,
                );
                grads.biases[l].zip_mut_with(
                    &(&net.biases()[l] - &theta_prev.biases()[l]),
                    |g, &d| *g += scale * d,
                );
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{draw_normal, PointBatch};
    use crate::engine::SyntheticSet;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn onehots_for(labels: &[usize], n_c: usize) -> Array2<f64> {
        let mut out = Array2::zeros((labels.len(), n_c));
        for (i, &l) in labels.iter().enumerate() {
            out[[i, l]] = 1.0;
        }
        out
    }

    fn random_set(n: usize, d: usize, n_c: usize, seed: u64) -> SyntheticSet {
        let points = draw_normal(n, d, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_c)).collect();
        SyntheticSet::new(points, onehots_for(&labels, n_c)).unwrap()
    }

    fn zero_net(d: usize, hidden: &[usize], n_c: usize) -> CopyNet {
        let mut dims = vec![d];
        dims.extend_from_slice(hidden);
        dims.push(n_c);
        let weights = dims
            .windows(2)
            .map(|p| Array2::zeros((p[0], p[1])))
            .collect();
        let biases = dims.windows(2).map(|p| Array1::zeros(p[1])).collect();
        CopyNet::from_parts(d, hidden, n_c, weights, biases).unwrap()
    }

    #[test]
    fn rho_hand_values() {
        let p = array![1.0, 0.0];
        let y = array![1.0, 0.0];
        assert_eq!(uncertainty_rho(p.view(), y.view(), 2).unwrap(), 0.0);

        let p = array![0.0, 1.0];
        let y = array![1.0, 0.0];
        assert_eq!(uncertainty_rho(p.view(), y.view(), 2).unwrap(), 1.0);

        let p = array![0.5, 0.5];
        let y = array![1.0, 0.0];
        assert_abs_diff_eq!(
            uncertainty_rho(p.view(), y.view(), 2).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rho_rejects_length_mismatch() {
        let p = array![0.5, 0.5];
        let y = array![1.0, 0.0, 0.0];
        assert!(uncertainty_rho(p.view(), y.view(), 2).is_err());
        assert!(uncertainty_rho(p.view(), p.view(), 3).is_err());
    }

    #[test]
    fn uniform_copy_has_quarter_risk_on_two_classes() {
        // Zero parameters emit (0.5, 0.5); a single one-hot point gives
        // rho = 0.5 and risk = 0.25.
        let net = zero_net(2, &[4], 2);
        let set = SyntheticSet::new(draw_normal(1, 2, 0).unwrap(), onehots_for(&[0], 2)).unwrap();
        assert_abs_diff_eq!(empirical_risk(&net, &set).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn risk_matches_brute_force_mean() {
        let net = CopyNet::new(2, &[5, 3], 3, 4).unwrap();
        let set = random_set(17, 2, 3, 9);
        let probs = net.forward(set.points()).unwrap();
        let mut brute = 0.0;
        for i in 0..set.len() {
            let r = uncertainty_rho(probs.row(i), set.onehots().row(i), 3).unwrap();
            brute += r * r;
        }
        brute /= set.len() as f64;
        assert_eq!(empirical_risk(&net, &set).unwrap(), brute);
    }

    #[test]
    fn adding_a_low_uncertainty_point_obeys_the_mean_identity() {
        let net = CopyNet::new(2, &[4], 2, 6).unwrap();
        let set = random_set(10, 2, 2, 3);
        let risk = empirical_risk(&net, &set).unwrap();

        // Duplicate the point whose rho is smallest; the enlarged set's risk
        // must equal the weighted mean and cannot exceed the original risk.
        let probs = net.forward(set.points()).unwrap();
        let rho = rho_batch(&probs, set.onehots()).unwrap();
        let (best, _) = rho
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let extended = set.select(&[(0..set.len()).collect::<Vec<_>>(), vec![best]].concat());
        let new_risk = empirical_risk(&net, &extended).unwrap();
        let m = set.len() as f64;
        assert_abs_diff_eq!(
            new_risk,
            (m * risk + rho[best] * rho[best]) / (m + 1.0),
            epsilon = 1e-14
        );
        assert!(new_risk <= risk + 1e-15);
    }

    #[test]
    fn risk_requires_a_nonempty_set() {
        let net = CopyNet::new(2, &[4], 2, 0).unwrap();
        let empty = SyntheticSet::new(
            PointBatch::from_array(Array2::zeros((0, 2))).unwrap(),
            Array2::zeros((0, 2)),
        )
        .unwrap();
        assert!(empirical_risk(&net, &empty).is_err());
        assert!(gradient(&net, &empty, &net, 0.0).is_err());
    }

    #[test]
    fn memory_loss_reduces_to_risk() {
        let net = CopyNet::new(2, &[4], 2, 1).unwrap();
        let prev = CopyNet::new(2, &[4], 2, 2).unwrap();
        let set = random_set(12, 2, 2, 5);
        let risk = empirical_risk(&net, &set).unwrap();
        // lambda = 0 and theta = theta_prev both collapse to the bare risk.
        assert_eq!(loss_with_memory(&net, &set, &prev, 0.0).unwrap(), risk);
        assert_eq!(loss_with_memory(&net, &set, &net, 3.0).unwrap(), risk);
    }

    #[test]
    fn huge_lambda_is_dominated_by_the_memory_term() {
        let net = CopyNet::new(2, &[4], 2, 1).unwrap();
        let mut prev = net.clone();
        prev.weights_mut()[0][[0, 0]] += 2.0;
        let set = random_set(12, 2, 2, 5);
        let lambda = 1e6;
        let loss = loss_with_memory(&net, &set, &prev, lambda).unwrap();
        let dominant = lambda * net.param_distance(&prev).unwrap();
        assert!((loss - dominant).abs() / dominant < 1e-6);
    }

    #[test]
    fn loss_rejects_negative_lambda_and_shape_mismatch() {
        let net = CopyNet::new(2, &[4], 2, 1).unwrap();
        let other = CopyNet::new(2, &[5], 2, 1).unwrap();
        let set = random_set(4, 2, 2, 0);
        assert!(loss_with_memory(&net, &set, &net, -1.0).is_err());
        assert!(loss_with_memory(&net, &set, &other, 1.0).is_err());
    }

    /// Central finite differences over every parameter of a small net.
    fn finite_difference(
        net: &CopyNet,
        set: &SyntheticSet,
        prev: &CopyNet,
        lambda: f64,
        h: f64,
    ) -> GradientSet {
        let mut fd = GradientSet::zeros_like(net);
        let eval = |n: &CopyNet| loss_with_memory(n, set, prev, lambda).unwrap();
        for l in 0..net.weights().len() {
            for idx in 0..net.weights()[l].len() {
                let (r, c) = (idx / net.weights()[l].ncols(), idx % net.weights()[l].ncols());
                let mut plus = net.clone();
                plus.weights_mut()[l][[r, c]] += h;
                let mut minus = net.clone();
                minus.weights_mut()[l][[r, c]] -= h;
                fd.weights[l][[r, c]] = (eval(&plus) - eval(&minus)) / (2.0 * h);
            }
            for j in 0..net.biases()[l].len() {
                let mut plus = net.clone();
                plus.biases_mut()[l][j] += h;
                let mut minus = net.clone();
                minus.biases_mut()[l][j] -= h;
                fd.biases[l][j] = (eval(&plus) - eval(&minus)) / (2.0 * h);
            }
        }
        fd
    }

    fn max_relative_error(a: &GradientSet, b: &GradientSet) -> f64 {
        let mut worst: f64 = 0.0;
        let pairs = a
            .weights
            .iter()
            .zip(&b.weights)
            .flat_map(|(x, y)| x.iter().zip(y.iter()))
            .chain(
                a.biases
                    .iter()
                    .zip(&b.biases)
                    .flat_map(|(x, y)| x.iter().zip(y.iter())),
            );
        for (&x, &y) in pairs {
            let denom = x.abs().max(y.abs());
            if denom > 1e-8 {
                worst = worst.max((x - y).abs() / denom);
            } else {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    /// Smallest |pre-activation| across the batch; finite differences are
    /// only trustworthy well away from the ReLU kink.
    fn kink_distance(net: &CopyNet, set: &SyntheticSet) -> f64 {
        let trace = net.forward_trace(set.points()).unwrap();
        trace
            .zs
            .iter()
            .take(trace.zs.len() - 1)
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, &z| m.min(z.abs()))
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // 2-feature, 3-class micro-net with hidden widths 4 and 3. Zero
        // biases would park fully-deactivated samples exactly on the ReLU
        // kink (where the subgradient convention and central differences
        // disagree by design), so the biases get fixed nonzero offsets.
        for seed in 0..20u64 {
            let set = random_set(8, 2, 3, seed);
            let mut net = CopyNet::new(2, &[4, 3], 3, seed).unwrap();
            let cleared = [0.11, 0.17, 0.23, 0.31, 0.43].iter().any(|&scale| {
                for (l, bias) in net.biases_mut().iter_mut().enumerate() {
                    for (j, v) in bias.iter_mut().enumerate() {
                        let sign = if (l + j) % 2 == 0 { 1.0 } else { -1.0 };
                        *v = sign * (scale + 0.03 * j as f64);
                    }
                }
                kink_distance(&net, &set) > 5e-4
            });
            assert!(
                cleared,
                "seed {seed} sits too close to a ReLU kink for finite differences"
            );
            let mut prev = CopyNet::new(2, &[4, 3], 3, seed + 1000).unwrap();
            // Keep prev clearly away from net so the norm is smooth.
            prev.weights_mut()[0][[0, 0]] += 1.0;
            for lambda in [0.0, 0.37] {
                let analytic = gradient(&net, &set, &prev, lambda).unwrap();
                let fd = finite_difference(&net, &set, &prev, lambda, 1e-5);
                let err = max_relative_error(&analytic, &fd);
                assert!(
                    err < 1e-4,
                    "seed {seed} lambda {lambda}: max relative error {err}"
                );
            }
        }
    }

    #[test]
    fn memory_gradient_vanishes_at_the_anchor() {
        let net = CopyNet::new(2, &[4], 2, 3).unwrap();
        let set = random_set(6, 2, 2, 1);
        let with = gradient(&net, &set, &net, 5.0).unwrap();
        let without = gradient(&net, &set, &net, 0.0).unwrap();
        for (a, b) in with.weights.iter().zip(&without.weights) {
            assert_eq!(a, b);
        }
        for (a, b) in with.biases.iter().zip(&without.biases) {
            assert_eq!(a, b);
        }
    }

    proptest! {
        #[test]
        fn rho_is_bounded_and_zero_only_on_equality(
            seed in 0u64..300,
            n_c in 2usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Random probability vector via normalized positive draws.
            let raw: Vec<f64> = (0..n_c).map(|_| rng.random_range(1e-3..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let probs = Array1::from_vec(raw.iter().map(|v| v / sum).collect());
            let label = rng.random_range(0..n_c);
            let mut onehot = Array1::zeros(n_c);
            onehot[label] = 1.0;

            let rho = uncertainty_rho(probs.view(), onehot.view(), n_c).unwrap();
            prop_assert!((0.0..=1.0).contains(&rho));
            // Strictly interior probabilities never coincide with a one-hot.
            prop_assert!(rho > 0.0);
            let self_rho = uncertainty_rho(onehot.view(), onehot.view(), n_c).unwrap();
            prop_assert_eq!(self_rho, 0.0);
        }

        #[test]
        fn risk_stays_in_unit_interval(seed in 0u64..100) {
            let net = CopyNet::new(2, &[5], 3, seed).unwrap();
            let set = random_set(9, 2, 3, seed);
            let risk = empirical_risk(&net, &set).unwrap();
            prop_assert!((0.0..=1.0).contains(&risk));
        }
    }
}
