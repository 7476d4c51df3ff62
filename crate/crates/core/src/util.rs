//! Small numeric helpers shared across modules.

/// Index of the largest element; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Trapezoidal integral of a curve sampled at unit spacing.
pub(crate) fn trapezoid(curve: &[f64]) -> f64 {
    curve
        .windows(2)
        .map(|pair| 0.5 * (pair[0] + pair[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
    }

    #[test]
    fn trapezoid_matches_hand_values() {
        assert_eq!(trapezoid(&[1.0, 1.0, 1.0]), 2.0);
        assert_eq!(trapezoid(&[0.0, 1.0, 2.0]), 2.0);
    }
}
