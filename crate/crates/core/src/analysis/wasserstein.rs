//! One-dimensional Wasserstein-1 distance between empirical samples.

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Area between the two empirical CDFs. Sample sizes may differ.
///
/// Both samples must be nonempty and finite.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "wasserstein1 of an empty sample");
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut support: Vec<f64> = a.iter().chain(&b).copied().collect();
    support.sort_by(f64::total_cmp);
    support.dedup();

    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    for w in support.windows(2) {
        while i < a.len() && a[i] <= w[0] {
            i += 1;
        }
        while j < b.len() && b[j] <= w[0] {
            j += 1;
        }
        let gap = (i as f64 / na - j as f64 / nb).abs();
        total += gap * (w[1] - w[0]);
    }
    total
}

/// Mean absolute difference of order statistics; equals W1 for equal sizes.
pub fn sorted_quantile_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let a = sorted(a);
    let b = sorted(b);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_cases() {
        assert_eq!(wasserstein1(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]), 0.0);
        assert_eq!(wasserstein1(&[0.0], &[1.0]), 1.0);
        assert_eq!(wasserstein1(&[1.0, 2.0], &[3.0, 4.0]), 2.0);
        assert_eq!(wasserstein1(&[1.0, 2.0], &[2.0, 3.0]), 1.0);
    }

    #[test]
    fn unequal_sizes() {
        // F_a jumps to 1 at 0; F_b is 1/2 on [0, 10).
        assert_eq!(wasserstein1(&[0.0], &[0.0, 10.0]), 5.0);
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 1..12)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in sample(), b in sample(), c in sample()) {
            let ab = wasserstein1(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - wasserstein1(&b, &a)).abs() < 1e-12);
            prop_assert!(wasserstein1(&a, &c) <= ab + wasserstein1(&b, &c) + 1e-9);
            prop_assert_eq!(wasserstein1(&a, &a), 0.0);
        }

        #[test]
        fn quantile_identity(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..15)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!((wasserstein1(&a, &b) - sorted_quantile_distance(&a, &b)).abs() < 1e-9);
        }
    }
}
