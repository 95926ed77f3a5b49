use crate::rng::RngStream;

/// Systematic resampling with one uniform draw in `[0, 1/N)`.
pub fn low_variance_resample(weights: &[f64], rng: &mut RngStream) -> Vec<usize> {
    let n = weights.len();
    let u = rng.uniform() / n as f64;
    low_variance_resample_with_offset(weights, u)
}

/// Systematic resampling with the offset `u` given explicitly.
pub fn low_variance_resample_with_offset(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut i = 0;
    for m in 0..n {
        let target = u + m as f64 / n as f64;
        while target >= cumulative && i < n - 1 {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(idx: &[usize], n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for &i in idx {
            c[i] += 1;
        }
        c
    }

    #[test]
    fn uniform_weights_select_each_once() {
        let mut rng = RngStream::new(1);
        for n in [1, 2, 7, 50, 100] {
            let w = vec![1.0 / n as f64; n];
            for _ in 0..200 {
                assert_eq!(low_variance_resample(&w, &mut rng), (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn two_weight_partition() {
        let w = [0.75, 0.25];
        for k in 0..100 {
            let u = 0.5 * k as f64 / 100.0;
            let c = counts(&low_variance_resample_with_offset(&w, u), 2);
            if u < 0.25 {
                assert_eq!(c, vec![2, 0], "u={u}");
            } else {
                assert_eq!(c, vec![1, 1], "u={u}");
            }
        }
    }

    #[test]
    fn one_hot_copies() {
        let mut rng = RngStream::new(2);
        let w = [0.0, 0.0, 1.0, 0.0];
        assert_eq!(low_variance_resample(&w, &mut rng), vec![2; 4]);
    }

    #[test]
    fn expected_counts() {
        let mut rng = RngStream::new(3);
        let w = [0.5, 0.3, 0.2];
        // Padded to N = 10 with the same masses spread over indices.
        let mut weights = vec![0.0; 10];
        weights[..3].copy_from_slice(&w);
        let mut totals = vec![0usize; 10];
        let trials = 100_000;
        for _ in 0..trials {
            for i in low_variance_resample(&weights, &mut rng) {
                totals[i] += 1;
            }
        }
        for (j, wj) in w.iter().enumerate() {
            let mean = totals[j] as f64 / trials as f64;
            assert!((mean - 10.0 * wj).abs() <= 0.01 * 10.0 * wj, "j={j} mean={mean}");
        }
    }

    proptest! {
        #[test]
        fn counts_are_floor_or_ceil(raw in prop::collection::vec(0.0f64..1.0, 1..40), u01 in 0.0f64..1.0) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let n = w.len();
            let idx = low_variance_resample_with_offset(&w, u01 / n as f64);
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
            for (j, c) in counts(&idx, n).into_iter().enumerate() {
                let e = n as f64 * w[j];
                prop_assert!(c as f64 >= (e - 1e-9).floor());
                prop_assert!(c as f64 <= (e + 1e-9).ceil());
            }
        }
    }
}
