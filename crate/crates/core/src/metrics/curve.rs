use statrs::distribution::{Binomial, DiscreteCDF};

/// Trapezoidal area under `y` over `x`.
pub fn auc(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * 0.5 * (ys[0] + ys[1]))
        .sum()
}

/// Mean and population standard deviation. Empty input gives `(NaN, NaN)`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One-sided paired sign test for `a > b`. Ties are dropped. Returns
/// `(wins, non-tied pairs, p-value)`.
pub fn sign_test_greater(a: &[f64], b: &[f64]) -> (u64, u64, f64) {
    let (mut wins, mut trials) = (0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        if x != y {
            trials += 1;
            if x > y {
                wins += 1;
            }
        }
    }
    if trials == 0 {
        return (0, 0, 1.0);
    }
    let binom = Binomial::new(0.5, trials).expect("valid binomial");
    // P(X >= wins)
    let p = if wins == 0 { 1.0 } else { binom.sf(wins - 1) };
    (wins, trials, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid() {
        assert_eq!(auc(&[0.0, 1.0, 3.0], &[0.0, 1.0, 1.0]), 2.5);
        assert_eq!(auc(&[0.0], &[1.0]), 0.0);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn sign_test_tail() {
        let a: Vec<f64> = (0..15).map(|i| if i < 12 { 1.0 } else { 0.0 }).collect();
        let b = vec![0.5; 15];
        let (w, t, p) = sign_test_greater(&a, &b);
        assert_eq!((w, t), (12, 15));
        // sum_{k=12}^{15} C(15,k) / 2^15 = 576 / 32768
        assert!((p - 576.0 / 32768.0).abs() < 1e-12);
    }
}
