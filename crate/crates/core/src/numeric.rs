//! Stable reductions shared by the solver and the partition function.

/// `ln Σ exp(x_i)` with max-shifting. Returns `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.into_iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

/// Base-2 counterpart of [`log_sum_exp`]: `log2 Σ 2^(x_i)`.
pub fn log2_sum_exp2(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = values.iter().map(|&x| (x - max).exp2()).sum();
    max + s.log2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive_in_safe_range() {
        let xs = [0.1, -2.0, 3.5, 0.0];
        let naive = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(xs) - naive).abs() < 1e-14);
    }

    #[test]
    fn lse_survives_large_offsets() {
        let xs = [-1e4, -1e4 - 1.0];
        let expected = -1e4 + (1.0 + (-1.0f64).exp()).ln();
        assert!((log_sum_exp(xs) - expected).abs() < 1e-9);
        assert_eq!(log_sum_exp(std::iter::empty::<f64>()), f64::NEG_INFINITY);
    }

    #[test]
    fn log2_variant() {
        let xs = [1.0, 1.0, 2.0];
        assert!((log2_sum_exp2(&xs) - 3.0).abs() < 1e-15);
        assert!((log2_sum_exp2(&[-3000.0, -3000.0]) + 2999.0).abs() < 1e-9);
    }
}
