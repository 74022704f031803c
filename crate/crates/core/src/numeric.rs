//! Small numerical helpers shared by the particle routines.

use rand::Rng;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-density of `N(mean, var)` at `x`.
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Log-density of the inverse-Gamma distribution with the given shape and scale.
pub fn inv_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x.is_finite() && x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - libm::lgamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `log(sum(exp(v)))`, returning `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// `log(mean(exp(v)))`.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    log_sum_exp(v) - (v.len() as f64).ln()
}

/// Inverse-CDF sampler for the categorical law with probabilities
/// proportional to `exp(logw)`.
///
/// The table stores the cumulative max-shifted weights. A draw uses one
/// uniform and a binary search; ties resolve to the lowest index.
#[derive(Debug, Clone, Default)]
pub struct CategoricalTable {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl CategoricalTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds the table. Returns `false` when every weight is zero, in
    /// which case the table must not be sampled.
    pub fn rebuild(&mut self, logw: &[f64]) -> bool {
        let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.cdf.clear();
        if m == f64::NEG_INFINITY || m.is_nan() {
            return false;
        }
        let mut acc = 0.0;
        for (i, &lw) in logw.iter().enumerate() {
            let w = (lw - m).exp();
            if w > 0.0 {
                self.last_positive = i;
            }
            acc += w;
            self.cdf.push(acc);
        }
        true
    }

    /// Sum of the max-shifted weights.
    pub fn total(&self) -> f64 {
        self.cdf.last().copied().unwrap_or(0.0)
    }

    /// Maps a uniform in `[0, 1)` to an index.
    #[inline]
    pub fn index_for(&self, u: f64) -> usize {
        let target = u * self.total();
        let idx = self.cdf.partition_point(|&c| c <= target);
        idx.min(self.last_positive)
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index_for(rng.random::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_logpdf_matches_closed_form() {
        let v = normal_logpdf(1.0, 0.0, 4.0);
        let direct = (1.0 / (2.0 * std::f64::consts::PI * 4.0).sqrt() * (-1.0f64 / 8.0).exp()).ln();
        assert_relative_eq!(v, direct, epsilon = 1e-14);
    }

    #[test]
    fn inverse_gamma_integrates_to_one() {
        // trapezoid on a log grid
        let (a, b) = (3.0, 2.0);
        let n = 200_000;
        let (lo, hi) = (1e-4f64.ln(), 1e4f64.ln());
        let h = (hi - lo) / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let u = lo + i as f64 * h;
            let x = u.exp();
            let f = inv_gamma_logpdf(x, a, b).exp() * x;
            s += if i == 0 || i == n { 0.5 * f } else { f };
        }
        assert_relative_eq!(s * h, 1.0, epsilon = 1e-6);
        assert_eq!(inv_gamma_logpdf(-1.0, a, b), f64::NEG_INFINITY);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_relative_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln());
        assert_relative_eq!(log_mean_exp(&[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn categorical_skips_zero_weights_and_breaks_ties_low() {
        let mut t = CategoricalTable::new();
        assert!(t.rebuild(&[
            f64::NEG_INFINITY,
            0.0,
            f64::NEG_INFINITY,
            0.0,
            f64::NEG_INFINITY
        ]));
        assert_eq!(t.index_for(0.0), 1);
        assert_eq!(t.index_for(0.49), 1);
        assert_eq!(t.index_for(0.5), 3);
        assert_eq!(t.index_for(0.999_999_999), 3);
        assert!(!t.rebuild(&[f64::NEG_INFINITY, f64::NEG_INFINITY]));
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-12);
    }
}
