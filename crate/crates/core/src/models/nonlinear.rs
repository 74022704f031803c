use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ParamDomain, StateSpaceModel};
use crate::numeric::{inv_gamma_logpdf, normal_logpdf};

const INIT_VAR: f64 = 10.0;

/// The classic univariate nonlinear growth model:
///
/// ```text
/// x_1 ~ N(0, 10)
/// x_t ~ N(x_{t-1}/2 + 25 x_{t-1}/(1 + x_{t-1}^2) + 8 cos(1.2 t), sigma_v^2)
/// y_t ~ N(x_t^2 / 20, sigma_w^2)
/// ```
///
/// with `theta = (sigma_v^2, sigma_w^2)` and independent inverse-Gamma priors.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearBenchmarkModel {
    prior_shape: f64,
    prior_scale: f64,
    domain: ParamDomain,
}

impl NonlinearBenchmarkModel {
    pub fn new(prior_shape: f64, prior_scale: f64) -> Result<Self> {
        if !(prior_shape > 0.0 && prior_scale > 0.0) {
            return Err(Error::Domain(format!(
                "inverse-Gamma shape {prior_shape} and scale {prior_scale} must be positive"
            )));
        }
        Ok(Self {
            prior_shape,
            prior_scale,
            domain: ParamDomain::positive(2),
        })
    }

    /// Mean of `x_t` given `x_{t-1}`.
    #[inline]
    pub fn drift(t: usize, prev: f64) -> f64 {
        0.5 * prev + 25.0 * prev / (1.0 + prev * prev) + 8.0 * (1.2 * t as f64).cos()
    }
}

impl Default for NonlinearBenchmarkModel {
    fn default() -> Self {
        Self::new(0.01, 0.01).expect("valid default prior")
    }
}

impl StateSpaceModel for NonlinearBenchmarkModel {
    fn param_dim(&self) -> usize {
        2
    }

    fn param_domain(&self) -> &ParamDomain {
        &self.domain
    }

    fn prior_logdensity(&self, theta: &[f64]) -> f64 {
        if !self.domain.contains(theta) {
            return f64::NEG_INFINITY;
        }
        theta
            .iter()
            .map(|&v| inv_gamma_logpdf(v, self.prior_shape, self.prior_scale))
            .sum()
    }

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let gamma = Gamma::new(self.prior_shape, 1.0 / self.prior_scale).expect("positive shape");
        (0..2).map(|_| 1.0 / gamma.sample(rng)).collect()
    }

    #[inline]
    fn init_logdensity(&self, _theta: &[f64], x: &[f64]) -> f64 {
        normal_logpdf(x[0], 0.0, INIT_VAR)
    }

    #[inline]
    fn trans_logdensity(&self, theta: &[f64], t: usize, prev: &[f64], x: &[f64]) -> f64 {
        normal_logpdf(x[0], Self::drift(t, prev[0]), theta[0])
    }

    #[inline]
    fn obs_logdensity(&self, theta: &[f64], _t: usize, x: &[f64], y: &[f64]) -> f64 {
        normal_logpdf(y[0], x[0] * x[0] / 20.0, theta[1])
    }

    fn sample_init<R: Rng + ?Sized>(&self, _theta: &[f64], rng: &mut R, out: &mut [f64]) {
        let z: f64 = rng.sample(StandardNormal);
        out[0] = INIT_VAR.sqrt() * z;
    }

    #[inline]
    fn sample_trans<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        t: usize,
        prev: &[f64],
        rng: &mut R,
        out: &mut [f64],
    ) {
        let z: f64 = rng.sample(StandardNormal);
        out[0] = Self::drift(t, prev[0]) + theta[0].sqrt() * z;
    }

    fn sample_obs<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        _t: usize,
        x: &[f64],
        rng: &mut R,
        out: &mut [f64],
    ) {
        let z: f64 = rng.sample(StandardNormal);
        out[0] = x[0] * x[0] / 20.0 + theta[1].sqrt() * z;
    }
}
