use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Dataset, Gaussian, LatentPath, ParamDomain, StateSpaceModel};
use crate::numeric::{normal_logpdf, LN_2PI};
use crate::smc::{Instrumental, ProposalSpec};

/// Scalar model with independent latent states:
///
/// ```text
/// x_t ~ N((1 - a) theta, var_x),   y_t | x_t ~ N(a theta + x_t, var_y),
/// theta ~ N(prior_mean, prior_var).
/// ```
///
/// Marginally `y_t ~ N(theta, var_x + var_y)` for every `a`, so the
/// likelihood, the posterior of `theta` and `p(x_t | y_t)` are all Gaussian
/// and available in closed form. `a` moves the posterior dependence between
/// `theta` and `x_{1:T}` without touching the marginal posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct IidGaussianModel {
    a: f64,
    var_x: f64,
    var_y: f64,
    prior_mean: f64,
    prior_var: f64,
    domain: ParamDomain,
    sd_x: f64,
    sd_y: f64,
    log_norm_x: f64,
    log_norm_y: f64,
}

#[inline]
fn gauss_log(d: f64, var: f64, log_norm: f64) -> f64 {
    log_norm - 0.5 * d * d / var
}

impl IidGaussianModel {
    pub fn new(a: f64, var_x: f64, var_y: f64, prior_mean: f64, prior_var: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Domain(format!("a = {a} outside [0, 1]")));
        }
        for (name, v) in [("var_x", var_x), ("var_y", var_y), ("prior_var", prior_var)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} = {v} must be positive")));
            }
        }
        if !prior_mean.is_finite() {
            return Err(Error::Domain("prior mean must be finite".into()));
        }
        Ok(Self {
            a,
            var_x,
            var_y,
            prior_mean,
            prior_var,
            domain: ParamDomain::unbounded(1),
            sd_x: var_x.sqrt(),
            sd_y: var_y.sqrt(),
            log_norm_x: -0.5 * (LN_2PI + var_x.ln()),
            log_norm_y: -0.5 * (LN_2PI + var_y.ln()),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn var_x(&self) -> f64 {
        self.var_x
    }

    pub fn var_y(&self) -> f64 {
        self.var_y
    }

    /// Variance of the marginal law of each `y_t`.
    pub fn marginal_var(&self) -> f64 {
        self.var_x + self.var_y
    }

    /// Closed-form posterior of `theta` given the data.
    pub fn exact_posterior(&self, data: &Dataset) -> Gaussian {
        let s2 = self.marginal_var();
        let n = data.len() as f64;
        let sum: f64 = data.values().iter().sum();
        let var = 1.0 / (1.0 / self.prior_var + n / s2);
        Gaussian {
            mean: var * (self.prior_mean / self.prior_var + sum / s2),
            var,
        }
    }

    /// `p_theta(x_t | y_t)`.
    pub fn exact_conditional(&self, theta: f64, y: f64) -> Gaussian {
        let var = 1.0 / (1.0 / self.var_x + 1.0 / self.var_y);
        let mean = var * ((1.0 - self.a) * theta / self.var_x + (y - self.a * theta) / self.var_y);
        Gaussian { mean, var }
    }

    /// `d/dtheta log l_theta(y_{1:T})`.
    pub fn score(&self, theta: f64, data: &Dataset) -> f64 {
        data.values().iter().map(|&y| y - theta).sum::<f64>() / self.marginal_var()
    }

    /// Proposal drawing `x_t` from `p_theta(x_t | y_t)` with its variance
    /// multiplied by `inflation >= 1`. At `inflation = 1` the particle
    /// weights are constant.
    pub fn conditional_proposal(&self, data: &Dataset, inflation: f64) -> Result<ProposalSpec> {
        if !(inflation >= 1.0 && inflation.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "inflation {inflation} must be at least 1"
            )));
        }
        if data.obs_dim() != 1 {
            return Err(Error::InvalidInput(
                "the iid model has scalar observations".into(),
            ));
        }
        Ok(ProposalSpec::Custom(Arc::new(ConditionalProposal {
            model: self.clone(),
            y: data.values().to_vec(),
            inflation,
        })))
    }

    fn log_likelihood(&self, theta: f64, data: &Dataset) -> f64 {
        let s2 = self.marginal_var();
        data.values()
            .iter()
            .map(|&y| normal_logpdf(y, theta, s2))
            .sum()
    }
}

/// See [`IidGaussianModel::conditional_proposal`].
#[derive(Debug, Clone)]
struct ConditionalProposal {
    model: IidGaussianModel,
    y: Vec<f64>,
    inflation: f64,
}

impl ConditionalProposal {
    fn law(&self, theta: &[f64], t: usize) -> Gaussian {
        let g = self.model.exact_conditional(theta[0], self.y[t - 1]);
        Gaussian {
            mean: g.mean,
            var: g.var * self.inflation,
        }
    }
}

impl Instrumental for ConditionalProposal {
    fn sample_initial(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        self.sample_transition(theta, 1, &[], rng, out);
    }

    fn initial_logdensity(&self, theta: &[f64], x: &[f64]) -> f64 {
        self.transition_logdensity(theta, 1, &[], x)
    }

    fn sample_transition(
        &self,
        theta: &[f64],
        t: usize,
        _prev: &[f64],
        rng: &mut dyn RngCore,
        out: &mut [f64],
    ) {
        let g = self.law(theta, t);
        let z: f64 = rng.sample(StandardNormal);
        out[0] = g.mean + g.sd() * z;
    }

    fn transition_logdensity(&self, theta: &[f64], t: usize, _prev: &[f64], x: &[f64]) -> f64 {
        self.law(theta, t).logpdf(x[0])
    }
}

impl StateSpaceModel for IidGaussianModel {
    fn param_dim(&self) -> usize {
        1
    }

    fn param_domain(&self) -> &ParamDomain {
        &self.domain
    }

    fn prior_logdensity(&self, theta: &[f64]) -> f64 {
        if !self.domain.contains(theta) {
            return f64::NEG_INFINITY;
        }
        normal_logpdf(theta[0], self.prior_mean, self.prior_var)
    }

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: f64 = rng.sample(StandardNormal);
        vec![self.prior_mean + self.prior_var.sqrt() * z]
    }

    #[inline]
    fn init_logdensity(&self, theta: &[f64], x: &[f64]) -> f64 {
        gauss_log(
            x[0] - (1.0 - self.a) * theta[0],
            self.var_x,
            self.log_norm_x,
        )
    }

    #[inline]
    fn trans_logdensity(&self, theta: &[f64], _t: usize, _prev: &[f64], x: &[f64]) -> f64 {
        self.init_logdensity(theta, x)
    }

    fn trans_depends_on_prev(&self) -> bool {
        false
    }

    #[inline]
    fn obs_logdensity(&self, theta: &[f64], _t: usize, x: &[f64], y: &[f64]) -> f64 {
        gauss_log(y[0] - self.a * theta[0] - x[0], self.var_y, self.log_norm_y)
    }

    #[inline]
    fn sample_init<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R, out: &mut [f64]) {
        let z: f64 = rng.sample(StandardNormal);
        out[0] = (1.0 - self.a) * theta[0] + self.sd_x * z;
    }

    #[inline]
    fn sample_trans<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        _t: usize,
        _prev: &[f64],
        rng: &mut R,
        out: &mut [f64],
    ) {
        self.sample_init(theta, rng, out);
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
        out[0] = self.a * theta[0] + x[0] + self.sd_y * z;
    }

    fn exact_log_likelihood(&self, theta: &[f64], data: &Dataset) -> Option<f64> {
        Some(self.log_likelihood(theta[0], data))
    }

    fn exact_conditional_logdensity(
        &self,
        theta: &[f64],
        _t: usize,
        x: &[f64],
        y: &[f64],
    ) -> Option<f64> {
        Some(self.exact_conditional(theta[0], y[0]).logpdf(x[0]))
    }

    fn sample_exact_conditional<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        data: &Dataset,
        rng: &mut R,
    ) -> Option<LatentPath> {
        let x = data
            .values()
            .iter()
            .map(|&y| {
                let g = self.exact_conditional(theta[0], y);
                let z: f64 = rng.sample(StandardNormal);
                g.mean + g.sd() * z
            })
            .collect();
        LatentPath::from_scalars(x).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn informative() -> IidGaussianModel {
        IidGaussianModel::new(1.0, 1.0, 0.01, 0.0, 1e5).unwrap()
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(matches!(
            IidGaussianModel::new(1.5, 1.0, 1.0, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            IidGaussianModel::new(0.5, 0.0, 1.0, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            IidGaussianModel::new(0.5, 1.0, -1.0, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            IidGaussianModel::new(0.5, 1.0, 1.0, 0.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn posterior_variance_near_one_over_t() {
        let m = informative();
        let data = Dataset::from_scalars(vec![0.3; 100]).unwrap();
        let post = m.exact_posterior(&data);
        assert_relative_eq!(post.var, 1.0 / (1e-5 + 100.0 / 1.01), epsilon = 1e-15);
        assert!((post.var - 1.01e-2).abs() < 1e-6);
    }

    #[test]
    fn likelihood_does_not_depend_on_a() {
        let data = Dataset::from_scalars(vec![0.1, -0.4, 2.0, 0.7]).unwrap();
        let m1 = informative();
        let m0 = IidGaussianModel::new(0.0, 1.0, 0.01, 0.0, 1e5).unwrap();
        for th in [-1.0, 0.0, 0.37] {
            assert_eq!(
                m1.exact_log_likelihood(&[th], &data),
                m0.exact_log_likelihood(&[th], &data)
            );
        }
    }

    #[test]
    fn single_draw_has_marginal_variance() {
        // y_1 ~ N(0, 1.01) at theta = 0
        let m = informative();
        let mut rng = stream(5);
        let n = 100_000;
        let ys: Vec<f64> = (0..n)
            .map(|_| simulate(&m, &[0.0], 1, &mut rng).unwrap().obs(0)[0])
            .collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 5.0 * (1.01f64 / n as f64).sqrt());
        assert!((var - 1.01).abs() < 5.0 * 1.01 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn transition_sampler_matches_density() {
        let m = IidGaussianModel::new(0.3, 2.0, 0.5, 0.0, 1.0).unwrap();
        let mut rng = stream(9);
        let n = 10_000;
        let mut buf = [0.0];
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                m.sample_trans(&[1.5], 3, &[0.0], &mut rng, &mut buf);
                buf[0]
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (mu, v) = (0.7 * 1.5, 2.0);
        assert!((mean - mu).abs() < 5.0 * (v / n as f64).sqrt());
        assert!((var - v).abs() < 5.0 * v * (2.0 / n as f64).sqrt());
        assert!(m.trans_logdensity(&[1.5], 3, &[0.0], &[mean]).is_finite());
    }

    #[test]
    fn conditional_integrates_joint() {
        // p(x | y) = p(x, y) / p(y), checked pointwise
        let m = IidGaussianModel::new(0.4, 1.3, 0.2, 0.0, 1.0).unwrap();
        let (th, y, x) = (0.8, 1.1, 0.25);
        let joint = m.init_logdensity(&[th], &[x]) + m.obs_logdensity(&[th], 1, &[x], &[y]);
        let marg = normal_logpdf(y, th, m.marginal_var());
        assert_relative_eq!(
            m.exact_conditional(th, y).logpdf(x),
            joint - marg,
            epsilon = 1e-12
        );
    }

    #[test]
    fn exact_conditional_proposal_gives_exact_likelihood() {
        let m = IidGaussianModel::new(0.6, 1.0, 0.2, 0.0, 1.0).unwrap();
        let data = simulate(&m, &[0.4], 30, &mut stream(1)).unwrap();
        let prop = m.conditional_proposal(&data, 1.0).unwrap();
        let ps = crate::smc::smc_run(&m, &[0.1], &data, &prop, 7, &mut stream(2)).unwrap();
        let est = crate::smc::log_likelihood_estimate(&ps).value;
        let exact = m.exact_log_likelihood(&[0.1], &data).unwrap();
        assert_relative_eq!(est, exact, epsilon = 1e-9);
        assert!(m.conditional_proposal(&data, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn exact_loglik_is_sum_of_marginals(
            th in -5.0f64..5.0,
            ys in proptest::collection::vec(-10.0f64..10.0, 1..40),
        ) {
            let m = informative();
            let data = Dataset::from_scalars(ys.clone()).unwrap();
            let direct: f64 = ys.iter().map(|&y| normal_logpdf(y, th, 1.01)).sum();
            let ll = m.exact_log_likelihood(&[th], &data).unwrap();
            prop_assert!((ll - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}
