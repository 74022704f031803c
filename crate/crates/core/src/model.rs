//! State-space model abstraction.
//!
//! A model is a latent Markov chain with initial density `mu_theta`,
//! transition density `f_theta` and observation density `g_theta`, together
//! with a prior on the static parameter. All densities are handled in log
//! space. Time indices passed to model methods are 1-based, matching the
//! usual `t = 1..T` convention; containers are indexed from 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Open interval bounds for one parameter coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const REAL: Bounds = Bounds {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
    pub const POSITIVE: Bounds = Bounds {
        lower: 0.0,
        upper: f64::INFINITY,
    };

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v > self.lower && v < self.upper
    }
}

/// Axis-aligned (hence convex) parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    bounds: Vec<Bounds>,
}

impl ParamDomain {
    pub fn new(bounds: Vec<Bounds>) -> Self {
        Self { bounds }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::new(vec![Bounds::REAL; dim])
    }

    pub fn positive(dim: usize) -> Self {
        Self::new(vec![Bounds::POSITIVE; dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.bounds.len()
            && theta.iter().zip(&self.bounds).all(|(&v, b)| b.contains(v))
    }

    /// Errors unless `theta` lies in the domain.
    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.bounds.len() {
            return Err(Error::Domain(format!(
                "parameter has dimension {}, expected {}",
                theta.len(),
                self.bounds.len()
            )));
        }
        if let Some((i, (v, b))) = theta
            .iter()
            .zip(&self.bounds)
            .enumerate()
            .find(|(_, (&v, b))| !b.contains(v))
        {
            return Err(Error::Domain(format!(
                "theta[{i}] = {v} outside ({}, {})",
                b.lower, b.upper
            )));
        }
        Ok(())
    }
}

/// Mean and variance of a univariate Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian {
    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        crate::numeric::normal_logpdf(x, self.mean, self.var)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        crate::numeric::normal_cdf((x - self.mean) / self.sd())
    }
}

/// A state-space model with a prior on its static parameter.
///
/// Implementations must be immutable after construction; they are shared
/// across worker threads. Log-densities return `-inf` for zero density and
/// never `NaN` for parameters inside the domain.
pub trait StateSpaceModel: Send + Sync {
    fn param_dim(&self) -> usize;

    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn param_domain(&self) -> &ParamDomain;

    /// `log eta(theta)`; `-inf` outside the domain.
    fn prior_logdensity(&self, theta: &[f64]) -> f64;

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;

    /// `log mu_theta(x_1)`.
    fn init_logdensity(&self, theta: &[f64], x: &[f64]) -> f64;

    /// `log f_theta(x_{t-1}, x_t)` for `t >= 2`.
    fn trans_logdensity(&self, theta: &[f64], t: usize, prev: &[f64], x: &[f64]) -> f64;

    /// `log g_theta(x_t, y_t)`.
    fn obs_logdensity(&self, theta: &[f64], t: usize, x: &[f64], y: &[f64]) -> f64;

    fn sample_init<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R, out: &mut [f64]);

    fn sample_trans<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        t: usize,
        prev: &[f64],
        rng: &mut R,
        out: &mut [f64],
    );

    fn sample_obs<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        t: usize,
        x: &[f64],
        rng: &mut R,
        out: &mut [f64],
    );

    /// Whether `trans_logdensity` can be evaluated pointwise. Backward
    /// sampling needs it.
    fn has_trans_density(&self) -> bool {
        true
    }

    /// Whether `f_theta(x_{t-1}, x_t)` varies with `x_{t-1}`. When it does
    /// not, backward-sampling weights reduce to the filtering weights.
    fn trans_depends_on_prev(&self) -> bool {
        true
    }

    /// Closed-form `log l_theta(y_{1:T})`, when the model has one.
    fn exact_log_likelihood(&self, _theta: &[f64], _data: &Dataset) -> Option<f64> {
        None
    }

    /// Closed-form `log p_theta(x_t | y_t)` for models whose transition does
    /// not depend on the previous state.
    fn exact_conditional_logdensity(
        &self,
        _theta: &[f64],
        _t: usize,
        _x: &[f64],
        _y: &[f64],
    ) -> Option<f64> {
        None
    }

    /// Exact draw of `x_{1:T}` from `p_theta(x_{1:T} | y_{1:T})`, when available.
    fn sample_exact_conditional<R: Rng + ?Sized>(
        &self,
        _theta: &[f64],
        _data: &Dataset,
        _rng: &mut R,
    ) -> Option<LatentPath> {
        None
    }

    /// `log p_theta(x_{1:T}, y_{1:T})`.
    fn log_joint(&self, theta: &[f64], path: &LatentPath, data: &Dataset) -> f64 {
        let mut acc = 0.0;
        for s in 0..data.len() {
            let x = path.state(s);
            acc += if s == 0 {
                self.init_logdensity(theta, x)
            } else {
                self.trans_logdensity(theta, s + 1, path.state(s - 1), x)
            };
            acc += self.obs_logdensity(theta, s + 1, x, data.obs(s));
        }
        acc
    }
}

/// Observations `y_{1:T}`, optionally with the latent truth that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    obs_dim: usize,
    y: Vec<f64>,
    #[serde(default)]
    pub x_true: Option<LatentPath>,
    #[serde(default)]
    pub theta_true: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from row-major observations.
    pub fn new(obs_dim: usize, y: Vec<f64>) -> Result<Self> {
        if obs_dim == 0 || y.is_empty() || !y.len().is_multiple_of(obs_dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form a nonempty sequence of {obs_dim}-vectors",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observations must be finite".into()));
        }
        Ok(Self {
            obs_dim,
            y,
            x_true: None,
            theta_true: None,
        })
    }

    /// Scalar observations.
    pub fn from_scalars(y: Vec<f64>) -> Result<Self> {
        Self::new(1, y)
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.y.len() / self.obs_dim
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Observation at 0-based position `s` (time `s + 1`).
    #[inline]
    pub fn obs(&self, s: usize) -> &[f64] {
        &self.y[s * self.obs_dim..(s + 1) * self.obs_dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// A dataset holding the first `t` observations.
    pub fn truncated(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.len() {
            return Err(Error::InvalidInput(format!(
                "cannot truncate length {} to {t}",
                self.len()
            )));
        }
        Ok(Self {
            obs_dim: self.obs_dim,
            y: self.y[..t * self.obs_dim].to_vec(),
            x_true: self.x_true.as_ref().map(|p| p.truncated(t)),
            theta_true: self.theta_true.clone(),
        })
    }
}

/// A latent trajectory `x_{1:T}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPath {
    state_dim: usize,
    x: Vec<f64>,
}

impl LatentPath {
    pub fn new(state_dim: usize, x: Vec<f64>) -> Result<Self> {
        if state_dim == 0 || x.is_empty() || !x.len().is_multiple_of(state_dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form a nonempty sequence of {state_dim}-vectors",
                x.len()
            )));
        }
        Ok(Self { state_dim, x })
    }

    pub fn from_scalars(x: Vec<f64>) -> Result<Self> {
        Self::new(1, x)
    }

    pub(crate) fn zeros(state_dim: usize, len: usize) -> Self {
        Self {
            state_dim,
            x: vec![0.0; state_dim * len],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    #[inline]
    pub fn state(&self, s: usize) -> &[f64] {
        &self.x[s * self.state_dim..(s + 1) * self.state_dim]
    }

    #[inline]
    pub fn state_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.x[s * self.state_dim..(s + 1) * self.state_dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    fn truncated(&self, t: usize) -> Self {
        Self {
            state_dim: self.state_dim,
            x: self.x[..t * self.state_dim].to_vec(),
        }
    }
}

/// Draws `(x_{1:T}, y_{1:T})` from the model at `theta`.
pub fn simulate<M, R>(model: &M, theta: &[f64], t_len: usize, rng: &mut R) -> Result<Dataset>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    model.param_domain().check(theta)?;
    if t_len == 0 {
        return Err(Error::InvalidInput("T must be at least 1".into()));
    }
    let (dx, dy) = (model.state_dim(), model.obs_dim());
    let mut path = LatentPath::zeros(dx, t_len);
    let mut y = vec![0.0; dy * t_len];
    for s in 0..t_len {
        let (done, rest) = path.x.split_at_mut(s * dx);
        let cur = &mut rest[..dx];
        if s == 0 {
            model.sample_init(theta, rng, cur);
        } else {
            model.sample_trans(theta, s + 1, &done[(s - 1) * dx..], rng, cur);
        }
        model.sample_obs(theta, s + 1, cur, rng, &mut y[s * dy..(s + 1) * dy]);
    }
    let mut data = Dataset::new(dy, y)?;
    data.x_true = Some(path);
    data.theta_true = Some(theta.to_vec());
    Ok(data)
}
