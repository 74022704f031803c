//! Chain diagnostics and the empirical check of the log-normal acceptance
//! penalty.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, LatentPath, StateSpaceModel};
use crate::samplers::ChainTrace;
use crate::smc::{csmc_run_with, ProposalSpec, SmcWorkspace};

/// Minimum series length accepted by [`iac_time`].
pub const MIN_IAC_LEN: usize = 100;

/// Integrated autocorrelation time estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IacEstimate {
    /// At least 1.
    pub value: f64,
    /// The series was constant; `value` is then 1.
    pub degenerate: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn autocovariance(centered: &[f64], lag: usize) -> f64 {
    let n = centered.len();
    centered[..n - lag]
        .iter()
        .zip(&centered[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// `1 + 2 sum_k rho_k`, truncated by Geyer's initial monotone sequence rule
/// on sums of adjacent autocovariance pairs.
pub fn iac_time(series: &[f64]) -> Result<IacEstimate> {
    if series.len() < MIN_IAC_LEN {
        return Err(Error::InvalidInput(format!(
            "IAC needs at least {MIN_IAC_LEN} values, got {}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "series contains non-finite values".into(),
        ));
    }
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|v| v - m).collect();
    let g0 = autocovariance(&centered, 0);
    if g0 <= 0.0 || series.iter().all(|&v| v == series[0]) {
        return Ok(IacEstimate {
            value: 1.0,
            degenerate: true,
        });
    }
    let n = series.len();
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = autocovariance(&centered, 2 * k) + autocovariance(&centered, 2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = (2.0 * sum_pairs - g0) / g0;
    Ok(IacEstimate {
        value: tau.max(1.0),
        degenerate: false,
    })
}

/// Effective sample size from non-overlapping batch means with batch size
/// `floor(sqrt(n))`; capped at `n`.
pub fn batch_means_ess(series: &[f64]) -> Result<f64> {
    let n = series.len();
    let b = (n as f64).sqrt().floor() as usize;
    let batches = n.checked_div(b).unwrap_or(0);
    if batches < 2 {
        return Err(Error::InvalidInput(
            "series too short for batch means".into(),
        ));
    }
    let used = &series[..batches * b];
    let m = mean(used);
    let var = used.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (used.len() as f64 - 1.0);
    if var == 0.0 {
        return Ok(n as f64);
    }
    let bm: Vec<f64> = used.chunks(b).map(mean).collect();
    let var_bm = bm.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    let tau = (b as f64 * var_bm / var).max(1.0);
    Ok(n as f64 / tau)
}

/// Mean squared successive difference of a scalar series.
pub fn msjd_scalar(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InvalidInput("MSJD needs at least two values".into()));
    }
    Ok(series
        .windows(2)
        .map(|w| (w[1] - w[0]).powi(2))
        .sum::<f64>()
        / (series.len() - 1) as f64)
}

/// Per-coordinate mean squared jump of a vector chain, multiplied by `T`
/// when `scale_by_t` is given.
pub fn msjd(rows: &[Vec<f64>], scale_by_t: Option<usize>) -> Result<Vec<f64>> {
    if rows.len() < 2 {
        return Err(Error::InvalidInput("MSJD needs at least two values".into()));
    }
    let d = rows[0].len();
    let f = scale_by_t.map_or(1.0, |t| t as f64);
    (0..d)
        .map(|j| {
            let s: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            Ok(msjd_scalar(&s)? * f)
        })
        .collect()
}

/// Summary of one chain after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub iac: Vec<f64>,
    pub iac_degenerate: Vec<bool>,
    pub msjd: Vec<f64>,
    pub accept_rate: f64,
    /// `n_samples / iac`.
    pub ess: Vec<f64>,
    pub n_samples: usize,
}

impl DiagnosticsReport {
    /// Diagnostics of the post-burn-in part of `trace`; MSJD is multiplied by
    /// `T` when `scale_by_t` is given.
    pub fn from_trace(trace: &ChainTrace, scale_by_t: Option<usize>) -> Result<Self> {
        let rows = trace.post_burn_in_rows();
        let n = rows.len();
        let mut iac = Vec::with_capacity(trace.param_dim);
        let mut iac_degenerate = Vec::with_capacity(trace.param_dim);
        for j in 0..trace.param_dim {
            let e = iac_time(&trace.post_burn_in(j))?;
            iac.push(e.value);
            iac_degenerate.push(e.degenerate);
        }
        Ok(Self {
            ess: iac.iter().map(|t| n as f64 / t).collect(),
            iac,
            iac_degenerate,
            msjd: msjd(&rows, scale_by_t)?,
            accept_rate: trace.acceptance_rate(),
            n_samples: n,
        })
    }
}

/// One-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Tests `sample` against the continuous distribution function `cdf`.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sq = n.sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d),
    })
}

/// Replicates of `Lambda_T` and the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSample {
    pub values: Vec<f64>,
    pub theta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub t_len: usize,
    pub n_particles: usize,
    /// Fitted penalty variance, the sample variance of `values`.
    pub sigma2: f64,
}

/// Moment and normality summary of a [`LambdaSample`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub mean: f64,
    pub variance: f64,
    /// Standard error of `mean`.
    pub se_mean: f64,
    /// `|mean + variance / 2|`.
    pub coupling: f64,
    /// Standard error of `mean + variance / 2` under normality,
    /// `sqrt(v / n + v^2 / (2 (n - 1)))`.
    pub se_coupling: f64,
    /// Mean of `exp(Lambda_T)` and its standard error.
    pub mean_exp: f64,
    pub se_mean_exp: f64,
    /// KS test against `N(mean, variance)`.
    pub ks: KsResult,
}

impl LambdaSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(
                "at least two replicates are required".into(),
            ));
        }
        let n = values.len() as f64;
        let m = mean(values);
        let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let ex: Vec<f64> = values.iter().map(|x| x.exp()).collect();
        let me = mean(&ex);
        let ve = ex.iter().map(|x| (x - me).powi(2)).sum::<f64>() / (n - 1.0);
        let ks = if v > 0.0 {
            let sd = v.sqrt();
            ks_test(values, |x| crate::numeric::normal_cdf((x - m) / sd))?
        } else {
            KsResult {
                statistic: 0.0,
                p_value: 1.0,
            }
        };
        Ok(Self {
            mean: m,
            variance: v,
            se_mean: (v / n).sqrt(),
            coupling: (m + v / 2.0).abs(),
            se_coupling: (v / n + v * v / (2.0 * (n - 1.0))).sqrt(),
            mean_exp: me,
            se_mean_exp: (ve / n).sqrt(),
            ks,
        })
    }

    /// `coupling / se_coupling`, zero when both vanish.
    pub fn coupling_z(&self) -> f64 {
        if self.coupling == 0.0 {
            0.0
        } else {
            self.coupling / self.se_coupling
        }
    }
}

fn conditional_sum<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &[f64],
    x: &LatentPath,
    data: &Dataset,
) -> Result<f64> {
    let mut acc = 0.0;
    for s in 0..data.len() {
        acc += model
            .exact_conditional_logdensity(theta, s + 1, x.state(s), data.obs(s))
            .ok_or_else(|| {
                Error::Unsupported("the penalty check needs a model with exact conditionals".into())
            })?;
    }
    Ok(acc)
}

/// Draws `replicates` values of
/// `Lambda_T = sum_t [c(th~, x_t) - c(th, x_t) + c(th', x'_t) - c(th~, x'_t)]`
/// with `c(., x_t) = log p(x_t | y_t)`, `th~ = th + eps / (2 sqrt T)`,
/// `th' = th + eps / sqrt T`, `x` an exact conditional draw at `th` and `x'`
/// one conditional SMC sweep at `th~` from `x`.
#[allow(clippy::too_many_arguments)]
pub fn lambda_penalty_check<M, R>(
    model: &M,
    data: &Dataset,
    theta: &[f64],
    epsilon: &[f64],
    n_particles: usize,
    backward_sampling: bool,
    replicates: usize,
    rng: &mut R,
) -> Result<(LambdaSample, LambdaSummary)>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    if epsilon.len() != theta.len() {
        return Err(Error::InvalidInput(
            "epsilon and theta differ in dimension".into(),
        ));
    }
    let t_len = data.len();
    let root_t = (t_len as f64).sqrt();
    let mid: Vec<f64> = theta
        .iter()
        .zip(epsilon)
        .map(|(t, e)| t + e / (2.0 * root_t))
        .collect();
    let end: Vec<f64> = theta
        .iter()
        .zip(epsilon)
        .map(|(t, e)| t + e / root_t)
        .collect();
    let domain = model.param_domain();
    domain.check(theta)?;
    domain.check(&mid)?;
    domain.check(&end)?;
    let mut ws = SmcWorkspace::new();
    let mut values = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let x = model
            .sample_exact_conditional(theta, data, rng)
            .ok_or_else(|| {
                Error::Unsupported("the penalty check needs an exact conditional sampler".into())
            })?;
        let x2 = csmc_run_with(
            &mut ws,
            backward_sampling,
            model,
            &mid,
            data,
            &ProposalSpec::Prior,
            n_particles,
            &x,
            rng,
        )?;
        let lam = conditional_sum(model, &mid, &x, data)?
            - conditional_sum(model, theta, &x, data)?
            + conditional_sum(model, &end, &x2, data)?
            - conditional_sum(model, &mid, &x2, data)?;
        values.push(lam);
    }
    let summary = LambdaSummary::from_values(&values)?;
    Ok((
        LambdaSample {
            sigma2: summary.variance,
            values,
            theta: theta.to_vec(),
            epsilon: epsilon.to_vec(),
            t_len,
            n_particles,
        },
        summary,
    ))
}
