//! Annealed importance sampling of likelihood ratios with conditional SMC
//! moves.
//!
//! Stage densities bridge `p_theta(x, y)` (stage 0) and `p_theta'(x, y)`
//! (stage `K + 1`). Starting from `u_0 ~ p_theta(x | y)`, each stage
//! `k = 1..K` moves the path with one conditional SMC sweep targeting stage
//! `k`, and the product of the density ratios
//! `gamma_{k+1}(u_k) / gamma_k(u_k)` is an unbiased estimate of
//! `l_theta'(y) / l_theta(y)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Dataset, LatentPath, StateSpaceModel};
use crate::smc::{csmc_run_with, smc_run_with, ProposalSpec, SmcWorkspace};

/// How intermediate densities are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathKind {
    /// `gamma_s = p_{(1 - s) theta + s theta'}`; always a state-space model.
    #[default]
    Parameter,
    /// `gamma_s = gamma_theta^(1 - s) gamma_theta'^s`. Only usable for
    /// evaluating densities: no conditional SMC kernel is available for the
    /// tilted model, so driving stages with it is refused.
    Geometric,
}

/// The bridge between `theta` and `theta'`: `K` intermediate stages placed on
/// the schedule values `s_0 = 0 <= s_1 <= ... <= s_{K+1} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingPath {
    theta: Vec<f64>,
    theta_prime: Vec<f64>,
    schedule: Vec<f64>,
    kind: PathKind,
}

impl AnnealingPath {
    /// Linear schedule `s_k = k / (K + 1)` on the parameter path.
    pub fn linear(theta: &[f64], theta_prime: &[f64], k: usize) -> Result<Self> {
        Self::from_fn(theta, theta_prime, k, |u| u, PathKind::Parameter)
    }

    /// Schedule `s_k = f(k / (K + 1))` for a nondecreasing `f` with
    /// `f(0) = 0` and `f(1) = 1`.
    pub fn from_fn(
        theta: &[f64],
        theta_prime: &[f64],
        k: usize,
        f: impl Fn(f64) -> f64,
        kind: PathKind,
    ) -> Result<Self> {
        let schedule = (0..=k + 1).map(|j| f(j as f64 / (k + 1) as f64)).collect();
        Self::with_schedule(theta, theta_prime, schedule, kind)
    }

    /// Explicit schedule table of length `K + 2`.
    pub fn with_schedule(
        theta: &[f64],
        theta_prime: &[f64],
        schedule: Vec<f64>,
        kind: PathKind,
    ) -> Result<Self> {
        if theta.len() != theta_prime.len() || theta.is_empty() {
            return Err(Error::InvalidInput(
                "endpoints must have equal, nonzero dimension".into(),
            ));
        }
        if schedule.len() < 2 {
            return Err(Error::InvalidInput(
                "schedule needs at least the two endpoints".into(),
            ));
        }
        if schedule[0] != 0.0 || *schedule.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput(
                "schedule must start at 0 and end at 1".into(),
            ));
        }
        if schedule
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_gt()))
        {
            return Err(Error::InvalidInput("schedule must be nondecreasing".into()));
        }
        Ok(Self {
            theta: theta.to_vec(),
            theta_prime: theta_prime.to_vec(),
            schedule,
            kind,
        })
    }

    /// Number of intermediate stages `K`.
    pub fn intermediate_count(&self) -> usize {
        self.schedule.len() - 2
    }

    pub fn schedule(&self) -> &[f64] {
        &self.schedule
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_prime(&self) -> &[f64] {
        &self.theta_prime
    }

    /// The same bridge walked from `theta'` to `theta`.
    pub fn reversed(&self) -> Self {
        Self {
            theta: self.theta_prime.clone(),
            theta_prime: self.theta.clone(),
            schedule: self.schedule.iter().rev().map(|s| 1.0 - s).collect(),
            kind: self.kind,
        }
    }

    /// Interpolated parameter `(1 - s_k) theta + s_k theta'`. The endpoints are
    /// returned verbatim so stage 0 and stage `K + 1` reproduce the model
    /// densities exactly.
    pub fn stage_params(&self, k: usize) -> Vec<f64> {
        let s = self.schedule[k];
        if s == 0.0 {
            return self.theta.clone();
        }
        if s == 1.0 {
            return self.theta_prime.clone();
        }
        self.theta
            .iter()
            .zip(&self.theta_prime)
            .map(|(&a, &b)| a + s * (b - a))
            .collect()
    }

    fn check_stage(&self, k: usize) -> Result<()> {
        if k >= self.schedule.len() {
            return Err(Error::InvalidInput(format!(
                "stage {k} outside 0..={}",
                self.schedule.len() - 1
            )));
        }
        Ok(())
    }
}

/// `log gamma_k(x)` for stage `k` of the bridge.
pub fn intermediate_logdensity<M: StateSpaceModel + ?Sized>(
    path: &AnnealingPath,
    k: usize,
    x: &LatentPath,
    data: &Dataset,
    model: &M,
) -> Result<f64> {
    path.check_stage(k)?;
    let domain = model.param_domain();
    match path.kind {
        PathKind::Parameter => {
            let th = path.stage_params(k);
            domain.check(&th)?;
            Ok(model.log_joint(&th, x, data))
        }
        PathKind::Geometric => {
            domain.check(&path.theta)?;
            domain.check(&path.theta_prime)?;
            let s = path.schedule[k];
            let lo = if s < 1.0 {
                model.log_joint(&path.theta, x, data)
            } else {
                0.0
            };
            let hi = if s > 0.0 {
                model.log_joint(&path.theta_prime, x, data)
            } else {
                0.0
            };
            Ok((1.0 - s) * lo + s * hi)
        }
    }
}

/// Settings of the conditional SMC move used at one stage.
#[derive(Debug, Clone, Default)]
pub struct CsmcKernel {
    pub n_particles: usize,
    pub backward_sampling: bool,
    pub proposal: ProposalSpec,
}

impl CsmcKernel {
    pub fn new(n_particles: usize, backward_sampling: bool) -> Self {
        Self {
            n_particles,
            backward_sampling,
            proposal: ProposalSpec::Prior,
        }
    }
}

/// Kernel settings for all stages: one shared setting, or one per stage
/// `k = 1..K`.
#[derive(Debug, Clone)]
pub enum StageKernels {
    Uniform(CsmcKernel),
    PerStage(Vec<CsmcKernel>),
}

impl StageKernels {
    fn get(&self, k: usize) -> &CsmcKernel {
        match self {
            StageKernels::Uniform(s) => s,
            StageKernels::PerStage(v) => &v[k - 1],
        }
    }
}

impl From<CsmcKernel> for StageKernels {
    fn from(k: CsmcKernel) -> Self {
        StageKernels::Uniform(k)
    }
}

/// Output of one AIS run.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimate {
    /// `log L^(theta, theta')`.
    pub log_value: f64,
    /// `log gamma_{k+1}(u_k) - log gamma_k(u_k)` for `k = 0..=K`.
    pub increments: Vec<f64>,
    /// `u_0, ..., u_K`.
    pub stage_paths: Vec<LatentPath>,
}

impl RatioEstimate {
    /// The last path `u_K`.
    pub fn final_path(&self) -> &LatentPath {
        self.stage_paths.last().expect("at least u_0")
    }

    pub fn into_final_path(mut self) -> LatentPath {
        self.stage_paths.pop().expect("at least u_0")
    }
}

/// Reusable state for repeated AIS runs.
#[derive(Debug, Default, Clone)]
pub struct AisWorkspace {
    smc: SmcWorkspace,
}

impl AisWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

/// AIS estimate of `l_theta'(y) / l_theta(y)` starting from `x0`, which
/// should be distributed according to `p_theta(x | y)`.
pub fn ais_csmc_run<M, R>(
    x0: &LatentPath,
    path: &AnnealingPath,
    model: &M,
    data: &Dataset,
    kernels: &StageKernels,
    rng: &mut R,
) -> Result<RatioEstimate>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    ais_csmc_run_with(
        &mut AisWorkspace::new(),
        x0,
        path,
        model,
        data,
        kernels,
        rng,
    )
}

/// [`ais_csmc_run`] reusing buffers.
pub fn ais_csmc_run_with<M, R>(
    ws: &mut AisWorkspace,
    x0: &LatentPath,
    path: &AnnealingPath,
    model: &M,
    data: &Dataset,
    kernels: &StageKernels,
    rng: &mut R,
) -> Result<RatioEstimate>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    let k_count = path.intermediate_count();
    if x0.len() != data.len() {
        return Err(Error::InvalidInput(format!(
            "initial path has length {}, data has {}",
            x0.len(),
            data.len()
        )));
    }
    if let StageKernels::PerStage(v) = kernels {
        if v.len() != k_count {
            return Err(Error::InvalidInput(format!(
                "{} stage kernels given for K = {k_count}",
                v.len()
            )));
        }
    }
    if k_count > 0 && path.kind == PathKind::Geometric {
        return Err(Error::Unsupported(
            "geometric bridges cannot drive conditional SMC stages; use the parameter path".into(),
        ));
    }

    let mut stage_paths = Vec::with_capacity(k_count + 1);
    let mut increments = Vec::with_capacity(k_count + 1);
    stage_paths.push(x0.clone());
    let mut cur_params = path.stage_params(0);
    let mut cur_log = intermediate_logdensity(path, 0, x0, data, model)?;
    for k in 0..=k_count {
        if k > 0 {
            let kernel = kernels.get(k);
            let u = csmc_run_with(
                &mut ws.smc,
                kernel.backward_sampling,
                model,
                &cur_params,
                data,
                &kernel.proposal,
                kernel.n_particles,
                &stage_paths[k - 1],
                rng,
            )?;
            cur_log = intermediate_logdensity(path, k, &u, data, model)?;
            stage_paths.push(u);
        }
        let next_log = intermediate_logdensity(path, k + 1, &stage_paths[k], data, model)?;
        increments.push(next_log - cur_log);
        cur_params = path.stage_params(k + 1);
    }
    let log_value = increments.iter().sum();
    Ok(RatioEstimate {
        log_value,
        increments,
        stage_paths,
    })
}

/// How to produce the AIS starting path `x0 ~ p_theta(x | y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathInit {
    /// Exact draw; needs a model with a closed-form conditional.
    Exact,
    /// One SMC draw followed by `sweeps` conditional SMC sweeps at `theta`.
    Warm { sweeps: usize },
}

/// Draws a starting path at `theta` according to `init`.
pub fn initial_path<M, R>(
    model: &M,
    theta: &[f64],
    data: &Dataset,
    init: PathInit,
    kernel: &CsmcKernel,
    rng: &mut R,
) -> Result<LatentPath>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    match init {
        PathInit::Exact => model
            .sample_exact_conditional(theta, data, rng)
            .ok_or_else(|| Error::Unsupported("model has no exact conditional sampler".into())),
        PathInit::Warm { sweeps } => {
            let mut ws = SmcWorkspace::new();
            smc_run_with(
                &mut ws,
                model,
                theta,
                data,
                &kernel.proposal,
                kernel.n_particles,
                rng,
            )?;
            let mut x = ws.system().sample_path(rng)?;
            for _ in 0..sweeps {
                x = csmc_run_with(
                    &mut ws,
                    kernel.backward_sampling,
                    model,
                    theta,
                    data,
                    &kernel.proposal,
                    kernel.n_particles,
                    &x,
                    rng,
                )?;
            }
            Ok(x)
        }
    }
}

/// One row of [`ratio_variance_vs_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRow {
    pub distance: f64,
    pub variance: f64,
    /// Standard error of `variance`, `variance * sqrt(2 / (n - 1))`.
    pub std_error: f64,
}

/// Sample variance of `log L^(theta, theta + delta)` over `replicates`
/// independent runs, for each displacement `delta`.
#[allow(clippy::too_many_arguments)]
pub fn ratio_variance_vs_distance<M, R>(
    model: &M,
    data: &Dataset,
    theta: &[f64],
    directions: &[Vec<f64>],
    k: usize,
    kernel: &CsmcKernel,
    init: PathInit,
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<VarianceRow>>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    if replicates < 2 {
        return Err(Error::InvalidInput(
            "at least two replicates are required".into(),
        ));
    }
    let mut ws = AisWorkspace::new();
    let kernels = StageKernels::Uniform(kernel.clone());
    directions
        .iter()
        .map(|delta| {
            let target: Vec<f64> = theta.iter().zip(delta).map(|(a, d)| a + d).collect();
            model.param_domain().check(&target)?;
            let path = AnnealingPath::linear(theta, &target, k)?;
            let mut vals = Vec::with_capacity(replicates);
            for _ in 0..replicates {
                let x0 = initial_path(model, theta, data, init, kernel, rng)?;
                vals.push(
                    ais_csmc_run_with(&mut ws, &x0, &path, model, data, &kernels, rng)?.log_value,
                );
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let variance = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(VarianceRow {
                distance: delta.iter().map(|d| d * d).sum::<f64>().sqrt(),
                variance,
                std_error: variance * (2.0 / (n - 1.0)).sqrt(),
            })
        })
        .collect()
}

/// Whether the variance column is nondecreasing in distance up to Monte
/// Carlo noise: no consecutive drop larger than `z` combined standard errors.
pub fn variance_trend_holds(rows: &[VarianceRow], z: f64) -> bool {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    sorted.windows(2).all(|w| {
        let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].variance >= w[0].variance - z * se
    })
}
