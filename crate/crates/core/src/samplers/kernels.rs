//! The four Metropolis-Hastings kernels.
//!
//! Every step draws the proposal noise and the acceptance uniform from the
//! proposal stream, and all particle work from the kernel stream. Two
//! samplers started from the same proposal stream therefore see identical
//! proposal noise and uniforms.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ais::{
    ais_csmc_run_with, AisWorkspace, AnnealingPath, CsmcKernel, PathKind, StageKernels,
};
use crate::error::{Error, Result};
use crate::model::{Dataset, LatentPath, StateSpaceModel};
use crate::rng::{substream, RngStream};
use crate::smc::{csmc_run_with, smc_run_with, ProposalSpec, SmcWorkspace};

use super::proposal::{ProposedMove, RwProposal};

/// Sampler families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    MarginalMh,
    Pmmh,
    McmcAis,
    Mwpg,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [
        SamplerKind::MarginalMh,
        SamplerKind::Pmmh,
        SamplerKind::McmcAis,
        SamplerKind::Mwpg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::MarginalMh => "marginal_mh",
            SamplerKind::Pmmh => "pmmh",
            SamplerKind::McmcAis => "mcmc_ais",
            SamplerKind::Mwpg => "mwpg",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown sampler kind `{s}`")))
    }
}

/// Particle filter settings for PMMH.
#[derive(Debug, Clone, Default)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub proposal: ProposalSpec,
}

impl SmcConfig {
    pub fn new(n_particles: usize) -> Self {
        Self {
            n_particles,
            proposal: ProposalSpec::Prior,
        }
    }
}

/// Schedule of the annealing bridge.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScheduleSpec {
    /// `s_k = k / (K + 1)`.
    #[default]
    Linear,
    /// `s_k = (k / (K + 1))^p`.
    Power(f64),
    /// Explicit values `s_0 = 0, ..., s_{K+1} = 1`.
    Table(Vec<f64>),
}

/// Bridge settings for MCMC-AIS.
#[derive(Debug, Clone)]
pub struct BridgeConfig {
    /// Number of intermediate stages `K`.
    pub k: usize,
    pub schedule: ScheduleSpec,
    pub kernels: StageKernels,
}

impl BridgeConfig {
    pub fn new(k: usize, n_particles: usize, backward_sampling: bool) -> Self {
        Self {
            k,
            schedule: ScheduleSpec::Linear,
            kernels: StageKernels::Uniform(CsmcKernel::new(n_particles, backward_sampling)),
        }
    }

    /// The bridge from `theta` to `theta'`.
    pub fn path(&self, theta: &[f64], theta_prime: &[f64]) -> Result<AnnealingPath> {
        match &self.schedule {
            ScheduleSpec::Linear => AnnealingPath::linear(theta, theta_prime, self.k),
            ScheduleSpec::Power(p) => {
                let p = *p;
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::InvalidInput(
                        "schedule power must be positive".into(),
                    ));
                }
                AnnealingPath::from_fn(
                    theta,
                    theta_prime,
                    self.k,
                    |u| u.powf(p),
                    PathKind::Parameter,
                )
            }
            ScheduleSpec::Table(v) => {
                if v.len() != self.k + 2 {
                    return Err(Error::InvalidInput(format!(
                        "schedule table has {} entries, K + 2 = {} expected",
                        v.len(),
                        self.k + 2
                    )));
                }
                AnnealingPath::with_schedule(theta, theta_prime, v.clone(), PathKind::Parameter)
            }
        }
    }

    /// The kernel of the first stage, or of the only stage setting.
    pub fn first_kernel(&self) -> Option<&CsmcKernel> {
        match &self.kernels {
            StageKernels::Uniform(k) => Some(k),
            StageKernels::PerStage(v) => v.first(),
        }
    }
}

/// Settings for Metropolis-within-particle-Gibbs.
#[derive(Debug, Clone)]
pub struct MwpgConfig {
    pub kernel: CsmcKernel,
    /// Compute the parameter ratio by a zero-stage bridge run instead of by
    /// direct evaluation of the two joint densities. Both give the same
    /// value; the flag exists to cross-check the two routes.
    pub theta_ratio_via_ais: bool,
}

impl MwpgConfig {
    pub fn new(n_particles: usize) -> Self {
        Self {
            kernel: CsmcKernel::new(n_particles, true),
            theta_ratio_via_ais: false,
        }
    }
}

/// A sampler with its full configuration.
#[derive(Debug, Clone)]
pub enum SamplerConfig {
    MarginalMh,
    Pmmh(SmcConfig),
    McmcAis(BridgeConfig),
    Mwpg(MwpgConfig),
}

impl SamplerConfig {
    pub fn kind(&self) -> SamplerKind {
        match self {
            SamplerConfig::MarginalMh => SamplerKind::MarginalMh,
            SamplerConfig::Pmmh(_) => SamplerKind::Pmmh,
            SamplerConfig::McmcAis(_) => SamplerKind::McmcAis,
            SamplerConfig::Mwpg(_) => SamplerKind::Mwpg,
        }
    }

    /// Stable textual description of the configuration.
    pub fn fingerprint(&self) -> String {
        format!("{self:?}")
    }

    /// Particle count used to initialize the latent path or likelihood cache.
    pub fn init_particles(&self) -> usize {
        match self {
            SamplerConfig::MarginalMh => 0,
            SamplerConfig::Pmmh(c) => c.n_particles,
            SamplerConfig::McmcAis(b) => b.first_kernel().map_or(100, |k| k.n_particles),
            SamplerConfig::Mwpg(m) => m.kernel.n_particles,
        }
    }
}

/// Current state of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    /// Carried by MCMC-AIS and MwPG.
    pub latent: Option<LatentPath>,
    /// `log l^_theta(y)`, carried by PMMH and refreshed only on acceptance.
    pub cached_loglike: Option<f64>,
    pub iteration: u64,
}

impl ChainState {
    pub fn new(theta: Vec<f64>) -> Self {
        Self {
            theta,
            latent: None,
            cached_loglike: None,
            iteration: 0,
        }
    }

    pub fn with_latent(mut self, x: LatentPath) -> Self {
        self.latent = Some(x);
        self
    }

    pub fn with_loglike(mut self, ll: f64) -> Self {
        self.cached_loglike = Some(ll);
        self
    }
}

/// Additive pieces of the log acceptance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogRatioParts {
    /// `log q(theta', theta) - log q(theta, theta')`.
    pub proposal: f64,
    /// `log eta(theta') - log eta(theta)`.
    pub prior: f64,
    /// Likelihood-ratio term (exact, estimated or joint-density ratio).
    pub target: f64,
}

/// Result of one kernel application.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    /// Finite or `-inf`.
    pub log_r: f64,
    pub proposed: ProposedMove,
    pub parts: LogRatioParts,
    /// Stage increments of the bridge, when one was run.
    pub increments: Vec<f64>,
    /// The particle filter at `theta'` degenerated.
    pub degenerate: bool,
}

impl StepOutcome {
    fn rejected_outright(proposed: ProposedMove, prior: f64) -> Self {
        Self {
            accepted: false,
            log_r: f64::NEG_INFINITY,
            parts: LogRatioParts {
                proposal: proposed.log_q_ratio,
                prior,
                target: 0.0,
            },
            proposed,
            increments: Vec::new(),
            degenerate: false,
        }
    }
}

/// The two random streams of a chain.
#[derive(Debug, Clone)]
pub struct ChainRng {
    /// Proposal noise and acceptance uniforms.
    pub proposal: RngStream,
    /// Particle filters, conditional SMC and bridges.
    pub kernel: RngStream,
}

impl ChainRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            proposal: substream(seed, &[0]),
            kernel: substream(seed, &[1]),
        }
    }
}

/// Buffers reused across steps.
#[derive(Debug, Default)]
pub struct SamplerWorkspace {
    smc: SmcWorkspace,
    ais: AisWorkspace,
}

impl SamplerWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Draws a proposal and the log acceptance uniform from the proposal stream.
pub fn draw_proposal<R: Rng + ?Sized>(
    proposal: &RwProposal,
    theta: &[f64],
    rng: &mut R,
) -> (ProposedMove, f64) {
    let mv = proposal.propose(theta, rng);
    let log_u = rng.random::<f64>().ln();
    (mv, log_u)
}

/// Prior log ratio, or `None` if the move must be rejected without further
/// work.
fn screen<M: StateSpaceModel + ?Sized>(model: &M, theta: &[f64], mv: &ProposedMove) -> Option<f64> {
    if mv.log_q_ratio == f64::NEG_INFINITY || !model.param_domain().contains(&mv.theta) {
        return None;
    }
    let lp_new = model.prior_logdensity(&mv.theta);
    if lp_new == f64::NEG_INFINITY {
        return None;
    }
    Some(lp_new - model.prior_logdensity(theta))
}

fn finish(
    mv: ProposedMove,
    log_u: f64,
    parts: LogRatioParts,
) -> (bool, f64, ProposedMove, LogRatioParts) {
    let log_r = parts.proposal + parts.prior + parts.target;
    let log_r = if log_r.is_nan() {
        f64::NEG_INFINITY
    } else {
        log_r
    };
    (log_u < log_r, log_r, mv, parts)
}

fn require_latent(state: &ChainState) -> Result<&LatentPath> {
    state
        .latent
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("state carries no latent path".into()))
}

/// Marginal MH with the exact likelihood, for a pre-drawn move.
pub fn marginal_mh_move<M: StateSpaceModel + ?Sized>(
    state: &ChainState,
    mv: ProposedMove,
    log_u: f64,
    model: &M,
    data: &Dataset,
) -> Result<(ChainState, StepOutcome)> {
    let ll_cur = model
        .exact_log_likelihood(&state.theta, data)
        .ok_or_else(|| Error::Unsupported("marginal MH needs an exact likelihood".into()))?;
    let Some(prior) = screen(model, &state.theta, &mv) else {
        return Ok((
            state.clone(),
            StepOutcome::rejected_outright(mv, f64::NEG_INFINITY),
        ));
    };
    let ll_new = model
        .exact_log_likelihood(&mv.theta, data)
        .ok_or_else(|| Error::Unsupported("marginal MH needs an exact likelihood".into()))?;
    let parts = LogRatioParts {
        proposal: mv.log_q_ratio,
        prior,
        target: ll_new - ll_cur,
    };
    let (accepted, log_r, mv, parts) = finish(mv, log_u, parts);
    let next = if accepted {
        ChainState {
            theta: mv.theta.clone(),
            ..state.clone()
        }
    } else {
        state.clone()
    };
    Ok((
        next,
        StepOutcome {
            accepted,
            log_r,
            proposed: mv,
            parts,
            increments: Vec::new(),
            degenerate: false,
        },
    ))
}

/// Marginal MH step.
pub fn marginal_mh_step<M: StateSpaceModel + ?Sized>(
    state: &ChainState,
    model: &M,
    data: &Dataset,
    proposal: &RwProposal,
    rng: &mut ChainRng,
) -> Result<(ChainState, StepOutcome)> {
    let (mv, log_u) = draw_proposal(proposal, &state.theta, &mut rng.proposal);
    marginal_mh_move(state, mv, log_u, model, data)
}

/// PMMH for a pre-drawn move.
#[allow(clippy::too_many_arguments)]
pub fn pmmh_move<M, R>(
    ws: &mut SamplerWorkspace,
    state: &ChainState,
    mv: ProposedMove,
    log_u: f64,
    model: &M,
    data: &Dataset,
    cfg: &SmcConfig,
    rng: &mut R,
) -> Result<(ChainState, StepOutcome)>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    let cached = state
        .cached_loglike
        .ok_or_else(|| Error::InvalidInput("PMMH state carries no cached likelihood".into()))?;
    let Some(prior) = screen(model, &state.theta, &mv) else {
        return Ok((
            state.clone(),
            StepOutcome::rejected_outright(mv, f64::NEG_INFINITY),
        ));
    };
    let (ll_new, degenerate) = match smc_run_with(
        &mut ws.smc,
        model,
        &mv.theta,
        data,
        &cfg.proposal,
        cfg.n_particles,
        rng,
    ) {
        Ok(est) => (est.value, est.degenerate),
        Err(Error::Degenerate { .. }) => (f64::NEG_INFINITY, true),
        Err(e) => return Err(e),
    };
    let parts = LogRatioParts {
        proposal: mv.log_q_ratio,
        prior,
        target: ll_new - cached,
    };
    let (accepted, log_r, mv, parts) = finish(mv, log_u, parts);
    let next = if accepted {
        ChainState {
            theta: mv.theta.clone(),
            cached_loglike: Some(ll_new),
            ..state.clone()
        }
    } else {
        state.clone()
    };
    Ok((
        next,
        StepOutcome {
            accepted,
            log_r,
            proposed: mv,
            parts,
            increments: Vec::new(),
            degenerate,
        },
    ))
}

/// PMMH step.
pub fn pmmh_step<M: StateSpaceModel + ?Sized>(
    ws: &mut SamplerWorkspace,
    state: &ChainState,
    model: &M,
    data: &Dataset,
    proposal: &RwProposal,
    cfg: &SmcConfig,
    rng: &mut ChainRng,
) -> Result<(ChainState, StepOutcome)> {
    let (mv, log_u) = draw_proposal(proposal, &state.theta, &mut rng.proposal);
    pmmh_move(ws, state, mv, log_u, model, data, cfg, &mut rng.kernel)
}

/// MCMC-AIS for a pre-drawn move.
#[allow(clippy::too_many_arguments)]
pub fn mcmc_ais_move<M, R>(
    ws: &mut SamplerWorkspace,
    state: &ChainState,
    mv: ProposedMove,
    log_u: f64,
    model: &M,
    data: &Dataset,
    bridge: &BridgeConfig,
    rng: &mut R,
) -> Result<(ChainState, StepOutcome)>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    if bridge.k == 0 {
        return Err(Error::InvalidInput(
            "MCMC-AIS needs at least one intermediate stage; K = 0 is reducible".into(),
        ));
    }
    let x = require_latent(state)?;
    let Some(prior) = screen(model, &state.theta, &mv) else {
        return Ok((
            state.clone(),
            StepOutcome::rejected_outright(mv, f64::NEG_INFINITY),
        ));
    };
    let path = bridge.path(&state.theta, &mv.theta)?;
    let est = ais_csmc_run_with(&mut ws.ais, x, &path, model, data, &bridge.kernels, rng)?;
    let parts = LogRatioParts {
        proposal: mv.log_q_ratio,
        prior,
        target: est.log_value,
    };
    let (accepted, log_r, mv, parts) = finish(mv, log_u, parts);
    let increments = est.increments.clone();
    let next = if accepted {
        ChainState {
            theta: mv.theta.clone(),
            latent: Some(est.into_final_path()),
            ..state.clone()
        }
    } else {
        state.clone()
    };
    Ok((
        next,
        StepOutcome {
            accepted,
            log_r,
            proposed: mv,
            parts,
            increments,
            degenerate: false,
        },
    ))
}

/// MCMC-AIS step.
pub fn mcmc_ais_step<M: StateSpaceModel + ?Sized>(
    ws: &mut SamplerWorkspace,
    state: &ChainState,
    model: &M,
    data: &Dataset,
    proposal: &RwProposal,
    bridge: &BridgeConfig,
    rng: &mut ChainRng,
) -> Result<(ChainState, StepOutcome)> {
    let (mv, log_u) = draw_proposal(proposal, &state.theta, &mut rng.proposal);
    mcmc_ais_move(ws, state, mv, log_u, model, data, bridge, &mut rng.kernel)
}

/// Parameter sub-step of MwPG for a pre-drawn move: MH on `theta | x`.
#[allow(clippy::too_many_arguments)]
pub fn mwpg_theta_move<M, R>(
    ws: &mut SamplerWorkspace,
    state: &ChainState,
    mv: ProposedMove,
    log_u: f64,
    model: &M,
    data: &Dataset,
    cfg: &MwpgConfig,
    rng: &mut R,
) -> Result<(ChainState, StepOutcome)>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    let x = require_latent(state)?;
    let Some(prior) = screen(model, &state.theta, &mv) else {
        return Ok((
            state.clone(),
            StepOutcome::rejected_outright(mv, f64::NEG_INFINITY),
        ));
    };
    let (target, increments) = if cfg.theta_ratio_via_ais {
        let path = AnnealingPath::linear(&state.theta, &mv.theta, 0)?;
        let kernels = StageKernels::Uniform(cfg.kernel.clone());
        let est = ais_csmc_run_with(&mut ws.ais, x, &path, model, data, &kernels, rng)?;
        (est.log_value, est.increments)
    } else {
        (
            model.log_joint(&mv.theta, x, data) - model.log_joint(&state.theta, x, data),
            Vec::new(),
        )
    };
    let parts = LogRatioParts {
        proposal: mv.log_q_ratio,
        prior,
        target,
    };
    let (accepted, log_r, mv, parts) = finish(mv, log_u, parts);
    let next = if accepted {
        ChainState {
            theta: mv.theta.clone(),
            ..state.clone()
        }
    } else {
        state.clone()
    };
    Ok((
        next,
        StepOutcome {
            accepted,
            log_r,
            proposed: mv,
            parts,
            increments,
            degenerate: false,
        },
    ))
}

/// Latent sub-step of MwPG: one conditional SMC sweep at the current `theta`.
pub fn mwpg_latent_update<M, R>(
    ws: &mut SamplerWorkspace,
    state: ChainState,
    model: &M,
    data: &Dataset,
    cfg: &MwpgConfig,
    rng: &mut R,
) -> Result<ChainState>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    let x = require_latent(&state)?;
    let k = &cfg.kernel;
    let x_new = csmc_run_with(
        &mut ws.smc,
        k.backward_sampling,
        model,
        &state.theta,
        data,
        &k.proposal,
        k.n_particles,
        x,
        rng,
    )?;
    Ok(ChainState {
        latent: Some(x_new),
        ..state
    })
}

/// MwPG step: parameter update, then latent update.
pub fn mwpg_step<M: StateSpaceModel + ?Sized>(
    ws: &mut SamplerWorkspace,
    state: &ChainState,
    model: &M,
    data: &Dataset,
    proposal: &RwProposal,
    cfg: &MwpgConfig,
    rng: &mut ChainRng,
) -> Result<(ChainState, StepOutcome)> {
    let (mv, log_u) = draw_proposal(proposal, &state.theta, &mut rng.proposal);
    let (mid, out) = mwpg_theta_move(ws, state, mv, log_u, model, data, cfg, &mut rng.kernel)?;
    let next = mwpg_latent_update(ws, mid, model, data, cfg, &mut rng.kernel)?;
    Ok((next, out))
}

/// One step of the configured sampler.
pub fn step<M: StateSpaceModel + ?Sized>(
    ws: &mut SamplerWorkspace,
    config: &SamplerConfig,
    state: &ChainState,
    model: &M,
    data: &Dataset,
    proposal: &RwProposal,
    rng: &mut ChainRng,
) -> Result<(ChainState, StepOutcome)> {
    match config {
        SamplerConfig::MarginalMh => marginal_mh_step(state, model, data, proposal, rng),
        SamplerConfig::Pmmh(c) => pmmh_step(ws, state, model, data, proposal, c, rng),
        SamplerConfig::McmcAis(b) => mcmc_ais_step(ws, state, model, data, proposal, b, rng),
        SamplerConfig::Mwpg(c) => mwpg_step(ws, state, model, data, proposal, c, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::models::{IidGaussianModel, NonlinearBenchmarkModel};
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn setup() -> (IidGaussianModel, Dataset) {
        let m = IidGaussianModel::new(1.0, 1.0, 0.5, 0.0, 1e5).unwrap();
        let d = simulate(&m, &[0.3], 40, &mut stream(11)).unwrap();
        (m, d)
    }

    fn exact_state(m: &IidGaussianModel, d: &Dataset, theta: f64) -> ChainState {
        let x = m
            .sample_exact_conditional(&[theta], d, &mut stream(5))
            .unwrap();
        ChainState::new(vec![theta]).with_latent(x)
    }

    #[test]
    fn kind_names_round_trip() {
        for k in SamplerKind::ALL {
            assert_eq!(k.name().parse::<SamplerKind>().unwrap(), k);
        }
        assert!("gibbs".parse::<SamplerKind>().is_err());
    }

    #[test]
    fn marginal_ratio_is_exact_loglik_difference() {
        let (m, d) = setup();
        let flat = IidGaussianModel::new(1.0, 1.0, 0.5, 0.0, 1e300).unwrap();
        let s = ChainState::new(vec![0.2]);
        let (_, out) =
            marginal_mh_move(&s, ProposedMove::to(vec![0.35], 0.0), 0.0, &flat, &d).unwrap();
        let exact = m.exact_log_likelihood(&[0.35], &d).unwrap()
            - m.exact_log_likelihood(&[0.2], &d).unwrap();
        assert_relative_eq!(out.log_r, exact, epsilon = 1e-9);
    }

    #[test]
    fn out_of_domain_rejects() {
        let m = NonlinearBenchmarkModel::default();
        let d = simulate(&m, &[1.0, 1.0], 5, &mut stream(1)).unwrap();
        let s = ChainState::new(vec![1.0, 1.0]).with_loglike(-3.0);
        let mut ws = SamplerWorkspace::new();
        let (next, out) = pmmh_move(
            &mut ws,
            &s,
            ProposedMove::to(vec![-1.0, 1.0], 0.0),
            -10.0,
            &m,
            &d,
            &SmcConfig::new(10),
            &mut stream(2),
        )
        .unwrap();
        assert_eq!(out.log_r, f64::NEG_INFINITY);
        assert!(!out.accepted);
        assert_eq!(next, s);
    }

    #[test]
    fn marginal_needs_oracle() {
        let m = NonlinearBenchmarkModel::default();
        let d = simulate(&m, &[1.0, 1.0], 5, &mut stream(1)).unwrap();
        let p = RwProposal::new(vec![0.1, 0.1]).unwrap();
        let r = marginal_mh_step(
            &ChainState::new(vec![1.0, 1.0]),
            &m,
            &d,
            &p,
            &mut ChainRng::from_seed(0),
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn pmmh_same_theta_exposes_noise_and_caches_on_accept() {
        let (m, d) = setup();
        let flat = IidGaussianModel::new(1.0, 1.0, 0.5, 0.0, 1e300).unwrap();
        let s = ChainState::new(vec![0.3]).with_loglike(-60.0);
        let mut ws = SamplerWorkspace::new();
        let mut rng = stream(3);
        let (next, out) = pmmh_move(
            &mut ws,
            &s,
            ProposedMove::to(vec![0.3], 0.0),
            f64::NEG_INFINITY,
            &flat,
            &d,
            &SmcConfig::new(20),
            &mut rng,
        )
        .unwrap();
        let mut rng = stream(3);
        let est = smc_run_with(
            &mut SmcWorkspace::new(),
            &m,
            &[0.3],
            &d,
            &ProposalSpec::Prior,
            20,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.log_r, est.value + 60.0);
        assert!(out.accepted);
        assert_eq!(next.cached_loglike, Some(est.value));
        let (again, out2) = pmmh_move(
            &mut ws,
            &next,
            ProposedMove::to(vec![0.3], 0.0),
            0.0,
            &flat,
            &d,
            &SmcConfig::new(20),
            &mut stream(4),
        )
        .unwrap();
        if !out2.accepted {
            assert_eq!(again, next);
        }
    }

    #[test]
    fn ais_same_theta_always_accepts() {
        let (m, d) = setup();
        let s = exact_state(&m, &d, 0.3);
        let mut ws = SamplerWorkspace::new();
        let (next, out) = mcmc_ais_move(
            &mut ws,
            &s,
            ProposedMove::to(vec![0.3], 0.0),
            -1e-12,
            &m,
            &d,
            &BridgeConfig::new(2, 10, true),
            &mut stream(1),
        )
        .unwrap();
        assert_eq!(out.log_r, 0.0);
        assert!(out.accepted);
        assert_eq!(next.theta, vec![0.3]);
        assert_eq!(next.latent.as_ref().unwrap().len(), d.len());
    }

    #[test]
    fn ais_rejects_zero_stages() {
        let (m, d) = setup();
        let s = exact_state(&m, &d, 0.3);
        let r = mcmc_ais_move(
            &mut SamplerWorkspace::new(),
            &s,
            ProposedMove::to(vec![0.4], 0.0),
            0.0,
            &m,
            &d,
            &BridgeConfig::new(0, 10, true),
            &mut stream(1),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ais_ratio_reassembles_from_increments() {
        let (m, d) = setup();
        let mut state = exact_state(&m, &d, 0.3);
        let mut ws = SamplerWorkspace::new();
        let mut rng = ChainRng::from_seed(8);
        let p = RwProposal::new(vec![0.2]).unwrap();
        let bridge = BridgeConfig::new(3, 10, true);
        for _ in 0..50 {
            let (next, out) =
                mcmc_ais_step(&mut ws, &state, &m, &d, &p, &bridge, &mut rng).unwrap();
            let sum: f64 = out.increments.iter().sum();
            assert_eq!(out.parts.target, sum);
            assert_eq!(out.log_r, out.parts.proposal + out.parts.prior + sum);
            if !out.accepted {
                assert_eq!(next, state);
            }
            state = next;
        }
    }

    #[test]
    fn mwpg_theta_ratio_matches_factorized_joint() {
        let (m, d) = setup();
        let s = exact_state(&m, &d, 0.3);
        let x = s.latent.clone().unwrap();
        let mut ws = SamplerWorkspace::new();
        let cfg = MwpgConfig::new(10);
        let (_, out) = mwpg_theta_move(
            &mut ws,
            &s,
            ProposedMove::to(vec![0.45], 0.0),
            0.0,
            &m,
            &d,
            &cfg,
            &mut stream(0),
        )
        .unwrap();
        let mut direct = 0.0;
        for t in 0..d.len() {
            let xt = x.state(t);
            direct += m.init_logdensity(&[0.45], xt)
                + m.obs_logdensity(&[0.45], t + 1, xt, d.obs(t))
                - m.init_logdensity(&[0.3], xt)
                - m.obs_logdensity(&[0.3], t + 1, xt, d.obs(t));
        }
        let prior = m.prior_logdensity(&[0.45]) - m.prior_logdensity(&[0.3]);
        assert_relative_eq!(out.log_r, direct + prior, epsilon = 1e-9);

        let via = MwpgConfig {
            theta_ratio_via_ais: true,
            ..cfg.clone()
        };
        let (_, out2) = mwpg_theta_move(
            &mut ws,
            &s,
            ProposedMove::to(vec![0.45], 0.0),
            0.0,
            &m,
            &d,
            &via,
            &mut stream(0),
        )
        .unwrap();
        assert_relative_eq!(out2.log_r, out.log_r, epsilon = 1e-12);
        assert_eq!(out2.increments.len(), 1);

        let (_, same) = mwpg_theta_move(
            &mut ws,
            &s,
            ProposedMove::to(vec![0.3], 0.0),
            -1e-12,
            &m,
            &d,
            &cfg,
            &mut stream(0),
        )
        .unwrap();
        assert_eq!(same.log_r, 0.0);
        assert!(same.accepted);
    }

    #[test]
    fn rejection_preserves_state_bitwise() {
        let (m, d) = setup();
        let mut ws = SamplerWorkspace::new();
        let far = ProposedMove::to(vec![50.0], 0.0);
        let s = exact_state(&m, &d, 0.3).with_loglike(-55.5);
        let (a, oa) = marginal_mh_move(&s, far.clone(), 0.0, &m, &d).unwrap();
        let (b, ob) = pmmh_move(
            &mut ws,
            &s,
            far.clone(),
            0.0,
            &m,
            &d,
            &SmcConfig::new(10),
            &mut stream(1),
        )
        .unwrap();
        let (c, oc) = mcmc_ais_move(
            &mut ws,
            &s,
            far.clone(),
            0.0,
            &m,
            &d,
            &BridgeConfig::new(1, 10, true),
            &mut stream(1),
        )
        .unwrap();
        let (e, oe) = mwpg_theta_move(
            &mut ws,
            &s,
            far,
            0.0,
            &m,
            &d,
            &MwpgConfig::new(10),
            &mut stream(1),
        )
        .unwrap();
        for (st, o) in [(a, oa), (b, ob), (c, oc), (e, oe)] {
            assert!(!o.accepted);
            assert_eq!(st, s);
        }
    }

    #[test]
    fn paired_streams_share_proposals() {
        let (m, d) = setup();
        let p = RwProposal::new(vec![0.1]).unwrap();
        let mut r1 = ChainRng::from_seed(77);
        let mut r2 = ChainRng::from_seed(77);
        let s = exact_state(&m, &d, 0.3);
        let mut ws = SamplerWorkspace::new();
        let (_, o1) = marginal_mh_step(&s, &m, &d, &p, &mut r1).unwrap();
        let (_, o2) = mwpg_step(&mut ws, &s, &m, &d, &p, &MwpgConfig::new(5), &mut r2).unwrap();
        assert_eq!(o1.proposed.noise, o2.proposed.noise);
    }
}
