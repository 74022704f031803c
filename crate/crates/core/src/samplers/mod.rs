//! MCMC samplers: marginal MH, PMMH, MCMC-AIS and Metropolis-within-particle-
//! Gibbs, with chain running and the SPSA gradient estimator.

mod chain;
mod kernels;
mod proposal;
mod spsa;

pub use chain::{
    default_burn_in, initialize, run_chain, run_chain_from_prior, sample_initial_theta, ChainSpec,
    ChainTrace, LatentTrace,
};
pub use kernels::{
    draw_proposal, marginal_mh_move, marginal_mh_step, mcmc_ais_move, mcmc_ais_step,
    mwpg_latent_update, mwpg_step, mwpg_theta_move, pmmh_move, pmmh_step, step, BridgeConfig,
    ChainRng, ChainState, LogRatioParts, MwpgConfig, SamplerConfig, SamplerKind, SamplerWorkspace,
    ScheduleSpec, SmcConfig, StepOutcome,
};
pub use proposal::{ProposalScale, ProposedMove, RwProposal};
pub use spsa::{spsa_gradient_estimate, GradientEstimate, RatioSource};
