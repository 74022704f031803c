//! Model selection from a configuration.

use ssm_mcmc::samplers::{ProposalScale, RwProposal};
use ssm_mcmc::{Dataset, IidGaussianModel, NonlinearBenchmarkModel};

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::{CliError, CliResult};

/// One of the built-in models.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Iid(IidGaussianModel),
    Nonlinear(NonlinearBenchmarkModel),
}

/// Evaluates `$body` with `$m` bound to the concrete model.
#[macro_export]
macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            $crate::models::AnyModel::Iid($m) => $body,
            $crate::models::AnyModel::Nonlinear($m) => $body,
        }
    };
}

impl AnyModel {
    /// The configured model, with the iid weight set to `a`.
    pub fn build(cfg: &ExperimentConfig, a: f64) -> CliResult<Self> {
        let m = &cfg.model;
        let built = match m.kind {
            ModelKind::Iid => IidGaussianModel::new(a, m.var_x, m.var_y, m.prior_mean, m.prior_var)
                .map(AnyModel::Iid),
            ModelKind::Nonlinear => {
                NonlinearBenchmarkModel::new(m.prior_shape, m.prior_scale).map(AnyModel::Nonlinear)
            }
        };
        built.map_err(|e| CliError::Config(e.to_string()))
    }

    /// The random-walk proposal for data set `data`.
    pub fn proposal(&self, cfg: &ExperimentConfig, data: &Dataset) -> CliResult<RwProposal> {
        let s = &cfg.sampler;
        let (default_sd, default_scale) = match self {
            AnyModel::Iid(m) => (vec![m.exact_posterior(data).sd()], ProposalScale::Identity),
            AnyModel::Nonlinear(_) => (vec![0.15, 0.08], ProposalScale::StdDev),
        };
        let mut sd = s.proposal_sd.clone().unwrap_or(default_sd);
        if s.proposal_sd.is_some() && s.scale_with_sqrt_t {
            let f = (data.len() as f64).sqrt();
            sd.iter_mut().for_each(|v| *v /= f);
        }
        RwProposal::with_scale(sd, s.proposal_scale.unwrap_or(default_scale))
            .map_err(|e| CliError::Config(e.to_string()))
    }
}
