//! Experiment configuration, read from TOML.
//!
//! Every field has a default; an empty file describes a single marginal-MH
//! run of 1000 iterations on the iid Gaussian model. See `README.md` for the
//! full schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssm_mcmc::samplers::{LatentTrace, ProposalScale, SamplerKind};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; cell and replicate seeds derive from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub replicates: usize,
    pub iterations: usize,
    /// Defaults to 10% of `iterations`.
    pub burn_in: Option<usize>,
    /// `none`, `thin:K` or `full`. Traces are written only when not `none`.
    pub trace: String,
    /// Give every sampler kind the same seeds in a cell so that they share
    /// proposal noise and acceptance uniforms.
    pub paired_seeds: bool,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub sampler: SamplerSection,
    pub sweep: SweepConfig,
    pub lambda: LambdaConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            replicates: 1,
            iterations: 1000,
            burn_in: None,
            trace: "none".into(),
            paired_seeds: false,
            model: ModelConfig::default(),
            data: DataConfig::default(),
            sampler: SamplerSection::default(),
            sweep: SweepConfig::default(),
            lambda: LambdaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Iid,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub a: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub prior_shape: f64,
    pub prior_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Iid,
            a: 1.0,
            var_x: 1.0,
            var_y: 0.01,
            prior_mean: 0.0,
            prior_var: 1e5,
            prior_shape: 0.01,
            prior_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Simulate,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Generating parameter; defaults to `[0]` (iid) or `[100, 1]` (nonlinear).
    pub theta: Option<Vec<f64>>,
    /// Simulation seed; defaults to one derived from the master seed.
    pub seed: Option<u64>,
    /// Length written by `simulate`; defaults to the largest `sweep.t`.
    pub t: Option<usize>,
    /// Dataset file for `source = "file"`.
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Simulate,
            theta: None,
            seed: None,
            t: None,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub kinds: Vec<SamplerKind>,
    /// Random-walk step sizes. Defaults: the exact posterior standard
    /// deviation (iid) or `[0.15, 0.08]` on the standard-deviation scale
    /// (nonlinear).
    pub proposal_sd: Option<Vec<f64>>,
    /// Defaults to `identity` (iid) or `std_dev` (nonlinear).
    pub proposal_scale: Option<ProposalScale>,
    /// Divide `proposal_sd` by `sqrt(T)`.
    pub scale_with_sqrt_t: bool,
    pub backward_sampling: bool,
    /// Schedule exponent `p` in `s_k = (k / (K + 1))^p`; 1 is linear.
    pub schedule_power: f64,
    pub theta_ratio_via_ais: bool,
    /// Starting parameter; drawn from the prior when absent.
    pub init_theta: Option<Vec<f64>>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            kinds: vec![SamplerKind::MarginalMh],
            proposal_sd: None,
            proposal_scale: None,
            scale_with_sqrt_t: false,
            backward_sampling: true,
            schedule_power: 1.0,
            theta_ratio_via_ais: false,
            init_theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub t: Vec<usize>,
    /// Values of the iid model's `a`; defaults to `[model.a]`. Ignored for
    /// the nonlinear model.
    pub a: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: vec![100],
            k: vec![1],
            t: vec![100],
            a: None,
        }
    }
}

/// Settings for `diagnose --lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaConfig {
    pub epsilon: Vec<f64>,
    pub theta: Option<Vec<f64>>,
    pub replicates: usize,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self {
            epsilon: vec![1.0],
            theta: None,
            replicates: 1000,
        }
    }
}

/// Parses the `trace` setting.
pub fn parse_trace(s: &str) -> CliResult<LatentTrace> {
    match s {
        "none" => Ok(LatentTrace::None),
        "full" => Ok(LatentTrace::Full),
        _ => {
            let k = s
                .strip_prefix("thin:")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k > 0)
                .ok_or_else(|| {
                    CliError::Config(format!("trace must be none, thin:K or full, got `{s}`"))
                })?;
            Ok(LatentTrace::Thin(k))
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 10)
    }

    pub fn a_grid(&self) -> Vec<f64> {
        self.sweep.a.clone().unwrap_or_else(|| vec![self.model.a])
    }

    pub fn param_dim(&self) -> usize {
        match self.model.kind {
            ModelKind::Iid => 1,
            ModelKind::Nonlinear => 2,
        }
    }

    pub fn data_theta(&self) -> Vec<f64> {
        self.data
            .theta
            .clone()
            .unwrap_or_else(|| match self.model.kind {
                ModelKind::Iid => vec![0.0],
                ModelKind::Nonlinear => vec![100.0, 1.0],
            })
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.iterations == 0 || self.burn_in() >= self.iterations {
            return bad(format!(
                "need iterations > burn_in, got {} and {}",
                self.iterations,
                self.burn_in()
            ));
        }
        if self.sampler.kinds.is_empty() {
            return bad("sampler.kinds must not be empty".into());
        }
        if self.sweep.n.is_empty() || self.sweep.k.is_empty() || self.sweep.t.is_empty() {
            return bad("sweep grids must not be empty".into());
        }
        if self.sweep.n.contains(&0) || self.sweep.t.contains(&0) {
            return bad("particle counts and lengths must be positive".into());
        }
        if matches!(&self.sweep.a, Some(v) if v.is_empty()) {
            return bad("sweep.a must not be empty".into());
        }
        parse_trace(&self.trace)?;
        let d = self.param_dim();
        for (name, v) in [
            ("data.theta", &self.data.theta),
            ("sampler.init_theta", &self.sampler.init_theta),
            ("sampler.proposal_sd", &self.sampler.proposal_sd),
            ("lambda.theta", &self.lambda.theta),
        ] {
            if let Some(v) = v {
                if v.len() != d {
                    return bad(format!(
                        "{name} has {} entries, the model has {d} parameters",
                        v.len()
                    ));
                }
            }
        }
        if self.lambda.epsilon.len() != d {
            return bad(format!(
                "lambda.epsilon has {} entries, the model has {d} parameters",
                self.lambda.epsilon.len()
            ));
        }
        if self.sampler.kinds.contains(&SamplerKind::McmcAis) && self.sweep.k.contains(&0) {
            return bad("MCMC-AIS needs K >= 1".into());
        }
        if self.sampler.kinds.contains(&SamplerKind::MarginalMh)
            && self.model.kind == ModelKind::Nonlinear
        {
            return bad("marginal MH needs the exact likelihood of the iid model".into());
        }
        if self.data.source == DataSource::File {
            match &self.data.path {
                Some(p) if p.exists() => {}
                Some(p) => return bad(format!("data file {} does not exist", p.display())),
                None => return bad("data.source = \"file\" needs data.path".into()),
            }
        }
        crate::models::AnyModel::build(self, self.model.a).map(|_| ())?;
        for &a in &self.a_grid() {
            crate::models::AnyModel::build(self, a)?;
        }
        Ok(())
    }
}
