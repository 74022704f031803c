//! Chain initialization, iteration and traces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, LatentPath, StateSpaceModel};
use crate::rng::substream;
use crate::smc::{smc_run_with, SmcWorkspace};

use super::kernels::{step, ChainRng, ChainState, SamplerConfig, SamplerKind, SamplerWorkspace};
use super::proposal::RwProposal;

/// Which latent paths a trace keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LatentTrace {
    #[default]
    None,
    /// Every `k`-th iteration.
    Thin(usize),
    Full,
}

impl LatentTrace {
    fn keeps(self, iteration: usize) -> bool {
        match self {
            LatentTrace::None => false,
            LatentTrace::Full => true,
            LatentTrace::Thin(k) => k > 0 && (iteration + 1).is_multiple_of(k),
        }
    }
}

/// A realized chain. Parameter rows hold the state after each iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub kind: SamplerKind,
    pub param_dim: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub fingerprint: String,
    /// Row-major, `len() * param_dim`.
    pub theta: Vec<f64>,
    /// Proposed parameters, row-major.
    pub proposed: Vec<f64>,
    /// Standard normal proposal draws, row-major.
    pub noise: Vec<f64>,
    pub accepted: Vec<bool>,
    pub log_r: Vec<f64>,
    /// Iterations at which the particle filter at the proposal degenerated.
    pub degenerate_iterations: Vec<usize>,
    /// `(iteration, path)` snapshots.
    pub latents: Vec<(usize, LatentPath)>,
}

impl ChainTrace {
    fn new(
        kind: SamplerKind,
        param_dim: usize,
        burn_in: usize,
        seed: u64,
        fingerprint: String,
        cap: usize,
    ) -> Self {
        Self {
            kind,
            param_dim,
            burn_in,
            seed,
            fingerprint,
            theta: Vec::with_capacity(cap * param_dim),
            proposed: Vec::with_capacity(cap * param_dim),
            noise: Vec::with_capacity(cap * param_dim),
            accepted: Vec::with_capacity(cap),
            log_r: Vec::with_capacity(cap),
            degenerate_iterations: Vec::new(),
            latents: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn theta_at(&self, i: usize) -> &[f64] {
        &self.theta[i * self.param_dim..(i + 1) * self.param_dim]
    }

    pub fn proposed_at(&self, i: usize) -> &[f64] {
        &self.proposed[i * self.param_dim..(i + 1) * self.param_dim]
    }

    /// Values of coordinate `j` over all iterations.
    pub fn param_series(&self, j: usize) -> Vec<f64> {
        self.theta
            .iter()
            .skip(j)
            .step_by(self.param_dim)
            .copied()
            .collect()
    }

    /// Values of coordinate `j` after burn-in.
    pub fn post_burn_in(&self, j: usize) -> Vec<f64> {
        self.param_series(j).split_off(self.burn_in.min(self.len()))
    }

    /// Post-burn-in parameter rows.
    pub fn post_burn_in_rows(&self) -> Vec<Vec<f64>> {
        (self.burn_in.min(self.len())..self.len())
            .map(|i| self.theta_at(i).to_vec())
            .collect()
    }

    /// Acceptance rate after burn-in.
    pub fn acceptance_rate(&self) -> f64 {
        let kept = &self.accepted[self.burn_in.min(self.len())..];
        if kept.is_empty() {
            return 0.0;
        }
        kept.iter().filter(|&&a| a).count() as f64 / kept.len() as f64
    }
}

/// Box inside which initial parameters drawn from the prior must fall.
const INIT_LOWER: f64 = 1e-3;
const INIT_UPPER: f64 = 1e3;
const INIT_ATTEMPTS: usize = 10_000;

/// Draws `theta_0` from the prior, redrawing until each positive coordinate
/// lies in `[1e-3, 1e3]` and each other coordinate in `[-1e3, 1e3]`.
pub fn sample_initial_theta<M, R>(model: &M, rng: &mut R) -> Result<Vec<f64>>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    let bounds = model.param_domain().bounds().to_vec();
    for _ in 0..INIT_ATTEMPTS {
        let th = model.sample_prior(rng);
        let ok = th.iter().zip(&bounds).all(|(&v, b)| {
            let lo = if b.lower >= 0.0 {
                INIT_LOWER
            } else {
                -INIT_UPPER
            };
            v >= lo && v <= INIT_UPPER && b.contains(v)
        });
        if ok {
            return Ok(th);
        }
    }
    Err(Error::Domain(format!(
        "no prior draw inside the initialization box after {INIT_ATTEMPTS} attempts"
    )))
}

/// Initial state for `config`: `theta_0` as given or drawn from the prior,
/// then the latent path or likelihood cache from one particle filter run.
pub fn initialize<M, R>(
    config: &SamplerConfig,
    model: &M,
    data: &Dataset,
    theta0: Option<&[f64]>,
    rng: &mut R,
) -> Result<ChainState>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    let theta = match theta0 {
        Some(t) => {
            model.param_domain().check(t)?;
            t.to_vec()
        }
        None => sample_initial_theta(model, rng)?,
    };
    let n = config.init_particles();
    let mut ws = SmcWorkspace::new();
    let state = ChainState::new(theta.clone());
    Ok(match config {
        SamplerConfig::MarginalMh => state,
        SamplerConfig::Pmmh(c) => {
            let est = smc_run_with(&mut ws, model, &theta, data, &c.proposal, n, rng)?;
            state.with_loglike(est.value)
        }
        SamplerConfig::McmcAis(_) | SamplerConfig::Mwpg(_) => {
            smc_run_with(&mut ws, model, &theta, data, &Default::default(), n, rng)?;
            let x = ws.system().sample_path(rng)?;
            state.with_latent(x)
        }
    })
}

/// Everything that defines a chain run besides the model and data.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub config: SamplerConfig,
    pub proposal: RwProposal,
    pub iterations: usize,
    pub burn_in: usize,
    pub latent_trace: LatentTrace,
}

/// Default burn-in: 10% of the iterations.
pub fn default_burn_in(iterations: usize) -> usize {
    iterations / 10
}

/// Runs `spec.iterations` steps from `init`. The proposal and kernel streams
/// are derived from `seed`; the same seed and spec give a bit-identical trace.
pub fn run_chain<M: StateSpaceModel + ?Sized>(
    spec: &ChainSpec,
    model: &M,
    data: &Dataset,
    init: ChainState,
    seed: u64,
) -> Result<ChainTrace> {
    if spec.iterations == 0 || spec.burn_in >= spec.iterations {
        return Err(Error::InvalidInput(format!(
            "need iterations > burn_in >= 0, got {} and {}",
            spec.iterations, spec.burn_in
        )));
    }
    let d = model.param_dim();
    if spec.proposal.dim() != d || init.theta.len() != d {
        return Err(Error::InvalidInput(format!(
            "proposal has dimension {}, initial theta {}, model {d}",
            spec.proposal.dim(),
            init.theta.len()
        )));
    }
    let mut rng = ChainRng::from_seed(seed);
    let mut ws = SamplerWorkspace::new();
    let mut trace = ChainTrace::new(
        spec.config.kind(),
        d,
        spec.burn_in,
        seed,
        spec.config.fingerprint(),
        spec.iterations,
    );
    let mut state = init;
    for i in 0..spec.iterations {
        let (mut next, out) = step(
            &mut ws,
            &spec.config,
            &state,
            model,
            data,
            &spec.proposal,
            &mut rng,
        )
        .map_err(|e| Error::AtIteration {
            iteration: i,
            source: Box::new(e),
        })?;
        next.iteration = state.iteration + 1;
        trace.theta.extend_from_slice(&next.theta);
        trace.proposed.extend_from_slice(&out.proposed.theta);
        trace.noise.extend_from_slice(&out.proposed.noise);
        trace.accepted.push(out.accepted);
        trace.log_r.push(out.log_r);
        if out.degenerate {
            trace.degenerate_iterations.push(i);
        }
        if spec.latent_trace.keeps(i) {
            if let Some(x) = &next.latent {
                trace.latents.push((i, x.clone()));
            }
        }
        state = next;
    }
    Ok(trace)
}

/// Initializes from a stream derived from `seed` and runs the chain.
pub fn run_chain_from_prior<M: StateSpaceModel + ?Sized>(
    spec: &ChainSpec,
    model: &M,
    data: &Dataset,
    theta0: Option<&[f64]>,
    seed: u64,
) -> Result<ChainTrace> {
    let init = initialize(
        &spec.config,
        model,
        data,
        theta0,
        &mut substream(seed, &[2]),
    )?;
    run_chain(spec, model, data, init, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::models::{IidGaussianModel, NonlinearBenchmarkModel};
    use crate::rng::stream;
    use crate::samplers::kernels::{BridgeConfig, MwpgConfig, SmcConfig};

    fn setup() -> (IidGaussianModel, Dataset) {
        let m = IidGaussianModel::new(1.0, 1.0, 1.0, 0.0, 1e5).unwrap();
        let d = simulate(&m, &[0.5], 30, &mut stream(1)).unwrap();
        (m, d)
    }

    fn spec(config: SamplerConfig, iterations: usize) -> ChainSpec {
        ChainSpec {
            config,
            proposal: RwProposal::new(vec![0.3]).unwrap(),
            iterations,
            burn_in: 0,
            latent_trace: LatentTrace::None,
        }
    }

    #[test]
    fn single_iteration_trace() {
        let (m, d) = setup();
        let t = run_chain_from_prior(&spec(SamplerConfig::MarginalMh, 1), &m, &d, Some(&[0.0]), 3)
            .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.theta.len(), 1);
    }

    #[test]
    fn burn_in_must_be_below_iterations() {
        let (m, d) = setup();
        let mut s = spec(SamplerConfig::MarginalMh, 5);
        s.burn_in = 5;
        assert!(run_chain_from_prior(&s, &m, &d, Some(&[0.0]), 3).is_err());
    }

    #[test]
    fn same_seed_same_trace() {
        let (m, d) = setup();
        for cfg in [
            SamplerConfig::MarginalMh,
            SamplerConfig::Pmmh(SmcConfig::new(10)),
            SamplerConfig::McmcAis(BridgeConfig::new(1, 10, true)),
            SamplerConfig::Mwpg(MwpgConfig::new(10)),
        ] {
            let mut s = spec(cfg, 40);
            s.latent_trace = LatentTrace::Thin(10);
            let a = run_chain_from_prior(&s, &m, &d, None, 42).unwrap();
            let b = run_chain_from_prior(&s, &m, &d, None, 42).unwrap();
            assert_eq!(a, b);
            assert!(a
                .log_r
                .iter()
                .all(|v| v.is_finite() || *v == f64::NEG_INFINITY));
            let c = run_chain_from_prior(&s, &m, &d, None, 43).unwrap();
            assert_ne!(a.theta, c.theta);
        }
    }

    #[test]
    fn thinned_latents() {
        let (m, d) = setup();
        let mut s = spec(SamplerConfig::Mwpg(MwpgConfig::new(5)), 20);
        s.latent_trace = LatentTrace::Thin(5);
        let t = run_chain_from_prior(&s, &m, &d, Some(&[0.0]), 1).unwrap();
        assert_eq!(
            t.latents.iter().map(|(i, _)| *i).collect::<Vec<_>>(),
            vec![4, 9, 14, 19]
        );
    }

    #[test]
    fn pmmh_cache_changes_only_on_accept() {
        let (m, d) = setup();
        let cfg = SamplerConfig::Pmmh(SmcConfig::new(10));
        let mut state = initialize(&cfg, &m, &d, Some(&[0.0]), &mut stream(0)).unwrap();
        let p = RwProposal::new(vec![0.3]).unwrap();
        let mut rng = ChainRng::from_seed(5);
        let mut ws = SamplerWorkspace::new();
        let mut accepts = 0;
        for _ in 0..200 {
            let (next, out) = step(&mut ws, &cfg, &state, &m, &d, &p, &mut rng).unwrap();
            if out.accepted {
                accepts += 1;
            } else {
                assert_eq!(next.cached_loglike, state.cached_loglike);
            }
            state = next;
        }
        assert!(accepts > 0);
    }

    #[test]
    fn nonlinear_initial_theta_inside_box() {
        let m = NonlinearBenchmarkModel::default();
        let mut rng = stream(4);
        for _ in 0..50 {
            let th = sample_initial_theta(&m, &mut rng).unwrap();
            assert!(th.iter().all(|&v| (1e-3..=1e3).contains(&v)));
        }
    }

    #[test]
    fn errors_carry_iteration() {
        let m = NonlinearBenchmarkModel::default();
        let d = simulate(&m, &[1.0, 1.0], 5, &mut stream(1)).unwrap();
        let s = ChainSpec {
            config: SamplerConfig::MarginalMh,
            proposal: RwProposal::new(vec![0.1, 0.1]).unwrap(),
            iterations: 3,
            burn_in: 0,
            latent_trace: LatentTrace::None,
        };
        let e = run_chain(&s, &m, &d, ChainState::new(vec![1.0, 1.0]), 0).unwrap_err();
        assert!(matches!(e, Error::AtIteration { iteration: 0, .. }));
    }
}
