//! Sequential Monte Carlo and conditional SMC.
//!
//! Both routines resample multinomially at every step and keep all weights
//! in log space. Random draws are consumed in particle-index order: for each
//! particle, first the ancestor uniform, then the proposal draw. The seed to
//! output map is therefore fixed.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::model::{Dataset, LatentPath, StateSpaceModel};
use crate::numeric::{log_mean_exp, CategoricalTable};

/// User-supplied instrumental distributions `m_theta` (time 1) and
/// `M_theta(x_{t-1}, .)` (time `t >= 2`).
pub trait Instrumental: Send + Sync + fmt::Debug {
    fn sample_initial(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]);

    fn initial_logdensity(&self, theta: &[f64], x: &[f64]) -> f64;

    fn sample_transition(
        &self,
        theta: &[f64],
        t: usize,
        prev: &[f64],
        rng: &mut dyn RngCore,
        out: &mut [f64],
    );

    fn transition_logdensity(&self, theta: &[f64], t: usize, prev: &[f64], x: &[f64]) -> f64;
}

/// Which proposal the particle routines use.
#[derive(Debug, Clone, Default)]
pub enum ProposalSpec {
    /// Bootstrap proposal `m = mu_theta`, `M = f_theta`; the weight reduces to
    /// the observation density.
    #[default]
    Prior,
    Custom(Arc<dyn Instrumental>),
}

impl ProposalSpec {
    pub fn is_prior(&self) -> bool {
        matches!(self, ProposalSpec::Prior)
    }
}

/// Adapts a possibly unsized `Rng` to `&mut dyn RngCore`.
struct DynRng<'a, R: ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Output of a forward particle pass: states, ancestors and log-weights.
///
/// Ancestor indices are 0-based: `ancestor(s, i)` is the index at position
/// `s` of the parent of particle `i` at position `s + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleSystem {
    n: usize,
    t_len: usize,
    dim: usize,
    z: Vec<f64>,
    ancestors: Vec<usize>,
    logw: Vec<f64>,
}

impl ParticleSystem {
    fn reset(&mut self, n: usize, t_len: usize, dim: usize) {
        self.n = n;
        self.t_len = t_len;
        self.dim = dim;
        self.z.resize(n * t_len * dim, 0.0);
        self.ancestors.resize(n * t_len.saturating_sub(1), 0);
        self.logw.resize(n * t_len, 0.0);
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.t_len
    }

    pub fn is_empty(&self) -> bool {
        self.t_len == 0
    }

    #[inline]
    pub fn particle(&self, s: usize, i: usize) -> &[f64] {
        let o = (s * self.n + i) * self.dim;
        &self.z[o..o + self.dim]
    }

    #[inline]
    pub fn log_weights(&self, s: usize) -> &[f64] {
        &self.logw[s * self.n..(s + 1) * self.n]
    }

    #[inline]
    pub fn ancestor(&self, s: usize, i: usize) -> usize {
        self.ancestors[s * self.n + i]
    }

    /// Ancestors at position `s` of the particles at `s + 1`.
    pub fn ancestors(&self, s: usize) -> &[usize] {
        &self.ancestors[s * self.n..(s + 1) * self.n]
    }

    /// Follows ancestors back from particle `last` at time `T`.
    pub fn trace(&self, last: usize) -> LatentPath {
        let mut path = LatentPath::zeros(self.dim, self.t_len);
        let mut k = last;
        for s in (0..self.t_len).rev() {
            path.state_mut(s).copy_from_slice(self.particle(s, k));
            if s > 0 {
                k = self.ancestor(s - 1, k);
            }
        }
        path
    }

    /// Draws `k_T` from the final weights and returns its ancestral path.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LatentPath> {
        let mut table = CategoricalTable::new();
        if !table.rebuild(self.log_weights(self.t_len - 1)) {
            return Err(Error::Degenerate { t: self.t_len });
        }
        Ok(self.trace(table.draw(rng)))
    }
}

/// `log` of the unbiased likelihood estimate `prod_t (1/N) sum_i w_t^(i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikeEstimate {
    pub value: f64,
    pub n_particles: usize,
    pub t_len: usize,
    /// Set when some step had only zero weights; `value` is then `-inf`.
    pub degenerate: bool,
}

pub fn log_likelihood_estimate(ps: &ParticleSystem) -> LogLikeEstimate {
    let mut value = 0.0;
    let mut degenerate = false;
    for s in 0..ps.len() {
        let l = log_mean_exp(ps.log_weights(s));
        if l == f64::NEG_INFINITY {
            degenerate = true;
        }
        value += l;
    }
    if degenerate {
        value = f64::NEG_INFINITY;
    }
    LogLikeEstimate {
        value,
        n_particles: ps.n_particles(),
        t_len: ps.len(),
        degenerate,
    }
}

/// Reusable buffers for repeated particle runs of the same size.
#[derive(Debug, Default, Clone)]
pub struct SmcWorkspace {
    ps: ParticleSystem,
    table: CategoricalTable,
    scratch: Vec<f64>,
    selected: Vec<usize>,
}

impl SmcWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Particle system left by the last run.
    pub fn system(&self) -> &ParticleSystem {
        &self.ps
    }

    /// Indices `k_1..k_T` selected by the last conditional run.
    pub fn selected_indices(&self) -> &[usize] {
        &self.selected
    }
}

#[inline]
fn sanitize(lw: f64) -> f64 {
    if lw.is_nan() {
        f64::NEG_INFINITY
    } else {
        lw
    }
}

fn validate<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &Dataset,
    n: usize,
) -> Result<()> {
    model.param_domain().check(theta)?;
    if n == 0 {
        return Err(Error::InvalidInput(
            "at least one particle is required".into(),
        ));
    }
    if data.obs_dim() != model.obs_dim() {
        return Err(Error::InvalidInput(format!(
            "data has observation dimension {}, model expects {}",
            data.obs_dim(),
            model.obs_dim()
        )));
    }
    Ok(())
}

/// Forward pass shared by SMC and conditional SMC. With `pinned`, particle 0
/// is set to the reference path at every time and has ancestor 0.
#[allow(clippy::too_many_arguments)]
fn forward<M, R>(
    ws: &mut SmcWorkspace,
    model: &M,
    theta: &[f64],
    data: &Dataset,
    proposal: &ProposalSpec,
    n: usize,
    pinned: Option<&LatentPath>,
    preselect: bool,
    rng: &mut R,
) -> Result<()>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    let t_len = data.len();
    let dim = model.state_dim();
    ws.ps.reset(n, t_len, dim);
    let SmcWorkspace {
        ps,
        table,
        selected,
        ..
    } = ws;
    selected.clear();
    let first = usize::from(pinned.is_some());

    {
        let row = &mut ps.z[..n * dim];
        let y = data.obs(0);
        for i in 0..n {
            let x = &mut row[i * dim..(i + 1) * dim];
            match pinned {
                Some(r) if i == 0 => x.copy_from_slice(r.state(0)),
                _ => match proposal {
                    ProposalSpec::Prior => model.sample_init(theta, rng, x),
                    ProposalSpec::Custom(p) => p.sample_initial(theta, &mut DynRng(rng), x),
                },
            }
            let lw = match proposal {
                ProposalSpec::Prior => model.obs_logdensity(theta, 1, x, y),
                ProposalSpec::Custom(p) => {
                    model.init_logdensity(theta, x) + model.obs_logdensity(theta, 1, x, y)
                        - p.initial_logdensity(theta, x)
                }
            };
            ps.logw[i] = sanitize(lw);
        }
        if !table.rebuild(&ps.logw[..n]) {
            return Err(Error::Degenerate { t: 1 });
        }
        if preselect {
            selected.push(table.draw(rng));
        }
    }

    for s in 1..t_len {
        let t = s + 1;
        let y = data.obs(s);
        let (done, rest) = ps.z.split_at_mut(s * n * dim);
        let prev_row = &done[(s - 1) * n * dim..];
        let row = &mut rest[..n * dim];
        let anc = &mut ps.ancestors[(s - 1) * n..s * n];
        let logw = &mut ps.logw[s * n..(s + 1) * n];
        // `table` holds the weights at s - 1
        for i in 0..n {
            let a = if i < first { 0 } else { table.draw(rng) };
            anc[i] = a;
            let prev = &prev_row[a * dim..(a + 1) * dim];
            let x = &mut row[i * dim..(i + 1) * dim];
            match pinned {
                Some(r) if i == 0 => x.copy_from_slice(r.state(s)),
                _ => match proposal {
                    ProposalSpec::Prior => model.sample_trans(theta, t, prev, rng, x),
                    ProposalSpec::Custom(p) => {
                        p.sample_transition(theta, t, prev, &mut DynRng(rng), x)
                    }
                },
            }
            let lw = match proposal {
                ProposalSpec::Prior => model.obs_logdensity(theta, t, x, y),
                ProposalSpec::Custom(p) => {
                    model.trans_logdensity(theta, t, prev, x) + model.obs_logdensity(theta, t, x, y)
                        - p.transition_logdensity(theta, t, prev, x)
                }
            };
            logw[i] = sanitize(lw);
        }
        if !table.rebuild(logw) {
            return Err(Error::Degenerate { t });
        }
        if preselect {
            selected.push(table.draw(rng));
        }
    }
    Ok(())
}

/// Runs the particle filter at `theta` with `n` particles.
pub fn smc_run<M, R>(
    model: &M,
    theta: &[f64],
    data: &Dataset,
    proposal: &ProposalSpec,
    n: usize,
    rng: &mut R,
) -> Result<ParticleSystem>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut ws = SmcWorkspace::new();
    smc_run_with(&mut ws, model, theta, data, proposal, n, rng)?;
    Ok(ws.ps)
}

/// [`smc_run`] into a reusable workspace; the result is `ws.system()`.
pub fn smc_run_with<M, R>(
    ws: &mut SmcWorkspace,
    model: &M,
    theta: &[f64],
    data: &Dataset,
    proposal: &ProposalSpec,
    n: usize,
    rng: &mut R,
) -> Result<LogLikeEstimate>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    validate(model, theta, data, n)?;
    forward(ws, model, theta, data, proposal, n, None, false, rng)?;
    Ok(log_likelihood_estimate(&ws.ps))
}

/// One application of the conditional SMC kernel targeting
/// `p_theta(x_{1:T} | y_{1:T})`, started from `ref_path`.
///
/// With `backward_sampling` the output path is drawn backward in time with
/// weights `w_t^(i) f_theta(z_t^(i), z_{t+1}^(k_{t+1}))`; otherwise it is the
/// ancestral line of a particle drawn from the final weights.
#[allow(clippy::too_many_arguments)]
pub fn csmc_run<M, R>(
    backward_sampling: bool,
    model: &M,
    theta: &[f64],
    data: &Dataset,
    proposal: &ProposalSpec,
    n: usize,
    ref_path: &LatentPath,
    rng: &mut R,
) -> Result<LatentPath>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut ws = SmcWorkspace::new();
    csmc_run_with(
        &mut ws,
        backward_sampling,
        model,
        theta,
        data,
        proposal,
        n,
        ref_path,
        rng,
    )
}

/// [`csmc_run`] reusing `ws`; afterwards `ws.system()` and
/// `ws.selected_indices()` describe the run.
#[allow(clippy::too_many_arguments)]
pub fn csmc_run_with<M, R>(
    ws: &mut SmcWorkspace,
    backward_sampling: bool,
    model: &M,
    theta: &[f64],
    data: &Dataset,
    proposal: &ProposalSpec,
    n: usize,
    ref_path: &LatentPath,
    rng: &mut R,
) -> Result<LatentPath>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    validate(model, theta, data, n)?;
    if backward_sampling && !model.has_trans_density() {
        return Err(Error::Unsupported(
            "backward sampling needs a pointwise transition density".into(),
        ));
    }
    if ref_path.len() != data.len() || ref_path.state_dim() != model.state_dim() {
        return Err(Error::InvalidInput(format!(
            "reference path has {} states of dimension {}, expected {} of dimension {}",
            ref_path.len(),
            ref_path.state_dim(),
            data.len(),
            model.state_dim()
        )));
    }
    // Without dependence on the previous state, each backward draw uses the
    // filtering weights alone and is taken during the forward pass.
    let preselect = backward_sampling && !model.trans_depends_on_prev();
    forward(
        ws,
        model,
        theta,
        data,
        proposal,
        n,
        Some(ref_path),
        preselect,
        rng,
    )?;

    let t_len = data.len();
    let SmcWorkspace {
        ps,
        table,
        scratch,
        selected,
    } = ws;
    if !preselect {
        selected.resize(t_len, 0);
        // `table` still holds the final weights
        let mut k = table.draw(rng);
        selected[t_len - 1] = k;
        for s in (0..t_len - 1).rev() {
            if backward_sampling {
                let next = ps.particle(s + 1, k);
                scratch.clear();
                scratch.extend((0..n).map(|i| {
                    sanitize(
                        ps.logw[s * n + i]
                            + model.trans_logdensity(theta, s + 2, ps.particle(s, i), next),
                    )
                }));
                if !table.rebuild(scratch) {
                    return Err(Error::Degenerate { t: s + 1 });
                }
                k = table.draw(rng);
            } else {
                k = ps.ancestor(s, k);
            }
            selected[s] = k;
        }
    }

    let mut out = LatentPath::zeros(model.state_dim(), t_len);
    for (s, &k) in selected.iter().enumerate() {
        out.state_mut(s).copy_from_slice(ps.particle(s, k));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::models::{IidGaussianModel, NonlinearBenchmarkModel};
    use crate::numeric::normal_logpdf;
    use crate::rng::stream;
    use rand_distr::StandardNormal;

    fn iid() -> IidGaussianModel {
        IidGaussianModel::new(1.0, 1.0, 0.01, 0.0, 1e5).unwrap()
    }

    #[derive(Debug)]
    struct WideGaussian {
        sd: f64,
    }

    impl Instrumental for WideGaussian {
        fn sample_initial(&self, _theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
            let z: f64 = rng.sample(StandardNormal);
            out[0] = self.sd * z;
        }
        fn initial_logdensity(&self, _theta: &[f64], x: &[f64]) -> f64 {
            normal_logpdf(x[0], 0.0, self.sd * self.sd)
        }
        fn sample_transition(
            &self,
            theta: &[f64],
            _t: usize,
            _p: &[f64],
            rng: &mut dyn RngCore,
            out: &mut [f64],
        ) {
            self.sample_initial(theta, rng, out)
        }
        fn transition_logdensity(&self, theta: &[f64], _t: usize, _p: &[f64], x: &[f64]) -> f64 {
            self.initial_logdensity(theta, x)
        }
    }

    #[test]
    fn single_particle_has_trivial_ancestry() {
        let m = iid();
        let data = simulate(&m, &[0.5], 6, &mut stream(1)).unwrap();
        let ps = smc_run(&m, &[0.5], &data, &ProposalSpec::Prior, 1, &mut stream(2)).unwrap();
        for s in 0..5 {
            assert_eq!(ps.ancestors(s), &[0]);
        }
        let est = log_likelihood_estimate(&ps);
        let direct: f64 = (0..6).map(|s| ps.log_weights(s)[0]).sum();
        assert_eq!(est.value, direct);
    }

    #[test]
    fn bootstrap_weights_are_observation_densities() {
        let m = iid();
        let th = 0.3;
        let data = simulate(&m, &[th], 4, &mut stream(3)).unwrap();
        let ps = smc_run(&m, &[th], &data, &ProposalSpec::Prior, 7, &mut stream(4)).unwrap();
        for s in 0..4 {
            for i in 0..7 {
                let z = ps.particle(s, i)[0];
                let direct = normal_logpdf(data.obs(s)[0], th + z, 0.01);
                assert!((ps.log_weights(s)[i] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn custom_proposal_weights_follow_importance_ratio() {
        let m = iid();
        let th = -0.2;
        let prop = ProposalSpec::Custom(Arc::new(WideGaussian { sd: 2.0 }));
        let data = simulate(&m, &[th], 3, &mut stream(5)).unwrap();
        let ps = smc_run(&m, &[th], &data, &prop, 5, &mut stream(6)).unwrap();
        for s in 0..3 {
            for i in 0..5 {
                let z = ps.particle(s, i)[0];
                let direct = normal_logpdf(z, 0.0, 1.0)
                    + normal_logpdf(data.obs(s)[0], th + z, 0.01)
                    - normal_logpdf(z, 0.0, 4.0);
                assert!((ps.log_weights(s)[i] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let m = iid();
        let data = simulate(&m, &[0.0], 3, &mut stream(7)).unwrap();
        let a = smc_run(&m, &[0.0], &data, &ProposalSpec::Prior, 4, &mut stream(8)).unwrap();
        let b = smc_run(&m, &[0.0], &data, &ProposalSpec::Prior, 4, &mut stream(8)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ancestors, b.ancestors);
    }

    #[test]
    fn uniform_weights_give_zero_estimate() {
        let ps = ParticleSystem {
            n: 3,
            t_len: 2,
            dim: 1,
            z: vec![0.0; 6],
            ancestors: vec![0, 1, 2],
            logw: vec![0.0; 6],
        };
        let e = log_likelihood_estimate(&ps);
        assert_eq!(e.value, 0.0);
        assert!(!e.degenerate);
    }

    #[test]
    fn degenerate_step_is_reported() {
        let ps = ParticleSystem {
            n: 2,
            t_len: 2,
            dim: 1,
            z: vec![0.0; 4],
            ancestors: vec![0, 1],
            logw: vec![0.0, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
        };
        let e = log_likelihood_estimate(&ps);
        assert!(e.degenerate);
        assert_eq!(e.value, f64::NEG_INFINITY);
    }

    #[test]
    fn vanishing_weights_raise_degenerate_error() {
        // observation far outside anything the prior can reach
        let m = IidGaussianModel::new(1.0, 1e-4, 1e-6, 0.0, 1.0).unwrap();
        let data = Dataset::from_scalars(vec![0.0, 1e200]).unwrap();
        let err = smc_run(&m, &[0.0], &data, &ProposalSpec::Prior, 3, &mut stream(0)).unwrap_err();
        assert_eq!(err, Error::Degenerate { t: 2 });
    }

    #[test]
    fn csmc_with_one_particle_returns_reference() {
        let m = NonlinearBenchmarkModel::default();
        let th = [10.0, 1.0];
        let data = simulate(&m, &th, 8, &mut stream(9)).unwrap();
        let r = data.x_true.clone().unwrap();
        for bs in [false, true] {
            let out = csmc_run(
                bs,
                &m,
                &th,
                &data,
                &ProposalSpec::Prior,
                1,
                &r,
                &mut stream(10),
            )
            .unwrap();
            assert_eq!(out, r);
        }
    }

    #[test]
    fn csmc_pins_reference_and_traces_ancestry() {
        let m = NonlinearBenchmarkModel::default();
        let th = [10.0, 1.0];
        let data = simulate(&m, &th, 12, &mut stream(11)).unwrap();
        let r = data.x_true.clone().unwrap();
        for bs in [false, true] {
            let mut ws = SmcWorkspace::new();
            let out = csmc_run_with(
                &mut ws,
                bs,
                &m,
                &th,
                &data,
                &ProposalSpec::Prior,
                6,
                &r,
                &mut stream(12),
            )
            .unwrap();
            let ps = ws.system();
            for s in 0..12 {
                assert_eq!(ps.particle(s, 0), r.state(s));
                if s > 0 {
                    assert_eq!(ps.ancestor(s - 1, 0), 0);
                }
                assert_eq!(out.state(s), ps.particle(s, ws.selected_indices()[s]));
            }
            if !bs {
                let k_last = ws.selected_indices()[11];
                assert_eq!(ps.trace(k_last), out);
            }
        }
    }

    #[test]
    fn csmc_rejects_mismatched_reference() {
        let m = iid();
        let data = Dataset::from_scalars(vec![0.0; 4]).unwrap();
        let r = LatentPath::from_scalars(vec![0.0; 3]).unwrap();
        let e = csmc_run(
            true,
            &m,
            &[0.0],
            &data,
            &ProposalSpec::Prior,
            4,
            &r,
            &mut stream(0),
        );
        assert!(matches!(e, Err(Error::InvalidInput(_))));
    }

    #[derive(Debug)]
    struct NoTransitionDensity(IidGaussianModel);

    impl StateSpaceModel for NoTransitionDensity {
        fn param_dim(&self) -> usize {
            1
        }
        fn param_domain(&self) -> &crate::model::ParamDomain {
            self.0.param_domain()
        }
        fn prior_logdensity(&self, th: &[f64]) -> f64 {
            self.0.prior_logdensity(th)
        }
        fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
            self.0.sample_prior(rng)
        }
        fn init_logdensity(&self, th: &[f64], x: &[f64]) -> f64 {
            self.0.init_logdensity(th, x)
        }
        fn trans_logdensity(&self, _: &[f64], _: usize, _: &[f64], _: &[f64]) -> f64 {
            f64::NAN
        }
        fn obs_logdensity(&self, th: &[f64], t: usize, x: &[f64], y: &[f64]) -> f64 {
            self.0.obs_logdensity(th, t, x, y)
        }
        fn sample_init<R: Rng + ?Sized>(&self, th: &[f64], rng: &mut R, out: &mut [f64]) {
            self.0.sample_init(th, rng, out)
        }
        fn sample_trans<R: Rng + ?Sized>(
            &self,
            th: &[f64],
            t: usize,
            p: &[f64],
            rng: &mut R,
            out: &mut [f64],
        ) {
            self.0.sample_trans(th, t, p, rng, out)
        }
        fn sample_obs<R: Rng + ?Sized>(
            &self,
            th: &[f64],
            t: usize,
            x: &[f64],
            rng: &mut R,
            out: &mut [f64],
        ) {
            self.0.sample_obs(th, t, x, rng, out)
        }
        fn has_trans_density(&self) -> bool {
            false
        }
    }

    #[test]
    fn backward_sampling_requires_transition_density() {
        let m = NoTransitionDensity(iid());
        let data = Dataset::from_scalars(vec![0.0; 4]).unwrap();
        let r = LatentPath::from_scalars(vec![0.0; 4]).unwrap();
        let e = csmc_run(
            true,
            &m,
            &[0.0],
            &data,
            &ProposalSpec::Prior,
            4,
            &r,
            &mut stream(0),
        );
        assert!(matches!(e, Err(Error::Unsupported(_))));
        assert!(csmc_run(
            false,
            &m,
            &[0.0],
            &data,
            &ProposalSpec::Prior,
            4,
            &r,
            &mut stream(0)
        )
        .is_ok());
    }
}
