//! Simultaneous-perturbation gradient estimates of the log-likelihood.

use rand::Rng;

use crate::ais::{ais_csmc_run_with, initial_path, AisWorkspace, CsmcKernel, PathInit};
use crate::error::{Error, Result};
use crate::model::{Dataset, StateSpaceModel};

use super::kernels::BridgeConfig;

/// Where the log-likelihood ratio comes from.
#[derive(Debug, Clone)]
pub enum RatioSource {
    /// AIS estimate started from a path produced by `init` at `theta - delta`
    /// with `init_kernel`.
    Ais {
        bridge: BridgeConfig,
        init: PathInit,
        init_kernel: CsmcKernel,
    },
    /// Closed-form likelihoods.
    Exact,
}

/// Per-coordinate gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub mean: Vec<f64>,
    /// Standard error of each mean over replicates; zero in exact mode.
    pub std_error: Vec<f64>,
    pub replicates: usize,
}

/// Component `i` is `log L^(theta - delta, theta + delta) / (2 delta_i)`,
/// averaged over `replicates` independent ratio estimates.
pub fn spsa_gradient_estimate<M, R>(
    model: &M,
    data: &Dataset,
    theta: &[f64],
    delta: &[f64],
    source: &RatioSource,
    replicates: usize,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    M: StateSpaceModel + ?Sized,
    R: Rng + ?Sized,
{
    if delta.len() != theta.len() || delta.iter().any(|&d| d == 0.0 || !d.is_finite()) {
        return Err(Error::InvalidInput(
            "perturbation must be nonzero in every coordinate".into(),
        ));
    }
    if replicates == 0 {
        return Err(Error::InvalidInput(
            "at least one replicate is required".into(),
        ));
    }
    let lo: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t - d).collect();
    let hi: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t + d).collect();
    let domain = model.param_domain();
    domain.check(&lo)?;
    domain.check(&hi)?;

    let ratios: Vec<f64> = match source {
        RatioSource::Exact => {
            let ll = |th: &[f64]| {
                model
                    .exact_log_likelihood(th, data)
                    .ok_or_else(|| Error::Unsupported("model has no exact likelihood".into()))
            };
            vec![ll(&hi)? - ll(&lo)?]
        }
        RatioSource::Ais {
            bridge,
            init,
            init_kernel,
        } => {
            let path = bridge.path(&lo, &hi)?;
            let mut ws = AisWorkspace::new();
            (0..replicates)
                .map(|_| {
                    let x0 = initial_path(model, &lo, data, *init, init_kernel, rng)?;
                    Ok(
                        ais_csmc_run_with(&mut ws, &x0, &path, model, data, &bridge.kernels, rng)?
                            .log_value,
                    )
                })
                .collect::<Result<_>>()?
        }
    };
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let se = if ratios.len() > 1 {
        (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(GradientEstimate {
        mean: delta.iter().map(|d| mean / (2.0 * d)).collect(),
        std_error: delta.iter().map(|d| se / (2.0 * d.abs())).collect(),
        replicates: ratios.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::models::IidGaussianModel;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    #[test]
    fn exact_mode_is_central_difference() {
        let m = IidGaussianModel::new(1.0, 1.0, 0.5, 0.0, 1e5).unwrap();
        let d = simulate(&m, &[0.2], 50, &mut stream(0)).unwrap();
        let g = spsa_gradient_estimate(
            &m,
            &d,
            &[0.1],
            &[0.01],
            &RatioSource::Exact,
            1,
            &mut stream(1),
        )
        .unwrap();
        let fd = (m.exact_log_likelihood(&[0.11], &d).unwrap()
            - m.exact_log_likelihood(&[0.09], &d).unwrap())
            / 0.02;
        assert_relative_eq!(g.mean[0], fd, epsilon = 1e-9);
        assert_relative_eq!(g.mean[0], m.score(0.1, &d), epsilon = 1e-6);
        assert_eq!(g.std_error[0], 0.0);
    }

    #[test]
    fn rejects_zero_perturbation() {
        let m = IidGaussianModel::new(1.0, 1.0, 0.5, 0.0, 1e5).unwrap();
        let d = simulate(&m, &[0.2], 5, &mut stream(0)).unwrap();
        assert!(spsa_gradient_estimate(
            &m,
            &d,
            &[0.1],
            &[0.0],
            &RatioSource::Exact,
            1,
            &mut stream(1)
        )
        .is_err());
    }

    #[test]
    fn ais_mode_tracks_score() {
        let m = IidGaussianModel::new(1.0, 1.0, 0.5, 0.0, 1e5).unwrap();
        let d = simulate(&m, &[0.2], 30, &mut stream(0)).unwrap();
        let src = RatioSource::Ais {
            bridge: BridgeConfig::new(1, 20, true),
            init: PathInit::Exact,
            init_kernel: CsmcKernel::new(20, true),
        };
        let g = spsa_gradient_estimate(&m, &d, &[0.0], &[0.05], &src, 200, &mut stream(2)).unwrap();
        let score = m.score(0.0, &d);
        assert!(
            (g.mean[0] - score).abs() < 4.0 * g.std_error[0] + 1e-3 * score.abs(),
            "{g:?} vs {score}"
        );
    }
}
