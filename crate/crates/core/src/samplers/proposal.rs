//! Gaussian random-walk proposals on the parameter.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates on which the random walk moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalScale {
    /// `theta' = theta + sd * z`.
    #[default]
    Identity,
    /// `sqrt(theta') = sqrt(theta) + sd * z` for positive parameters such as
    /// variances; nonpositive `sqrt(theta')` is rejected outright.
    StdDev,
}

/// Random-walk proposal `q(theta, .)` with per-coordinate step sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwProposal {
    sds: Vec<f64>,
    scale: ProposalScale,
}

/// A drawn proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedMove {
    pub theta: Vec<f64>,
    /// `log q(theta', theta) - log q(theta, theta')`; `-inf` when the draw
    /// leaves the support of the walk.
    pub log_q_ratio: f64,
    /// Standard normal draws behind the move.
    pub noise: Vec<f64>,
}

impl ProposedMove {
    /// A move to an explicit `theta'` with the given proposal ratio.
    pub fn to(theta: Vec<f64>, log_q_ratio: f64) -> Self {
        let noise = vec![0.0; theta.len()];
        Self {
            theta,
            log_q_ratio,
            noise,
        }
    }
}

impl RwProposal {
    pub fn new(sds: Vec<f64>) -> Result<Self> {
        Self::with_scale(sds, ProposalScale::Identity)
    }

    pub fn on_sd_scale(sds: Vec<f64>) -> Result<Self> {
        Self::with_scale(sds, ProposalScale::StdDev)
    }

    pub fn with_scale(sds: Vec<f64>, scale: ProposalScale) -> Result<Self> {
        if sds.is_empty() || sds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidInput(
                "proposal standard deviations must be positive and finite".into(),
            ));
        }
        Ok(Self { sds, scale })
    }

    /// Step sizes `base / sqrt(T)`.
    pub fn scaled_by_sqrt_t(base: Vec<f64>, t_len: usize, scale: ProposalScale) -> Result<Self> {
        let f = 1.0 / (t_len.max(1) as f64).sqrt();
        Self::with_scale(base.into_iter().map(|s| s * f).collect(), scale)
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn scale(&self) -> ProposalScale {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.sds.len()
    }

    /// Draws `theta'`. Always consumes exactly `dim()` standard normals.
    pub fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> ProposedMove {
        let noise: Vec<f64> = self
            .sds
            .iter()
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.apply(theta, noise)
    }

    /// The move produced by the given standard normal draws.
    pub fn apply(&self, theta: &[f64], noise: Vec<f64>) -> ProposedMove {
        assert_eq!(theta.len(), self.sds.len(), "proposal dimension mismatch");
        match self.scale {
            ProposalScale::Identity => ProposedMove {
                theta: theta
                    .iter()
                    .zip(&self.sds)
                    .zip(&noise)
                    .map(|((t, s), z)| t + s * z)
                    .collect(),
                log_q_ratio: 0.0,
                noise,
            },
            ProposalScale::StdDev => {
                let mut log_q_ratio = 0.0;
                let mut out = Vec::with_capacity(theta.len());
                for ((&t, &s), &z) in theta.iter().zip(&self.sds).zip(&noise) {
                    let sd = t.sqrt();
                    let sd_new = sd + s * z;
                    if sd.is_nan() || sd <= 0.0 || sd_new <= 0.0 {
                        log_q_ratio = f64::NEG_INFINITY;
                    } else if log_q_ratio.is_finite() {
                        log_q_ratio += (sd_new / sd).ln();
                    }
                    out.push(sd_new * sd_new);
                }
                ProposedMove {
                    theta: out,
                    log_q_ratio,
                    noise,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_sds() {
        assert!(RwProposal::new(vec![]).is_err());
        assert!(RwProposal::new(vec![0.0]).is_err());
        assert!(RwProposal::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn sqrt_t_scaling() {
        let p = RwProposal::scaled_by_sqrt_t(vec![2.0], 100, ProposalScale::Identity).unwrap();
        assert_relative_eq!(p.sds()[0], 0.2);
    }

    #[test]
    fn identity_walk_is_symmetric() {
        let p = RwProposal::new(vec![0.5, 2.0]).unwrap();
        let m = p.apply(&[1.0, -1.0], vec![1.0, -0.5]);
        assert_eq!(m.theta, vec![1.5, -2.0]);
        assert_eq!(m.log_q_ratio, 0.0);
    }

    #[test]
    fn sd_scale_walk_has_jacobian_ratio() {
        let p = RwProposal::on_sd_scale(vec![1.0]).unwrap();
        let m = p.apply(&[4.0], vec![1.0]);
        assert_relative_eq!(m.theta[0], 9.0);
        assert_relative_eq!(m.log_q_ratio, (3.0f64 / 2.0).ln());
        let back = p.apply(&[9.0], vec![-1.0]);
        assert_relative_eq!(back.theta[0], 4.0);
        assert_relative_eq!(back.log_q_ratio, -m.log_q_ratio);
        assert_eq!(p.apply(&[4.0], vec![-3.0]).log_q_ratio, f64::NEG_INFINITY);
    }

    #[test]
    fn propose_consumes_fixed_draws() {
        let p = RwProposal::new(vec![1.0, 1.0]).unwrap();
        let mut a = stream(9);
        let mut b = stream(9);
        p.propose(&[0.0, 0.0], &mut a);
        p.propose(&[1e6, -3.0], &mut b);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }
}
