//! Reference models with their analytic oracles.

mod iid;
mod nonlinear;

pub use iid::IidGaussianModel;
pub use nonlinear::NonlinearBenchmarkModel;
