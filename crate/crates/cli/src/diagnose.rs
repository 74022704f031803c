//! `diagnose`: chain diagnostics of a trace file, or the acceptance-penalty
//! check of a configuration.

use std::path::{Path, PathBuf};

use ssm_mcmc::{derive_seed, lambda_penalty_check, stream, DiagnosticsReport};

use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError, CliResult};
use crate::models::AnyModel;
use crate::output::fmt_f64;
use crate::run::datasets;
use crate::trace_io::{export_csv, read_trace};

/// Diagnostics of a trace, optionally exporting it to CSV.
pub fn cmd_diagnose_trace(
    path: &Path,
    csv: Option<&Path>,
    t_scale: Option<usize>,
) -> CliResult<DiagnosticsReport> {
    let trace = read_trace(path)?;
    if let Some(c) = csv {
        export_csv(c, &trace)?;
    }
    DiagnosticsReport::from_trace(&trace, t_scale).map_err(|e| CliError::Runtime(e.to_string()))
}

const LAMBDA_TAG: u64 = 0x1A3B;

/// Runs the penalty check for every `(T, N)` of the sweep and writes
/// `<output_dir>/lambda.csv`.
pub fn cmd_diagnose_lambda(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let model = match AnyModel::build(cfg, cfg.model.a)? {
        AnyModel::Iid(m) => m,
        AnyModel::Nonlinear(_) => {
            return Err(CliError::Config(
                "the penalty check needs the iid model".into(),
            ));
        }
    };
    let data = datasets(cfg)?;
    let theta = cfg.lambda.theta.clone().unwrap_or_else(|| cfg.data_theta());
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err("creating output directory", e))?;
    let path = cfg.output_dir.join("lambda.csv");
    let ctx = format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&ctx, e))?;
    w.write_record([
        "t",
        "n_particles",
        "replicates",
        "mean",
        "variance",
        "coupling",
        "se_coupling",
        "coupling_z",
        "ks_statistic",
        "ks_p_value",
        "mean_exp",
        "se_mean_exp",
    ])
    .map_err(|e| io_err(&ctx, e))?;
    for (&t, d) in &data {
        for &n in &cfg.sweep.n {
            let seed = derive_seed(cfg.seed, &[LAMBDA_TAG, t as u64, n as u64]);
            let bs = cfg.sampler.backward_sampling;
            let (_, s) = lambda_penalty_check(
                &model,
                d,
                &theta,
                &cfg.lambda.epsilon,
                n,
                bs,
                cfg.lambda.replicates,
                &mut stream(seed),
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            let rec = [
                t.to_string(),
                n.to_string(),
                cfg.lambda.replicates.to_string(),
                fmt_f64(s.mean),
                fmt_f64(s.variance),
                fmt_f64(s.coupling),
                fmt_f64(s.se_coupling),
                fmt_f64(s.coupling_z()),
                fmt_f64(s.ks.statistic),
                fmt_f64(s.ks.p_value),
                fmt_f64(s.mean_exp),
                fmt_f64(s.se_mean_exp),
            ];
            w.write_record(&rec).map_err(|e| io_err(&ctx, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&ctx, e))?;
    Ok(path)
}
