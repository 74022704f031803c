//! `simulate` and `run`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssm_mcmc::samplers::{
    run_chain_from_prior, BridgeConfig, ChainSpec, LatentTrace, MwpgConfig, SamplerConfig,
    SamplerKind, ScheduleSpec, SmcConfig,
};
use ssm_mcmc::{derive_seed, msjd, simulate, stream, Dataset, DiagnosticsReport};

use crate::config::{parse_trace, DataSource, ExperimentConfig, ModelConfig};
use crate::error::{io_err, CliError, CliResult};
use crate::models::AnyModel;
use crate::output::{write_results, ResultRow};
use crate::trace_io::write_trace;
use crate::with_model;

const DATA_TAG: u64 = 0xDA7A;
const RUN_TAG: u64 = 0x5EED;

/// Dataset file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFile {
    pub seed: u64,
    pub model: ModelConfig,
    pub dataset: Dataset,
}

fn data_base_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.data
        .seed
        .unwrap_or_else(|| derive_seed(cfg.seed, &[DATA_TAG]))
}

/// Seed used to simulate a data set of length `t`.
pub fn data_seed(cfg: &ExperimentConfig, t: usize) -> u64 {
    derive_seed(data_base_seed(cfg), &[t as u64])
}

fn simulate_data(cfg: &ExperimentConfig, t: usize) -> CliResult<(u64, Dataset)> {
    let model = AnyModel::build(cfg, cfg.model.a)?;
    let theta = cfg.data_theta();
    let seed = data_seed(cfg, t);
    let d = with_model!(&model, m => simulate(m, &theta, t, &mut stream(seed)))
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok((seed, d))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(&format!("creating {}", dir.display()), e))
}

/// Simulates a data set and writes it to `<output_dir>/data.json`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let t = cfg
        .data
        .t
        .unwrap_or_else(|| *cfg.sweep.t.iter().max().expect("validated"));
    if t == 0 {
        return Err(CliError::Config("data.t must be positive".into()));
    }
    let (seed, dataset) = simulate_data(cfg, t)?;
    ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("data.json");
    let file = DataFile {
        seed,
        model: cfg.model.clone(),
        dataset,
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| io_err("serializing data", e))?;
    fs::write(&path, text).map_err(|e| io_err(&format!("writing {}", path.display()), e))?;
    Ok(path)
}

pub fn load_data_file(path: &Path) -> CliResult<DataFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Data sets keyed by length.
pub fn datasets(cfg: &ExperimentConfig) -> CliResult<BTreeMap<usize, Dataset>> {
    let mut out = BTreeMap::new();
    let file = match cfg.data.source {
        DataSource::File => Some(load_data_file(
            cfg.data.path.as_deref().expect("validated"),
        )?),
        DataSource::Simulate => None,
    };
    for &t in &cfg.sweep.t {
        let d = match &file {
            Some(f) => f
                .dataset
                .truncated(t)
                .map_err(|e| CliError::Config(e.to_string()))?,
            None => simulate_data(cfg, t)?.1,
        };
        out.insert(t, d);
    }
    Ok(out)
}

/// One (cell, replicate) job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub sampler: SamplerKind,
    pub n_particles: usize,
    pub k: usize,
    pub t: usize,
    pub a: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
}

fn kind_index(kind: SamplerKind) -> u64 {
    SamplerKind::ALL.iter().position(|&k| k == kind).unwrap() as u64
}

/// The sweep in configuration order. Coordinates a sampler does not use are
/// set to zero and duplicates dropped. Seeds depend only on the master seed
/// and the job coordinates; in paired mode, only on `(T, a, replicate)`.
pub fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let iid = cfg.param_dim() == 1;
    let a_grid: Vec<Option<f64>> = if iid {
        cfg.a_grid().into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &kind in &cfg.sampler.kinds {
        let ns: Vec<usize> = if kind == SamplerKind::MarginalMh {
            vec![0]
        } else {
            cfg.sweep.n.clone()
        };
        let ks: Vec<usize> = if kind == SamplerKind::McmcAis {
            cfg.sweep.k.clone()
        } else {
            vec![0]
        };
        for &n in &ns {
            for &k in &ks {
                for &t in &cfg.sweep.t {
                    for &a in &a_grid {
                        let a_bits = a.map_or(u64::MAX, f64::to_bits);
                        if !seen.insert((kind, n, k, t, a_bits)) {
                            continue;
                        }
                        for replicate in 0..cfg.replicates {
                            let coords = if cfg.paired_seeds {
                                vec![RUN_TAG, t as u64, a_bits, replicate as u64]
                            } else {
                                vec![
                                    RUN_TAG,
                                    kind_index(kind),
                                    n as u64,
                                    k as u64,
                                    t as u64,
                                    a_bits,
                                    replicate as u64,
                                ]
                            };
                            out.push(Job {
                                sampler: kind,
                                n_particles: n,
                                k,
                                t,
                                a,
                                replicate,
                                seed: derive_seed(cfg.seed, &coords),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

fn sampler_config(cfg: &ExperimentConfig, job: &Job) -> SamplerConfig {
    let s = &cfg.sampler;
    match job.sampler {
        SamplerKind::MarginalMh => SamplerConfig::MarginalMh,
        SamplerKind::Pmmh => SamplerConfig::Pmmh(SmcConfig::new(job.n_particles)),
        SamplerKind::McmcAis => {
            let mut b = BridgeConfig::new(job.k, job.n_particles, s.backward_sampling);
            if s.schedule_power != 1.0 {
                b.schedule = ScheduleSpec::Power(s.schedule_power);
            }
            SamplerConfig::McmcAis(b)
        }
        SamplerKind::Mwpg => {
            let mut m = MwpgConfig::new(job.n_particles);
            m.kernel.backward_sampling = s.backward_sampling;
            m.theta_ratio_via_ais = s.theta_ratio_via_ais;
            SamplerConfig::Mwpg(m)
        }
    }
}

fn trace_name(job: &Job) -> String {
    let a = job.a.map(|a| format!("_a{a}")).unwrap_or_default();
    format!(
        "{}_n{}_k{}_t{}{a}_r{}.trace",
        job.sampler, job.n_particles, job.k, job.t, job.replicate
    )
}

fn execute(
    cfg: &ExperimentConfig,
    job: &Job,
    data: &Dataset,
    trace_dir: Option<&Path>,
) -> ResultRow {
    let start = Instant::now();
    let d = cfg.param_dim();
    let mut row = ResultRow {
        sampler: job.sampler,
        n_particles: job.n_particles,
        k: job.k,
        t: job.t,
        a: job.a,
        replicate: job.replicate,
        seed: job.seed,
        error: String::new(),
        accept_rate: f64::NAN,
        iac: vec![f64::NAN; d],
        msjd_t: vec![f64::NAN; d],
        n_samples: 0,
        wall_seconds: 0.0,
    };
    let result = (|| -> Result<(), String> {
        let model =
            AnyModel::build(cfg, job.a.unwrap_or(cfg.model.a)).map_err(|e| e.to_string())?;
        let spec = ChainSpec {
            config: sampler_config(cfg, job),
            proposal: model.proposal(cfg, data).map_err(|e| e.to_string())?,
            iterations: cfg.iterations,
            burn_in: cfg.burn_in(),
            latent_trace: parse_trace(&cfg.trace).map_err(|e| e.to_string())?,
        };
        let init = cfg.sampler.init_theta.as_deref();
        let trace = with_model!(&model, m => run_chain_from_prior(&spec, m, data, init, job.seed))
            .map_err(|e| e.to_string())?;
        if let Some(dir) = trace_dir {
            write_trace(&dir.join(trace_name(job)), &trace).map_err(|e| e.to_string())?;
        }
        let rows = trace.post_burn_in_rows();
        row.accept_rate = trace.acceptance_rate();
        row.n_samples = rows.len();
        row.msjd_t = msjd(&rows, Some(job.t)).map_err(|e| e.to_string())?;
        let rep = DiagnosticsReport::from_trace(&trace, Some(job.t)).map_err(|e| e.to_string())?;
        // A chain that never moves after burn-in is recorded with IAC = n.
        row.iac = rep
            .iac
            .iter()
            .zip(&rep.iac_degenerate)
            .map(|(&v, &stuck)| if stuck { rep.n_samples as f64 } else { v })
            .collect();
        Ok(())
    })();
    if let Err(e) = result {
        row.error = e;
    }
    row.wall_seconds = start.elapsed().as_secs_f64();
    row
}

/// Output of [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub results_path: PathBuf,
}

/// Runs every job of the sweep on `threads` workers and writes
/// `<output_dir>/results.csv`. Failed jobs become failed rows.
pub fn cmd_run(cfg: &ExperimentConfig, threads: usize) -> CliResult<RunOutput> {
    cfg.validate()?;
    let data = datasets(cfg)?;
    ensure_dir(&cfg.output_dir)?;
    let trace_dir = if parse_trace(&cfg.trace)? == LatentTrace::None {
        None
    } else {
        let d = cfg.output_dir.join("traces");
        ensure_dir(&d)?;
        Some(d)
    };
    let jobs = jobs(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let rows: Vec<ResultRow> = pool.install(|| {
        jobs.par_iter()
            .map(|job| execute(cfg, job, &data[&job.t], trace_dir.as_deref()))
            .collect()
    });
    let results_path = cfg.output_dir.join("results.csv");
    write_results(&results_path, cfg.param_dim(), &rows)?;
    Ok(RunOutput { rows, results_path })
}
