//! Result rows and their CSV form.

use std::path::Path;

use ssm_mcmc::samplers::SamplerKind;

use crate::error::{io_err, CliError, CliResult};

/// Floats are written with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// Outcome of one (configuration, replicate) run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sampler: SamplerKind,
    /// Zero when the sampler uses no particles.
    pub n_particles: usize,
    /// Zero when the sampler uses no bridge.
    pub k: usize,
    pub t: usize,
    /// The iid model's `a`; absent for other models.
    pub a: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
    /// Empty on success.
    pub error: String,
    pub accept_rate: f64,
    pub iac: Vec<f64>,
    /// Mean squared jump multiplied by `T`.
    pub msjd_t: Vec<f64>,
    pub n_samples: usize,
    pub wall_seconds: f64,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }

    /// Cell coordinates without the replicate.
    pub fn cell_key(&self) -> (SamplerKind, usize, usize, usize, String) {
        (
            self.sampler,
            self.n_particles,
            self.k,
            self.t,
            self.a.map(fmt_f64).unwrap_or_default(),
        )
    }
}

/// Columns that carry timing information.
pub const TIMING_COLUMNS: &[&str] = &["wall_seconds"];

pub fn header(param_dim: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "sampler",
        "n_particles",
        "k",
        "t",
        "a",
        "replicate",
        "seed",
        "status",
        "accept_rate",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..param_dim).map(|j| format!("iac_{j}")));
    h.extend((0..param_dim).map(|j| format!("msjd_t_{j}")));
    h.extend(
        ["n_samples", "wall_seconds", "error"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn record(r: &ResultRow) -> Vec<String> {
    let mut v = vec![
        r.sampler.name().to_string(),
        r.n_particles.to_string(),
        r.k.to_string(),
        r.t.to_string(),
        r.a.map(fmt_f64).unwrap_or_default(),
        r.replicate.to_string(),
        r.seed.to_string(),
        if r.ok() { "ok" } else { "failed" }.to_string(),
        fmt_f64(r.accept_rate),
    ];
    v.extend(r.iac.iter().map(|&x| fmt_f64(x)));
    v.extend(r.msjd_t.iter().map(|&x| fmt_f64(x)));
    v.push(r.n_samples.to_string());
    v.push(fmt_f64(r.wall_seconds));
    v.push(r.error.clone());
    v
}

pub fn write_results(path: &Path, param_dim: usize, rows: &[ResultRow]) -> CliResult<()> {
    let ctx = format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(&ctx, e))?;
    w.write_record(header(param_dim))
        .map_err(|e| io_err(&ctx, e))?;
    for r in rows {
        w.write_record(record(r)).map_err(|e| io_err(&ctx, e))?;
    }
    w.flush().map_err(|e| io_err(&ctx, e))
}

pub fn read_results(path: &Path) -> CliResult<Vec<ResultRow>> {
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let h = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        h.iter()
            .position(|c| c == name)
            .ok_or_else(|| bad(format!("missing column {name}")))
    };
    let param_dim = h.iter().filter(|c| c.starts_with("iac_")).count();
    let idx = (
        col("sampler")?,
        col("n_particles")?,
        col("k")?,
        col("t")?,
        col("a")?,
        col("replicate")?,
        col("seed")?,
        col("accept_rate")?,
        col("n_samples")?,
        col("wall_seconds")?,
        col("error")?,
    );
    let iac_cols = (0..param_dim)
        .map(|j| col(&format!("iac_{j}")))
        .collect::<CliResult<Vec<_>>>()?;
    let msjd_cols = (0..param_dim)
        .map(|j| col(&format!("msjd_t_{j}")))
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| {
            parse_f64(&rec[i])
                .ok_or_else(|| bad(format!("row {}: bad number `{}`", line + 1, &rec[i])))
        };
        let u = |i: usize| {
            rec[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("row {}: bad integer `{}`", line + 1, &rec[i])))
        };
        rows.push(ResultRow {
            sampler: rec[idx.0]
                .parse()
                .map_err(|e: ssm_mcmc::Error| bad(e.to_string()))?,
            n_particles: u(idx.1)? as usize,
            k: u(idx.2)? as usize,
            t: u(idx.3)? as usize,
            a: if rec[idx.4].is_empty() {
                None
            } else {
                Some(f(idx.4)?)
            },
            replicate: u(idx.5)? as usize,
            seed: u(idx.6)?,
            accept_rate: f(idx.7)?,
            iac: iac_cols.iter().map(|&i| f(i)).collect::<CliResult<_>>()?,
            msjd_t: msjd_cols.iter().map(|&i| f(i)).collect::<CliResult<_>>()?,
            n_samples: u(idx.8)? as usize,
            wall_seconds: f(idx.9)?,
            error: rec[idx.10].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(parse_f64(&fmt_f64(0.1)).unwrap(), 0.1);
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn rows_round_trip() {
        let row = ResultRow {
            sampler: SamplerKind::Pmmh,
            n_particles: 10,
            k: 0,
            t: 50,
            a: Some(0.5),
            replicate: 2,
            seed: 99,
            error: "bad, \"quoted\"".into(),
            accept_rate: 0.25,
            iac: vec![3.5],
            msjd_t: vec![0.75],
            n_samples: 900,
            wall_seconds: 1.5,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_results(&p, 1, std::slice::from_ref(&row)).unwrap();
        assert_eq!(read_results(&p).unwrap(), vec![row]);
    }
}
