//! `report`: per-cell aggregates and IAC ratios between samplers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ssm_mcmc::samplers::SamplerKind;

use crate::error::{io_err, CliResult};
use crate::output::{fmt_f64, read_results, ResultRow};

/// Aggregate of all replicates of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub sampler: SamplerKind,
    pub n_particles: usize,
    pub k: usize,
    pub t: usize,
    pub a: Option<f64>,
    pub rows: usize,
    pub ok_rows: usize,
    pub mean_iac: Vec<f64>,
    pub median_iac: Vec<f64>,
    pub mean_msjd_t: Vec<f64>,
    pub mean_accept: f64,
    /// Mean IAC divided by the baseline sampler's mean IAC in the matching
    /// cell, per parameter.
    pub iac_ratio: Option<Vec<f64>>,
}

impl CellSummary {
    /// No successful replicate.
    pub fn missing(&self) -> bool {
        self.ok_rows == 0
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Groups rows by cell and computes aggregates. Ratios use `baseline`, or
/// the first sampler kind present when `None`. A cell is matched to the
/// baseline cell with the same `(N, T, a)`, or to the only baseline cell with
/// the same `(T, a)`.
pub fn summarize(rows: &[ResultRow], baseline: Option<SamplerKind>) -> Vec<CellSummary> {
    let mut groups: BTreeMap<_, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.cell_key()).or_default().push(r);
    }
    let mut cells: Vec<CellSummary> = groups
        .into_values()
        .map(|g| {
            let first = g[0];
            let ok: Vec<&&ResultRow> = g.iter().filter(|r| r.ok()).collect();
            let d = first.iac.len();
            let col = |f: &dyn Fn(&ResultRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            CellSummary {
                sampler: first.sampler,
                n_particles: first.n_particles,
                k: first.k,
                t: first.t,
                a: first.a,
                rows: g.len(),
                ok_rows: ok.len(),
                mean_iac: (0..d).map(|j| mean(&col(&|r| r.iac[j]))).collect(),
                median_iac: (0..d).map(|j| median(&col(&|r| r.iac[j]))).collect(),
                mean_msjd_t: (0..d).map(|j| mean(&col(&|r| r.msjd_t[j]))).collect(),
                mean_accept: mean(&col(&|r| r.accept_rate)),
                iac_ratio: None,
            }
        })
        .collect();
    let base = baseline.or_else(|| cells.iter().map(|c| c.sampler).min());
    if let Some(base) = base {
        let base_cells: Vec<CellSummary> = cells
            .iter()
            .filter(|c| c.sampler == base && !c.missing())
            .cloned()
            .collect();
        for c in &mut cells {
            if c.missing() {
                continue;
            }
            let same_ta =
                |b: &&CellSummary| b.t == c.t && b.a.map(f64::to_bits) == c.a.map(f64::to_bits);
            let matched = base_cells
                .iter()
                .filter(same_ta)
                .find(|b| b.n_particles == c.n_particles)
                .or_else(|| {
                    let v: Vec<&CellSummary> = base_cells.iter().filter(same_ta).collect();
                    (v.len() == 1).then(|| v[0])
                });
            c.iac_ratio = matched.map(|b| {
                c.mean_iac
                    .iter()
                    .zip(&b.mean_iac)
                    .map(|(x, y)| x / y)
                    .collect()
            });
        }
    }
    cells
}

fn join(v: &[f64], prec: usize) -> String {
    v.iter()
        .map(|x| format!("{x:.prec$}"))
        .collect::<Vec<_>>()
        .join("/")
}

/// Human-readable table.
pub fn render_table(cells: &[CellSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>6} {:>4} {:>6} {:>6} {:>6} {:>16} {:>16} {:>12} {:>16} {:>7}  flag",
        "sampler",
        "N",
        "K",
        "T",
        "a",
        "ok",
        "mean_iac",
        "median_iac",
        "iac_ratio",
        "msjd_x_T",
        "accept"
    );
    for c in cells {
        let a = c.a.map(|a| format!("{a}")).unwrap_or_else(|| "-".into());
        let ratio = c
            .iac_ratio
            .as_deref()
            .map(|r| join(r, 3))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>4} {:>6} {:>6} {:>6} {:>16} {:>16} {:>12} {:>16} {:>7.3}  {}",
            c.sampler.name(),
            c.n_particles,
            c.k,
            c.t,
            a,
            format!("{}/{}", c.ok_rows, c.rows),
            join(&c.mean_iac, 2),
            join(&c.median_iac, 2),
            ratio,
            join(&c.mean_msjd_t, 4),
            c.mean_accept,
            if c.missing() { "MISSING" } else { "" }
        );
    }
    s
}

pub fn write_summary(path: &Path, cells: &[CellSummary]) -> CliResult<()> {
    let ctx = format!("writing {}", path.display());
    let d = cells.first().map_or(0, |c| c.mean_iac.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(&ctx, e))?;
    let mut h: Vec<String> = [
        "sampler",
        "n_particles",
        "k",
        "t",
        "a",
        "rows",
        "ok_rows",
        "status",
        "mean_accept",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["mean_iac", "median_iac", "iac_ratio", "mean_msjd_t"] {
        h.extend((0..d).map(|j| format!("{prefix}_{j}")));
    }
    w.write_record(&h).map_err(|e| io_err(&ctx, e))?;
    for c in cells {
        let mut rec = vec![
            c.sampler.name().to_string(),
            c.n_particles.to_string(),
            c.k.to_string(),
            c.t.to_string(),
            c.a.map(fmt_f64).unwrap_or_default(),
            c.rows.to_string(),
            c.ok_rows.to_string(),
            if c.missing() { "missing" } else { "ok" }.to_string(),
            fmt_f64(c.mean_accept),
        ];
        rec.extend(c.mean_iac.iter().map(|&x| fmt_f64(x)));
        rec.extend(c.median_iac.iter().map(|&x| fmt_f64(x)));
        match &c.iac_ratio {
            Some(r) => rec.extend(r.iter().map(|&x| fmt_f64(x))),
            None => rec.extend((0..d).map(|_| String::new())),
        }
        rec.extend(c.mean_msjd_t.iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec).map_err(|e| io_err(&ctx, e))?;
    }
    w.flush().map_err(|e| io_err(&ctx, e))
}

/// Reads result files, writes `summary.csv` into `out_dir` and returns the
/// cells with the rendered table.
pub fn cmd_report(
    inputs: &[&Path],
    out_dir: &Path,
    baseline: Option<SamplerKind>,
) -> CliResult<(Vec<CellSummary>, String)> {
    let mut rows = Vec::new();
    for p in inputs {
        rows.extend(read_results(p)?);
    }
    let cells = summarize(&rows, baseline);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| io_err(&format!("creating {}", out_dir.display()), e))?;
    write_summary(&out_dir.join("summary.csv"), &cells)?;
    let table = render_table(&cells);
    Ok((cells, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sampler: SamplerKind, rep: usize, iac: f64) -> ResultRow {
        ResultRow {
            sampler,
            n_particles: 10,
            k: 0,
            t: 100,
            a: Some(1.0),
            replicate: rep,
            seed: rep as u64,
            error: String::new(),
            accept_rate: 0.3,
            iac: vec![iac],
            msjd_t: vec![0.5],
            n_samples: 900,
            wall_seconds: 0.1,
        }
    }

    #[test]
    fn single_row_is_its_own_summary() {
        let cells = summarize(&[row(SamplerKind::Pmmh, 0, 7.0)], None);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].mean_iac, vec![7.0]);
        assert_eq!(cells[0].median_iac, vec![7.0]);
        assert_eq!(cells[0].mean_msjd_t, vec![0.5]);
        assert_eq!(cells[0].iac_ratio, Some(vec![1.0]));
    }

    #[test]
    fn identical_samplers_have_unit_ratio() {
        let rows = vec![
            row(SamplerKind::Pmmh, 0, 4.0),
            row(SamplerKind::Mwpg, 0, 4.0),
            row(SamplerKind::Mwpg, 1, 4.0),
        ];
        let cells = summarize(&rows, Some(SamplerKind::Mwpg));
        assert!(cells.iter().all(|c| c.iac_ratio == Some(vec![1.0])));
    }

    #[test]
    fn failed_cells_are_missing() {
        let mut r = row(SamplerKind::McmcAis, 0, f64::NAN);
        r.error = "boom".into();
        let cells = summarize(&[r, row(SamplerKind::Pmmh, 0, 3.0)], None);
        let ais = cells
            .iter()
            .find(|c| c.sampler == SamplerKind::McmcAis)
            .unwrap();
        assert!(ais.missing());
        assert!(render_table(&cells).contains("MISSING"));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
