//! Columnar binary trace files and their CSV export.
//!
//! Layout (little endian): the magic `SSMTRACE`, a `u32` format version, a
//! `u64` header length and a JSON header, then the columns `theta`,
//! `proposed`, `noise` (`f64`, row-major), `accepted` (`u8`), `log_r`
//! (`f64`), the degenerate iteration indices (`u64`) and the latent
//! snapshots (`u64` iteration, `u64` length, `f64` values).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssm_mcmc::samplers::{ChainTrace, SamplerKind};
use ssm_mcmc::LatentPath;

use crate::error::{io_err, CliError, CliResult};
use crate::output::fmt_f64;

pub const MAGIC: &[u8; 8] = b"SSMTRACE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: SamplerKind,
    param_dim: usize,
    burn_in: usize,
    seed: u64,
    fingerprint: String,
    len: usize,
    degenerate: usize,
    latents: usize,
    state_dim: usize,
}

fn put_f64s(w: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_trace(path: &Path, trace: &ChainTrace) -> CliResult<()> {
    let ctx = format!("writing {}", path.display());
    let f = File::create(path).map_err(|e| io_err(&ctx, e))?;
    let mut w = BufWriter::new(f);
    let header = Header {
        kind: trace.kind,
        param_dim: trace.param_dim,
        burn_in: trace.burn_in,
        seed: trace.seed,
        fingerprint: trace.fingerprint.clone(),
        len: trace.len(),
        degenerate: trace.degenerate_iterations.len(),
        latents: trace.latents.len(),
        state_dim: trace.latents.first().map_or(1, |(_, x)| x.state_dim()),
    };
    let json = serde_json::to_vec(&header).map_err(|e| io_err(&ctx, e))?;
    let res: std::io::Result<()> = (|| {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        put_f64s(&mut w, &trace.theta)?;
        put_f64s(&mut w, &trace.proposed)?;
        put_f64s(&mut w, &trace.noise)?;
        w.write_all(
            &trace
                .accepted
                .iter()
                .map(|&a| u8::from(a))
                .collect::<Vec<_>>(),
        )?;
        put_f64s(&mut w, &trace.log_r)?;
        for &i in &trace.degenerate_iterations {
            w.write_all(&(i as u64).to_le_bytes())?;
        }
        for (i, x) in &trace.latents {
            w.write_all(&(*i as u64).to_le_bytes())?;
            w.write_all(&(x.len() as u64).to_le_bytes())?;
            put_f64s(&mut w, x.values())?;
        }
        w.flush()
    })();
    res.map_err(|e| io_err(&ctx, e))
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> std::io::Result<Vec<u8>> {
        let mut b = vec![0; n];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }

    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64s(&mut self, n: usize) -> std::io::Result<Vec<f64>> {
        let b = self.bytes(n * 8)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_trace(path: &Path) -> CliResult<ChainTrace> {
    let ctx = format!("reading {}", path.display());
    let bad = |m: &str| CliError::Config(format!("{}: {m}", path.display()));
    let f = File::open(path).map_err(|e| CliError::Config(format!("{ctx}: {e}")))?;
    let mut r = Reader(BufReader::new(f));
    let io = |e: std::io::Error| CliError::Config(format!("{ctx}: {e}"));
    if r.bytes(8).map_err(io)? != MAGIC {
        return Err(bad("not a trace file"));
    }
    let version = u32::from_le_bytes(r.bytes(4).map_err(io)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported trace format version {version}")));
    }
    let hlen = r.u64().map_err(io)? as usize;
    let h: Header =
        serde_json::from_slice(&r.bytes(hlen).map_err(io)?).map_err(|e| bad(&e.to_string()))?;
    let rows = h.len * h.param_dim;
    let theta = r.f64s(rows).map_err(io)?;
    let proposed = r.f64s(rows).map_err(io)?;
    let noise = r.f64s(rows).map_err(io)?;
    let accepted = r
        .bytes(h.len)
        .map_err(io)?
        .into_iter()
        .map(|b| b != 0)
        .collect();
    let log_r = r.f64s(h.len).map_err(io)?;
    let degenerate_iterations = (0..h.degenerate)
        .map(|_| r.u64().map(|v| v as usize))
        .collect::<std::io::Result<_>>()
        .map_err(io)?;
    let mut latents = Vec::with_capacity(h.latents);
    for _ in 0..h.latents {
        let i = r.u64().map_err(io)? as usize;
        let n = r.u64().map_err(io)? as usize;
        let x = LatentPath::new(h.state_dim, r.f64s(n * h.state_dim).map_err(io)?)
            .map_err(|e| bad(&e.to_string()))?;
        latents.push((i, x));
    }
    Ok(ChainTrace {
        kind: h.kind,
        param_dim: h.param_dim,
        burn_in: h.burn_in,
        seed: h.seed,
        fingerprint: h.fingerprint,
        theta,
        proposed,
        noise,
        accepted,
        log_r,
        degenerate_iterations,
        latents,
    })
}

/// Writes one row per iteration: parameters, proposals, noise, acceptance
/// and log acceptance ratio.
pub fn export_csv(path: &Path, trace: &ChainTrace) -> CliResult<()> {
    let ctx = format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(&ctx, e))?;
    let d = trace.param_dim;
    let mut header = vec!["iteration".to_string()];
    for prefix in ["theta", "proposed", "noise"] {
        header.extend((0..d).map(|j| format!("{prefix}_{j}")));
    }
    header.extend(["accepted".to_string(), "log_r".to_string()]);
    w.write_record(&header).map_err(|e| io_err(&ctx, e))?;
    for i in 0..trace.len() {
        let mut rec = vec![i.to_string()];
        for col in [&trace.theta, &trace.proposed, &trace.noise] {
            rec.extend(col[i * d..(i + 1) * d].iter().map(|&v| fmt_f64(v)));
        }
        rec.push(u8::from(trace.accepted[i]).to_string());
        rec.push(fmt_f64(trace.log_r[i]));
        w.write_record(&rec).map_err(|e| io_err(&ctx, e))?;
    }
    w.flush().map_err(|e| io_err(&ctx, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssm_mcmc::samplers::{
        run_chain_from_prior, ChainSpec, LatentTrace, MwpgConfig, RwProposal, SamplerConfig,
    };
    use ssm_mcmc::{simulate, stream, IidGaussianModel};

    #[test]
    fn round_trip() {
        let m = IidGaussianModel::new(1.0, 1.0, 1.0, 0.0, 1e5).unwrap();
        let d = simulate(&m, &[0.0], 10, &mut stream(0)).unwrap();
        let spec = ChainSpec {
            config: SamplerConfig::Mwpg(MwpgConfig::new(5)),
            proposal: RwProposal::new(vec![0.3]).unwrap(),
            iterations: 30,
            burn_in: 3,
            latent_trace: LatentTrace::Thin(7),
        };
        let t = run_chain_from_prior(&spec, &m, &d, None, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.trace");
        write_trace(&p, &t).unwrap();
        assert_eq!(read_trace(&p).unwrap(), t);
        let c = dir.path().join("a.csv");
        export_csv(&c, &t).unwrap();
        let text = std::fs::read_to_string(&c).unwrap();
        assert_eq!(text.lines().count(), 31);
        std::fs::write(&p, b"garbage").unwrap();
        assert!(read_trace(&p).is_err());
    }
}
