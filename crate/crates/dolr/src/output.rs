//! CSV and manifest writers. Every float is printed with 17 significant
//! digits so that files round-trip 64-bit values exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use dolr_core::integrators::{DiagnosticsRow, RankEvent, Snapshot};
use dolr_core::kernels::linalg::sym_eigen;
use dolr_core::paths::BrownianSource;
use sha2::{Digest, Sha256};

use crate::config::{serialize_config, RunConfig};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Hex SHA-256 of the canonical configuration text.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(serialize_config(cfg).as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn header(cfg: &RunConfig) -> String {
    format!("# config_hash={} seed={}\n", config_hash(cfg), cfg.seed)
}

/// Snapshot summaries: ensemble mean (`mean`, index `j`), eigenvalues of
/// `E[X X^T]` (`eig`, index `k`) and, for DO runs, the entries of `U`
/// (`u`, index `k*d + j`).
pub fn trajectory_csv(cfg: &RunConfig, snapshots: &[Snapshot]) -> String {
    let mut s = header(cfg);
    s.push_str("t,kind,index,value\n");
    for snap in snapshots {
        let t = fmt_f64(snap.t);
        let x = &snap.x;
        let n = x.n_atoms() as f64;
        for j in 0..x.width() {
            let mean = x.column(j).iter().sum::<f64>() / n;
            let _ = writeln!(s, "{t},mean,{j},{}", fmt_f64(mean));
        }
        if let Ok(m) = x.cross_moment(x) {
            let (vals, _) = sym_eigen(&m);
            for (k, v) in vals.iter().enumerate() {
                let _ = writeln!(s, "{t},eig,{k},{}", fmt_f64(*v));
            }
        }
        if let Some(u) = &snap.u {
            for k in 0..u.nrows() {
                for j in 0..u.ncols() {
                    let idx = k * u.ncols() + j;
                    let _ = writeln!(s, "{t},u,{idx},{}", fmt_f64(u[(k, j)]));
                }
            }
        }
    }
    s
}

pub fn diagnostics_csv(cfg: &RunConfig, rows: &[DiagnosticsRow]) -> String {
    let mut s = header(cfg);
    s.push_str("t,gauge_defect,ortho_defect,gram_inv_frobenius,lambda_min\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.gauge_defect),
            fmt_f64(r.ortho_defect),
            fmt_f64(r.gram_inv_frobenius),
            fmt_f64(r.lambda_min)
        );
    }
    s
}

pub fn events_csv(cfg: &RunConfig, events: &[RankEvent]) -> String {
    let mut s = header(cfg);
    s.push_str("t,old_rank,new_rank,discarded_mass,inv_norm_at_event\n");
    for e in events {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(e.t_event),
            e.old_rank,
            e.new_rank,
            fmt_f64(e.discarded_mass),
            fmt_f64(e.inv_norm_at_event)
        );
    }
    s
}

pub fn build_id() -> String {
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    format!("dolr-{}-{profile}", env!("CARGO_PKG_VERSION"))
}

/// Hash, seed, build, wall time, and the full configuration. The metadata
/// lines are comments, so the manifest itself parses as a config file.
pub fn manifest(cfg: &RunConfig, command: &str, wall_seconds: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# config_hash = {}", config_hash(cfg));
    let _ = writeln!(s, "# seed = {}", cfg.seed);
    let _ = writeln!(s, "# build = {}", build_id());
    let _ = writeln!(s, "# command = {command}");
    let _ = writeln!(s, "# wall_time_s = {wall_seconds:.3}");
    s.push('\n');
    s.push_str(&serialize_config(cfg));
    s
}

/// Raw increments in `(step, atom, channel)` order as little-endian f64.
pub fn dump_paths(
    path: &Path,
    source: &BrownianSource,
    n_steps: usize,
    n_atoms: usize,
    m: usize,
) -> io::Result<()> {
    use dolr_core::kernels::EnsembleMatrix;
    use dolr_core::paths::NoiseSource;
    let mut bytes = Vec::with_capacity(n_steps * n_atoms * m * 8);
    let mut buf = EnsembleMatrix::zeros(n_atoms, m);
    for step in 0..n_steps {
        source
            .increments(step, &mut buf)
            .map_err(|e| io::Error::other(e.to_string()))?;
        for v in buf.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)
}

/// Writes named files into `dir`, creating it if needed.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}
