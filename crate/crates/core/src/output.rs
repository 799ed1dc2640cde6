//! Run artifacts: CSV writers (17-significant-digit floats, LF endings),
//! flat binary snapshots, and the `manifest.json` written last with a
//! checksum for every output file.

use crate::error::{Error, Result};
use crate::evolve::{DiagnosticsRow, FieldState};
use crate::grid::{Grading, RadialGrid};
use crate::modulation::ModulationTrace;
use crate::odelab::OdeSeries;
use crate::profiles::HomotopyClass;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// Round-trip-exact float formatting for CSV cells.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn open_writer(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

pub fn write_diagnostics_csv(path: &Path, rows: &[DiagnosticsRow]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_all(b"t,energy,defect,sup_dphi,sup_J,lambda_raw\n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},",
            fmt_f64(r.t),
            fmt_f64(r.energy),
            fmt_f64(r.defect),
            fmt_f64(r.sup_dphi),
            fmt_f64(r.sup_j)
        )?;
    }
    Ok(w.flush()?)
}

pub fn write_modulation_csv(path: &Path, trace: &ModulationTrace) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_all(b"t,lambda,lambda_dot,lambda_ddot,E0,eps1,calE,ortho_residual,newton_iters,status\n")?;
    for r in &trace.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.lambda),
            fmt_f64(r.lambda_dot),
            fmt_f64(r.lambda_ddot),
            fmt_f64(r.e0),
            fmt_f64(r.eps1),
            fmt_f64(r.cal_e),
            fmt_f64(r.ortho_residual),
            r.newton_iters,
            r.status
        )?;
    }
    Ok(w.flush()?)
}

pub fn ode_csv_string(series: &OdeSeries) -> String {
    let mut out = String::from("t,lambda,lambda_dot,memory_integral\n");
    for i in 0..series.t.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(series.t[i]),
            fmt_f64(series.lambda[i]),
            fmt_f64(series.lambda_dot[i]),
            fmt_f64(series.memory[i])
        ));
    }
    out
}

pub fn write_ode_csv(path: &Path, series: &OdeSeries) -> Result<()> {
    Ok(fs::write(path, ode_csv_string(series))?)
}

/// Read `t` and `lambda` columns from a CSV with a header row.
pub fn read_t_lambda_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty CSV", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let t_col = cols
        .iter()
        .position(|&c| c == "t")
        .ok_or_else(|| Error::Config(format!("{}: no `t` column", path.display())))?;
    let l_col = cols
        .iter()
        .position(|&c| c == "lambda")
        .ok_or_else(|| Error::Config(format!("{}: no `lambda` column", path.display())))?;
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let t: f64 = cells
            .get(t_col)
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("{}: bad t cell", path.display())))?;
        let l: f64 = cells
            .get(l_col)
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("{}: bad lambda cell", path.display())))?;
        if l.is_finite() {
            ts.push(t);
            ls.push(l);
        }
    }
    Ok((ts, ls))
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"SGMSNP01";

/// Flat little-endian binary snapshot: magic, `k`, the grid-constructor
/// parameters, `t`, then the `phi` and `pi` arrays. Nodes are
/// reconstructed by the deterministic grid constructors.
pub fn write_snapshot(path: &Path, state: &FieldState) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&state.k.k().to_le_bytes())?;
    let n = state.grid.len() as u64;
    match state.grid.grading() {
        Grading::Uniform { .. } => {
            w.write_all(&[0u8])?;
            w.write_all(&n.to_le_bytes())?;
            w.write_all(&state.grid.r_max().to_le_bytes())?;
        }
        Grading::Geometric { .. } => {
            w.write_all(&[1u8])?;
            w.write_all(&n.to_le_bytes())?;
            w.write_all(&state.grid.nodes()[0].to_le_bytes())?;
            w.write_all(&state.grid.r_max().to_le_bytes())?;
        }
        Grading::TwoZone { h_in, r_c, .. } => {
            w.write_all(&[2u8])?;
            w.write_all(&n.to_le_bytes())?;
            w.write_all(&h_in.to_le_bytes())?;
            w.write_all(&r_c.to_le_bytes())?;
            w.write_all(&state.grid.r_max().to_le_bytes())?;
        }
    }
    w.write_all(&state.t.to_le_bytes())?;
    for &v in &state.phi {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in &state.pi {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(w.flush()?)
}

pub fn read_snapshot(path: &Path) -> Result<FieldState> {
    let mut r = fs::File::open(path)?;
    let bad = |msg: &str| Error::Config(format!("{}: {msg}", path.display()));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(bad("not a snapshot file"));
    }
    let mut u32b = [0u8; 4];
    let mut u64b = [0u8; 8];
    let mut f64b = [0u8; 8];
    r.read_exact(&mut u32b)?;
    let k = HomotopyClass::new(u32::from_le_bytes(u32b))?;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    r.read_exact(&mut u64b)?;
    let n = u64::from_le_bytes(u64b) as usize;
    let mut read_f64 = |r: &mut fs::File| -> Result<f64> {
        r.read_exact(&mut f64b)?;
        Ok(f64::from_le_bytes(f64b))
    };
    let grid = match tag[0] {
        0 => {
            let r_max = read_f64(&mut r)?;
            RadialGrid::uniform(n, r_max)?
        }
        1 => {
            let r_min = read_f64(&mut r)?;
            let r_max = read_f64(&mut r)?;
            RadialGrid::geometric(n, r_min, r_max)?
        }
        2 => {
            let h_in = read_f64(&mut r)?;
            let r_c = read_f64(&mut r)?;
            let r_max = read_f64(&mut r)?;
            RadialGrid::two_zone(n, h_in, r_c, r_max)?
        }
        _ => return Err(bad("unknown grid tag")),
    };
    let t = read_f64(&mut r)?;
    let read_vec = |r: &mut fs::File| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * n];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let phi = read_vec(&mut r)?;
    let pi = read_vec(&mut r)?;
    Ok(FieldState::new(t, phi, pi, grid, k))
}

/// Snapshot files of a run directory in time order.
pub fn list_snapshots(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::RunDir(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("snapshot_") && n.ends_with(".bin"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::RunDir(format!("{}: no snapshot files", dir.display())));
    }
    Ok(files)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub n: usize,
    pub grading: String,
    pub r_max: f64,
    pub h_inner: f64,
}

impl GridInfo {
    pub fn of(grid: &RadialGrid) -> Self {
        let grading = match grid.grading() {
            Grading::Uniform { h } => format!("uniform(h={h})"),
            Grading::Geometric { ratio } => format!("geometric(ratio={ratio})"),
            Grading::TwoZone { h_in, r_c, growth } => {
                format!("two-zone(h_in={h_in}, r_c={r_c}, growth={growth})")
            }
        };
        Self { n: grid.len(), grading, r_max: grid.r_max(), h_inner: grid.h_inner() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config: BTreeMap<String, String>,
    pub grid: GridInfo,
    pub version: String,
    pub wall_time_s: f64,
    pub status: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Checksum every named output file and write `manifest.json` last.
pub fn write_manifest(
    dir: &Path,
    config: BTreeMap<String, String>,
    grid: GridInfo,
    status: &str,
    wall_time_s: f64,
    file_names: &[String],
) -> Result<()> {
    let mut files = Vec::with_capacity(file_names.len());
    for name in file_names {
        let path = dir.join(name);
        files.push(FileEntry {
            name: name.clone(),
            sha256: sha256_hex(&path)?,
            bytes: fs::metadata(&path)?.len(),
        });
    }
    let manifest = Manifest {
        config,
        grid,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s,
        status: status.to_string(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, -4.0 * std::f64::consts::PI] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let k = HomotopyClass::new(4).unwrap();
        for grid in [
            RadialGrid::uniform(100, 8.0).unwrap(),
            RadialGrid::geometric(100, 1e-2, 1e2).unwrap(),
            RadialGrid::two_zone(200, 0.05, 2.0, 40.0).unwrap(),
        ] {
            let state = FieldState::soliton(k, 1.5, grid).unwrap();
            let path = dir.path().join("snapshot_0000.bin");
            write_snapshot(&path, &state).unwrap();
            let back = read_snapshot(&path).unwrap();
            assert_eq!(back.t, state.t);
            assert_eq!(back.phi, state.phi);
            assert_eq!(back.pi, state.pi);
            assert_eq!(back.grid.nodes(), state.grid.nodes());
        }
    }

    #[test]
    fn manifest_lists_files_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "t\n1\n").unwrap();
        write_manifest(
            dir.path(),
            BTreeMap::new(),
            GridInfo::of(&RadialGrid::uniform(100, 8.0).unwrap()),
            "Completed",
            0.5,
            &["a.csv".to_string()],
        )
        .unwrap();
        let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["files"][0]["name"], "a.csv");
        assert_eq!(v["files"][0]["sha256"].as_str().unwrap().len(), 64);
    }
}
