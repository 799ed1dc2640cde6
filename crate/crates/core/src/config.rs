//! Flat `key = value` run configuration.
//!
//! The format is a UTF-8 text file of `key = value` lines; `#` starts a
//! comment and blank lines are ignored. No nesting beyond dotted keys.

use crate::error::{Error, Result};
use crate::evolve::{EvolveConfig, RegridPolicy};
use crate::grid::RadialGrid;
use crate::profiles::HomotopyClass;
use std::collections::BTreeMap;

pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn require<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{value}`")))
}

/// Configuration for one `simulate` run.
#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub k: u32,
    pub epsilon: f64,
    pub c0: f64,
    pub grid_n: usize,
    /// Two-zone inner spacing and crossover; absent means a uniform grid.
    pub grid_hin: Option<f64>,
    pub grid_rc: Option<f64>,
    pub grid_rmax: f64,
    pub cfl: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
    pub regrid_depth: u32,
    pub out_dir: String,
}

impl SimulateConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let opt = |key: &str| -> Result<Option<f64>> {
            map.get(key).map(|v| parse(key, v)).transpose()
        };
        Ok(Self {
            k: parse("k", require(map, "k")?)?,
            epsilon: parse("epsilon", require(map, "epsilon")?)?,
            c0: parse("c0", require(map, "c0")?)?,
            grid_n: parse("grid.N", require(map, "grid.N")?)?,
            grid_hin: opt("grid.hin")?,
            grid_rc: opt("grid.rc")?,
            grid_rmax: parse("grid.Rmax", require(map, "grid.Rmax")?)?,
            cfl: parse("cfl", require(map, "cfl")?)?,
            t_end: parse("T_end", require(map, "T_end")?)?,
            snapshot_stride: parse("snapshot_stride", require(map, "snapshot_stride")?)?,
            regrid_depth: map
                .get("regrid.depth")
                .map(|v| parse("regrid.depth", v))
                .transpose()?
                .unwrap_or(0),
            out_dir: require(map, "out_dir")?.to_string(),
        })
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::from_map(&parse_flat(text)?)
    }

    pub fn homotopy_class(&self) -> Result<HomotopyClass> {
        HomotopyClass::new(self.k)
    }

    pub fn build_grid(&self) -> Result<RadialGrid> {
        match (self.grid_hin, self.grid_rc) {
            (Some(hin), Some(rc)) => RadialGrid::two_zone(self.grid_n, hin, rc, self.grid_rmax),
            (None, None) => RadialGrid::uniform(self.grid_n, self.grid_rmax),
            _ => Err(Error::Config(
                "grid.hin and grid.rc must be given together (two-zone) or both omitted (uniform)"
                    .into(),
            )),
        }
    }

    pub fn evolve_config(&self) -> EvolveConfig {
        EvolveConfig {
            cfl: self.cfl,
            t_end: self.t_end,
            snapshot_stride: self.snapshot_stride,
            regrid: if self.regrid_depth > 0 {
                RegridPolicy::Threshold { depth: self.regrid_depth }
            } else {
                RegridPolicy::None
            },
            gradient_cap: None,
        }
    }
}

/// Sweep configuration: `k`, `epsilon`, and `grid.N` may be
/// comma-separated lists; the sweep runs their Cartesian product.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub ks: Vec<u32>,
    pub epsilons: Vec<f64>,
    pub grid_ns: Vec<usize>,
    pub base: BTreeMap<String, String>,
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl SweepConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let map = parse_flat(text)?;
        Ok(Self {
            ks: parse_list("k", require(&map, "k")?)?,
            epsilons: parse_list("epsilon", require(&map, "epsilon")?)?,
            grid_ns: parse_list("grid.N", require(&map, "grid.N")?)?,
            base: map,
        })
    }

    /// One flat config per Cartesian-product point.
    pub fn points(&self) -> Vec<BTreeMap<String, String>> {
        let mut out = Vec::new();
        for &k in &self.ks {
            for &eps in &self.epsilons {
                for &n in &self.grid_ns {
                    let mut m = self.base.clone();
                    m.insert("k".into(), k.to_string());
                    m.insert("epsilon".into(), format!("{eps}"));
                    m.insert("grid.N".into(), n.to_string());
                    out.push(m);
                }
            }
        }
        out
    }
}
