//! Leapfrog solver for the reduced k-equivariant wave-map equation
//!
//! ```text
//! d_t^2 phi = (d_r^2 + r^{-1} d_r) phi - k^2 sin(2 phi) / (2 r^2)
//! ```
//!
//! on a cell-centered radial grid. The origin condition `phi(0) = 0` enters
//! through the odd ghost reflection `phi(-r_1) = -phi(r_1)`; the outer
//! boundary is Dirichlet-frozen and must stay causally disconnected from
//! the diagnostics window.

use crate::error::{Error, Result};
use crate::functionals;
use crate::grid::{fd_weights, Grading, RadialGrid};
use crate::profiles::{HomotopyClass, SolitonProfile};

/// Snapshot of the field at one instant.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub t: f64,
    /// Angle `phi` on the grid nodes.
    pub phi: Vec<f64>,
    /// Conjugate momentum `d_t phi`.
    pub pi: Vec<f64>,
    pub grid: RadialGrid,
    pub k: HomotopyClass,
}

impl FieldState {
    pub fn new(t: f64, phi: Vec<f64>, pi: Vec<f64>, grid: RadialGrid, k: HomotopyClass) -> Self {
        assert_eq!(phi.len(), grid.len());
        assert_eq!(pi.len(), grid.len());
        Self { t, phi, pi, grid, k }
    }

    /// Static soliton data `phi = I_lambda`, `pi = 0`.
    pub fn soliton(k: HomotopyClass, lambda: f64, grid: RadialGrid) -> Result<Self> {
        let p = SolitonProfile::new(k, lambda)?;
        let phi = grid.sample(|r| p.eval_i(r));
        let pi = vec![0.0; grid.len()];
        Ok(Self::new(0.0, phi, pi, grid, k))
    }

    pub fn sup_dphi(&self) -> f64 {
        self.grid
            .deriv1(&self.phi)
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// `sup_r k |sin phi| / r`, the other component of the gradient bound.
    pub fn sup_j_over_r(&self) -> f64 {
        let k = self.k.k_f64();
        self.grid
            .nodes()
            .iter()
            .zip(&self.phi)
            .fold(0.0f64, |m, (&r, &p)| m.max(k * p.sin().abs() / r))
    }

    /// Smallest `C` with `|d_r phi| <= C r` over `r <= 1` (admissibility).
    pub fn admissibility_constant(&self) -> f64 {
        let d = self.grid.deriv1(&self.phi);
        self.grid
            .nodes()
            .iter()
            .zip(&d)
            .take_while(|(&r, _)| r <= 1.0)
            .fold(0.0f64, |m, (&r, &dp)| m.max(dp.abs() / r))
    }
}

/// Default diagnostic grid: uniform cell-centered, `N = 8001` on `(0, 16]`.
pub fn default_grid() -> Result<RadialGrid> {
    RadialGrid::uniform(8001, 16.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegridPolicy {
    None,
    /// Refine the inner zone 2x whenever `sup|d_r phi| * h_in` exceeds 0.1,
    /// at most `depth` times; stop resolution-exhausted beyond that.
    Threshold { depth: u32 },
}

#[derive(Debug, Clone)]
pub struct EvolveConfig {
    /// Safety factor in (0, 1] on the linear stability limit of the
    /// explicit step (grid Laplacian plus the `k^2/r^2` potential).
    pub cfl: f64,
    pub t_end: f64,
    /// Diagnostics and snapshots every this many steps.
    pub snapshot_stride: usize,
    pub regrid: RegridPolicy,
    /// Stop once `sup|d_r phi|` exceeds this; defaults to `10^3 / h_in`.
    pub gradient_cap: Option<f64>,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            t_end: 1.0,
            snapshot_stride: 100,
            regrid: RegridPolicy::None,
            gradient_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum StopStatus {
    Completed,
    /// Concentration outran the grid: last resolvable state retained.
    ResolutionExhausted,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub energy: f64,
    pub defect: f64,
    pub sup_dphi: f64,
    pub sup_j: f64,
}

#[derive(Debug)]
pub struct RunResult {
    pub snapshots: Vec<FieldState>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub status: StopStatus,
    pub regrid_count: u32,
}

/// Precomputed second-order rows of the radial Laplacian
/// `d_r^2 + r^{-1} d_r` with the odd ghost at the origin.
struct LaplacianRows {
    // row i couples (phi[i-1], phi[i], phi[i+1]); row 0 encodes the ghost
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

fn build_rows(grid: &RadialGrid) -> Result<LaplacianRows> {
    match grid.grading() {
        Grading::Uniform { .. } | Grading::TwoZone { .. } => {}
        Grading::Geometric { .. } => {
            return Err(Error::Config(
                "time evolution requires a cell-centered (uniform or two-zone) grid".into(),
            ))
        }
    }
    let nodes = grid.nodes();
    let n = nodes.len();
    let h = grid.h_inner();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    // node 0 with ghost phi(-r_0) = -phi(r_0); cell-centering makes the
    // combined row annihilate constants exactly
    diag[0] = -2.0 / (h * h);
    upper[0] = 2.0 / (h * h);
    for i in 1..n - 1 {
        let xs = [nodes[i - 1], nodes[i], nodes[i + 1]];
        let w = fd_weights(&xs, nodes[i], 2);
        let inv_r = 1.0 / nodes[i];
        lower[i] = w[2][0] + inv_r * w[1][0];
        diag[i] = w[2][1] + inv_r * w[1][1];
        upper[i] = w[2][2] + inv_r * w[1][2];
    }
    // outer node is Dirichlet-frozen; its row is never used
    Ok(LaplacianRows { lower, diag, upper })
}

fn acceleration(rows: &LaplacianRows, grid: &RadialGrid, k: f64, phi: &[f64], out: &mut [f64]) {
    let n = phi.len();
    let nodes = grid.nodes();
    out[0] = rows.diag[0] * phi[0]
        + rows.upper[0] * phi[1]
        - k * k * (2.0 * phi[0]).sin() / (2.0 * nodes[0] * nodes[0]);
    for i in 1..n - 1 {
        let lap = rows.lower[i] * phi[i - 1] + rows.diag[i] * phi[i] + rows.upper[i] * phi[i + 1];
        out[i] = lap - k * k * (2.0 * phi[i]).sin() / (2.0 * nodes[i] * nodes[i]);
    }
    out[n - 1] = 0.0;
}

/// Largest stable explicit step: `2 / omega_max` with
/// `omega^2 = 4/h_i^2 + k^2/r_i^2` per node.
pub fn stable_dt(grid: &RadialGrid, k: HomotopyClass) -> f64 {
    let kf = k.k_f64();
    let nodes = grid.nodes();
    let n = nodes.len();
    let mut dt = f64::INFINITY;
    for i in 0..n {
        let h = if i == 0 {
            nodes[1] - nodes[0]
        } else if i == n - 1 {
            nodes[n - 1] - nodes[n - 2]
        } else {
            (nodes[i] - nodes[i - 1]).min(nodes[i + 1] - nodes[i])
        };
        let omega2 = 4.0 / (h * h) + kf * kf / (nodes[i] * nodes[i]);
        dt = dt.min(2.0 / omega2.sqrt());
    }
    dt
}

/// Right-hand side of the reduced wave-map equation on the state's grid.
pub fn rhs(state: &FieldState) -> Result<Vec<f64>> {
    let rows = build_rows(&state.grid)?;
    let mut out = vec![0.0; state.grid.len()];
    acceleration(&rows, &state.grid, state.k.k_f64(), &state.phi, &mut out);
    Ok(out)
}

/// One leapfrog (kick-drift-kick) step; time reversible, second order.
/// `dt` may be negative (reverse stepping).
pub fn step(state: &FieldState, dt: f64) -> Result<FieldState> {
    let limit = stable_dt(&state.grid, state.k);
    if dt.abs() > limit {
        return Err(Error::CflViolation { dt: dt.abs(), limit });
    }
    let rows = build_rows(&state.grid)?;
    let n = state.grid.len();
    let kf = state.k.k_f64();
    let mut acc = vec![0.0; n];
    acceleration(&rows, &state.grid, kf, &state.phi, &mut acc);
    let mut phi = state.phi.clone();
    let mut pi = state.pi.clone();
    for i in 0..n - 1 {
        pi[i] += 0.5 * dt * acc[i];
        phi[i] += dt * pi[i];
    }
    acceleration(&rows, &state.grid, kf, &phi, &mut acc);
    for i in 0..n - 1 {
        pi[i] += 0.5 * dt * acc[i];
    }
    for (i, (&p, &q)) in phi.iter().zip(pi.iter()).enumerate() {
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::NanDetected { t: state.t + dt, node: i, r: state.grid.nodes()[i] });
        }
    }
    Ok(FieldState::new(state.t + dt, phi, pi, state.grid.clone(), state.k))
}

/// Fourth-order (4-point Lagrange) interpolation of grid data onto new nodes.
fn interpolate(old: &RadialGrid, values: &[f64], new_nodes: &[f64]) -> Vec<f64> {
    let xs = old.nodes();
    let n = xs.len();
    new_nodes
        .iter()
        .map(|&x| {
            let mut j = xs.partition_point(|&v| v < x);
            j = j.clamp(2, n - 2);
            let lo = j - 2;
            let w = fd_weights(&xs[lo..lo + 4], x, 0);
            (0..4).map(|m| w[0][m] * values[lo + m]).sum()
        })
        .collect()
}

/// Evolve to `t_end` or until the concentration outruns the grid.
pub fn run(initial: &FieldState, cfg: &EvolveConfig) -> Result<RunResult> {
    if !(cfg.cfl > 0.0 && cfg.cfl <= 1.0) {
        return Err(Error::Config(format!("cfl = {} outside (0, 1]", cfg.cfl)));
    }
    if initial.grid.r_max() < cfg.t_end {
        return Err(Error::CausalBoundary {
            r_max: initial.grid.r_max(),
            needed: cfg.t_end,
        });
    }
    functionals::energy(initial)?; // finiteness / coarseness gate

    let mut state = initial.clone();
    let mut rows = build_rows(&state.grid)?;
    let mut dt = cfg.cfl * stable_dt(&state.grid, state.k);
    let kf = state.k.k_f64();
    let mut acc = vec![0.0; state.grid.len()];
    acceleration(&rows, &state.grid, kf, &state.phi, &mut acc);

    let mut snapshots = vec![state.clone()];
    let mut diagnostics = Vec::new();
    let mut status = StopStatus::Completed;
    let mut regrid_count = 0u32;

    let record = |s: &FieldState, diags: &mut Vec<DiagnosticsRow>| -> Result<()> {
        diags.push(DiagnosticsRow {
            t: s.t,
            energy: functionals::energy(s)?,
            defect: functionals::bogomolny_defect(s)?,
            sup_dphi: s.sup_dphi(),
            sup_j: s.sup_j_over_r(),
        });
        Ok(())
    };
    record(&state, &mut diagnostics)?;

    let mut steps_since_snapshot = 0usize;
    while state.t < cfg.t_end - 0.5 * dt {
        let n = state.grid.len();
        for i in 0..n - 1 {
            state.pi[i] += 0.5 * dt * acc[i];
            state.phi[i] += dt * state.pi[i];
        }
        acceleration(&rows, &state.grid, kf, &state.phi, &mut acc);
        for i in 0..n - 1 {
            state.pi[i] += 0.5 * dt * acc[i];
        }
        state.t += dt;
        steps_since_snapshot += 1;

        if steps_since_snapshot >= cfg.snapshot_stride {
            steps_since_snapshot = 0;
            for (i, &p) in state.phi.iter().enumerate() {
                if !p.is_finite() {
                    return Err(Error::NanDetected { t: state.t, node: i, r: state.grid.nodes()[i] });
                }
            }
            let sup = state.sup_dphi();
            let h_in = state.grid.h_inner();
            let cap = cfg.gradient_cap.unwrap_or(1e3 / h_in);

            // regrid before the gradient outruns the inner cells
            if sup * h_in > 0.1 {
                let depth = match cfg.regrid {
                    RegridPolicy::None => 0,
                    RegridPolicy::Threshold { depth } => depth,
                };
                if regrid_count < depth {
                    let new_grid = state.grid.refine_inner()?;
                    let phi = interpolate(&state.grid, &state.phi, new_grid.nodes());
                    let pi = interpolate(&state.grid, &state.pi, new_grid.nodes());
                    state = FieldState::new(state.t, phi, pi, new_grid, state.k);
                    rows = build_rows(&state.grid)?;
                    dt = cfg.cfl * stable_dt(&state.grid, state.k);
                    acc = vec![0.0; state.grid.len()];
                    acceleration(&rows, &state.grid, kf, &state.phi, &mut acc);
                    regrid_count += 1;
                } else {
                    status = StopStatus::ResolutionExhausted;
                }
            }
            if sup > cap {
                status = StopStatus::ResolutionExhausted;
            }
            record(&state, &mut diagnostics)?;
            snapshots.push(state.clone());
            if status == StopStatus::ResolutionExhausted {
                break;
            }
        }
    }
    if status == StopStatus::Completed && *snapshots.last().map(|s| &s.t).unwrap_or(&-1.0) < state.t {
        record(&state, &mut diagnostics)?;
        snapshots.push(state.clone());
    }
    Ok(RunResult { snapshots, diagnostics, status, regrid_count })
}
