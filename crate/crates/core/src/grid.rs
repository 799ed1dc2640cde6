//! Radial grids on `(0, R_max]` with quadrature weights and finite
//! difference stencils.
//!
//! The origin is excluded: grids are cell-centered with first node at
//! `h_in / 2`, and regularity of equivariant fields (`phi = O(r^k)`) enters
//! through the solver's odd ghost reflection rather than a node at `r = 0`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grading {
    Uniform { h: f64 },
    Geometric { ratio: f64 },
    TwoZone { h_in: f64, r_c: f64, growth: f64 },
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    grading: Grading,
    r_max: f64,
}

/// Fornberg finite-difference weights for derivatives `0..=m` of a function
/// known at `xs`, evaluated at `z`.
pub fn fd_weights(xs: &[f64], z: f64, m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

fn midpoint_weights(nodes: &[f64], left_edge: f64, right_edge: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let lo = if i == 0 { left_edge } else { 0.5 * (nodes[i - 1] + nodes[i]) };
        let hi = if i == n - 1 { right_edge } else { 0.5 * (nodes[i] + nodes[i + 1]) };
        w[i] = hi - lo;
    }
    w
}

impl RadialGrid {
    /// Cell-centered uniform grid: `r_i = (i + 1/2) h`, `h = r_max / n`.
    pub fn uniform(n: usize, r_max: f64) -> Result<Self> {
        if n < 8 || !(r_max > 0.0) {
            return Err(Error::Config(format!("bad uniform grid: n={n}, r_max={r_max}")));
        }
        let h = r_max / n as f64;
        let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let weights = vec![h; n];
        Ok(Self { nodes, weights, grading: Grading::Uniform { h }, r_max })
    }

    /// Log-spaced grid on `[r_min, r_max]`, used by the operator and
    /// coercivity suites which need many decades of resolution.
    pub fn geometric(n: usize, r_min: f64, r_max: f64) -> Result<Self> {
        if n < 8 || !(r_min > 0.0) || !(r_max > r_min) {
            return Err(Error::Config(format!(
                "bad geometric grid: n={n}, r_min={r_min}, r_max={r_max}"
            )));
        }
        let ratio = (r_max / r_min).powf(1.0 / (n - 1) as f64);
        let nodes: Vec<f64> = (0..n).map(|i| r_min * ratio.powi(i as i32)).collect();
        let weights = midpoint_weights(&nodes, r_min, r_max);
        Ok(Self { nodes, weights, grading: Grading::Geometric { ratio }, r_max })
    }

    /// Two-zone grid: cell-centered uniform spacing `h_in` up to `r_c`,
    /// then geometrically growing cells out to `r_max`, `n` nodes in total.
    pub fn two_zone(n: usize, h_in: f64, r_c: f64, r_max: f64) -> Result<Self> {
        if !(h_in > 0.0) || !(r_c > h_in) || !(r_max > r_c) {
            return Err(Error::Config(format!(
                "bad two-zone grid: h_in={h_in}, r_c={r_c}, r_max={r_max}"
            )));
        }
        let n_in = (r_c / h_in).round() as usize;
        if n_in < 4 || n_in + 8 > n {
            return Err(Error::Config(format!(
                "two-zone grid needs {n_in} inner nodes but only {n} total"
            )));
        }
        let n_out = n - n_in;
        let r_end = (n_in as f64 - 0.5) * h_in;
        let span = r_max - r_end;
        // choose growth g with h_in * sum_{m=1..n_out} g^m = span
        let sum = |g: f64| -> f64 {
            if (g - 1.0).abs() < 1e-14 {
                n_out as f64
            } else {
                g * (g.powi(n_out as i32) - 1.0) / (g - 1.0)
            }
        };
        let target = span / h_in;
        if sum(1.0) > target {
            return Err(Error::Config(
                "two-zone grid: too many nodes for the requested span".into(),
            ));
        }
        let (mut lo, mut hi) = (1.0, 2.0);
        while sum(hi) < target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sum(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let growth = 0.5 * (lo + hi);
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n_in {
            nodes.push((i as f64 + 0.5) * h_in);
        }
        let mut step = h_in;
        let mut r = r_end;
        for _ in 0..n_out {
            step *= growth;
            r += step;
            nodes.push(r);
        }
        let weights = midpoint_weights(&nodes, 0.0, r_max);
        Ok(Self { nodes, weights, grading: Grading::TwoZone { h_in, r_c, growth }, r_max })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
            .min(2.0 * self.nodes[0])
    }

    /// Spacing of the innermost cell.
    pub fn h_inner(&self) -> f64 {
        2.0 * self.nodes[0]
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    /// `int f r dr` by the midpoint rule over grid cells.
    pub fn integrate_rdr(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.weights[i] * self.nodes[i] * f[i];
        }
        acc
    }

    /// `int f r^3 dr` by the midpoint rule.
    pub fn integrate_r3dr(&self, f: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            let r = self.nodes[i];
            acc += self.weights[i] * r * r * r * f[i];
        }
        acc
    }

    /// `<f, g>` in `L^2(r dr)` on the grid.
    pub fn inner_rdr(&self, f: &[f64], g: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.weights[i] * self.nodes[i] * f[i] * g[i];
        }
        acc
    }

    fn deriv(&self, f: &[f64], order: usize, half_width: usize) -> Vec<f64> {
        let n = self.len();
        let width = 2 * half_width + 1;
        let stencil = width.max(order + 2);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let lo = if i < half_width {
                0
            } else if i + half_width >= n {
                n - stencil
            } else {
                i - half_width
            };
            let hi = (lo + stencil).min(n);
            let lo = hi - stencil;
            let w = fd_weights(&self.nodes[lo..hi], self.nodes[i], order);
            let mut acc = 0.0;
            for (j, &c) in w[order].iter().enumerate() {
                acc += c * f[lo + j];
            }
            out[i] = acc;
        }
        out
    }

    /// Second-order first derivative (3-point stencils, one-sided at edges).
    pub fn deriv1(&self, f: &[f64]) -> Vec<f64> {
        self.deriv(f, 1, 1)
    }

    /// Second derivative from 3-point interior stencils (4-point one-sided
    /// at the edges to keep second order there).
    pub fn deriv2(&self, f: &[f64]) -> Vec<f64> {
        self.deriv(f, 2, 1)
    }

    /// Fourth-order first derivative (5-point stencils) for diagnostics.
    pub fn deriv1_o4(&self, f: &[f64]) -> Vec<f64> {
        self.deriv(f, 1, 2)
    }

    /// Refine the inner zone by 2x (whole grid for uniform grids),
    /// used by the regridding policy.
    pub fn refine_inner(&self) -> Result<RadialGrid> {
        match self.grading {
            Grading::Uniform { .. } => RadialGrid::uniform(2 * self.len(), self.r_max),
            Grading::Geometric { .. } => {
                RadialGrid::geometric(2 * self.len(), self.nodes[0] / 2.0, self.r_max)
            }
            Grading::TwoZone { h_in, r_c, .. } => {
                let n_in_new = (r_c / (h_in / 2.0)).round() as usize;
                let n_in_old = (r_c / h_in).round() as usize;
                RadialGrid::two_zone(self.len() + (n_in_new - n_in_old), h_in / 2.0, r_c, self.r_max)
            }
        }
    }

    /// Double the resolution everywhere, for convergence studies.
    pub fn refine_all(&self) -> Result<RadialGrid> {
        match self.grading {
            Grading::Uniform { .. } => RadialGrid::uniform(2 * self.len(), self.r_max),
            Grading::Geometric { .. } => {
                RadialGrid::geometric(2 * self.len(), self.nodes[0], self.r_max)
            }
            Grading::TwoZone { h_in, r_c, .. } => {
                RadialGrid::two_zone(2 * self.len(), h_in / 2.0, r_c, self.r_max)
            }
        }
    }
}
