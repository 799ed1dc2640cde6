//! Discretized linearized operators and their verification suite.
//!
//! The linearization around the soliton factorizes as `H = A* A` with
//!
//! ```text
//! A_lambda  = -d_r + (k/r) cos I_lambda
//! A*_lambda =  d_r + 1/r + (k/r) cos I_lambda
//! H_lambda  = -d_r^2 - r^{-1} d_r + (k^2/r^2) cos 2I_lambda
//! H~_lambda = -d_r^2 - r^{-1} d_r + (k^2+1)/r^2 + (2k/r^2) cos I_lambda
//! ```
//!
//! and satisfies the intertwining `A H = H~ A` with kernel `A J_lambda = 0`.
//! All identities are discretized independently and their residuals
//! measured, rather than imposed by construction.

use crate::error::{Error, Result};
use crate::grid::{fd_weights, RadialGrid};
use crate::profiles::{HomotopyClass, SolitonProfile};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    A,
    Astar,
    H,
    Htilde,
    QPotential,
    VPotential,
}

/// Banded second-order discretization of one operator on a fixed grid.
/// Immutable after construction; `apply` is reentrant.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub kind: OperatorKind,
    pub k: HomotopyClass,
    pub lambda: f64,
    grid: RadialGrid,
    /// Per row: start column and three stencil coefficients.
    rows: Vec<(usize, [f64; 3])>,
}

impl DiscreteOperator {
    pub fn new(kind: OperatorKind, k: HomotopyClass, lambda: f64, grid: &RadialGrid) -> Result<Self> {
        let profile = SolitonProfile::new(k, lambda)?;
        let nodes = grid.nodes();
        let n = nodes.len();
        assert!(n >= 3, "operator grid needs at least 3 nodes");
        let kf = k.k_f64();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let s = i.saturating_sub(1).min(n - 3);
            let xs = [nodes[s], nodes[s + 1], nodes[s + 2]];
            let w = fd_weights(&xs, nodes[i], 2);
            let r = nodes[i];
            let trig = profile.eval_trig_composites(r);
            let mut row = [0.0; 3];
            match kind {
                OperatorKind::A => {
                    for m in 0..3 {
                        row[m] = -w[1][m];
                    }
                    row[i - s] += kf / r * trig.cos_i;
                }
                OperatorKind::Astar => {
                    for m in 0..3 {
                        row[m] = w[1][m];
                    }
                    row[i - s] += 1.0 / r + kf / r * trig.cos_i;
                }
                OperatorKind::H => {
                    for m in 0..3 {
                        row[m] = -w[2][m] - w[1][m] / r;
                    }
                    row[i - s] += kf * kf / (r * r) * trig.cos_2i;
                }
                OperatorKind::Htilde => {
                    for m in 0..3 {
                        row[m] = -w[2][m] - w[1][m] / r;
                    }
                    row[i - s] +=
                        (kf * kf + 1.0) / (r * r) + 2.0 * kf / (r * r) * trig.cos_i;
                }
                OperatorKind::QPotential => {
                    row[i - s] = kf * kf / (r * r) * trig.cos_2i;
                }
                OperatorKind::VPotential => {
                    row[i - s] = (kf * kf + 1.0) / (r * r) + 2.0 * kf / (r * r) * trig.cos_i;
                }
            }
            rows.push((s, row));
        }
        Ok(Self { kind, k, lambda, grid: grid.clone(), rows })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn apply(&self, psi: &[f64]) -> Result<Vec<f64>> {
        if psi.len() != self.grid.len() {
            return Err(Error::GridMismatch { expected: self.grid.len(), got: psi.len() });
        }
        Ok(self
            .rows
            .iter()
            .map(|&(s, row)| row[0] * psi[s] + row[1] * psi[s + 1] + row[2] * psi[s + 2])
            .collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialMargin {
    pub min_margin: f64,
    pub worst_node: usize,
    pub worst_r: f64,
    pub holds: bool,
}

/// Pointwise repulsivity checks on `V_lambda` (space and, given
/// `lambda_dot >= 0`, time).
#[derive(Debug, Clone, Serialize)]
pub struct PotentialReport {
    pub k: u32,
    pub lambda: f64,
    /// `V - (k-1)^2/r^2 >= 0`, scaled by `r^2`.
    pub positivity: PotentialMargin,
    /// `-d_r V - 2(k-1)^2/r^3 >= 0` (analytic derivative), scaled by `r^3`.
    pub space_repulsivity: PotentialMargin,
    /// min over nodes of `-d_t V = (lambda_dot/lambda)(2k^2/r^2) sin^2 I`,
    /// scaled by `r^2`.
    pub time_repulsivity: PotentialMargin,
}

pub fn verify_potential_properties(
    k: HomotopyClass,
    lambda: f64,
    lambda_dot: f64,
    grid: &RadialGrid,
) -> Result<PotentialReport> {
    let p = SolitonProfile::new(k, lambda)?;
    let kf = k.k_f64();
    let mut pos = (f64::INFINITY, 0usize);
    let mut rep = (f64::INFINITY, 0usize);
    let mut trep = (f64::INFINITY, 0usize);
    for (i, &r) in grid.nodes().iter().enumerate() {
        let trig = p.eval_trig_composites(r);
        let cos_i = trig.cos_i;
        let sin2 = 1.0 - cos_i * cos_i;
        // r^2 (V - (k-1)^2/r^2) = 2k (1 + cos I)
        let m_pos = 2.0 * kf * (1.0 + cos_i);
        // r^3 (-d_r V) = 2(k^2+1) + 4k cos I + 2 k^2 sin^2 I
        let m_rep = 2.0 * (kf * kf + 1.0) + 4.0 * kf * cos_i + 2.0 * kf * kf * sin2
            - 2.0 * (kf - 1.0) * (kf - 1.0);
        // r^2 (-d_t V) = (lambda_dot/lambda) 2 k^2 sin^2 I
        let m_trep = lambda_dot / lambda * 2.0 * kf * kf * sin2;
        if m_pos < pos.0 {
            pos = (m_pos, i);
        }
        if m_rep < rep.0 {
            rep = (m_rep, i);
        }
        if m_trep < trep.0 {
            trep = (m_trep, i);
        }
    }
    let wrap = |(m, i): (f64, usize)| PotentialMargin {
        min_margin: m,
        worst_node: i,
        worst_r: grid.nodes()[i],
        holds: m >= -1e-14,
    };
    Ok(PotentialReport {
        k: k.k(),
        lambda,
        positivity: wrap(pos),
        space_repulsivity: wrap(rep),
        time_repulsivity: wrap(trep),
    })
}

/// Max-norm residual of the inhomogeneous identity `H K = -(J + r d_r J)`
/// at `lambda = 1`, where `K = r^2 J / 4`, over interior nodes.
pub fn residual_hk(k: HomotopyClass, grid: &RadialGrid) -> Result<f64> {
    let p = SolitonProfile::new(k, 1.0)?;
    let h_op = DiscreteOperator::new(OperatorKind::H, k, 1.0, grid)?;
    let kvals = grid.sample(|r| p.eval_k_fn(r));
    let hk = h_op.apply(&kvals)?;
    let mut worst = 0.0f64;
    for (i, &r) in grid.nodes().iter().enumerate().skip(2) {
        if i + 2 >= grid.len() {
            break;
        }
        let target = -(p.eval_j(r) + p.eval_r_dr_j(r));
        worst = worst.max((hk[i] - target).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoercivityVariant {
    /// `int (A u)^2 r dr  /  int [(d_r u)^2 + u^2/r^2] r dr`
    CApp1,
    /// weighted, `(A u)^2/r^2` against `u^2/r^4`
    CApp2,
    /// weighted, `(A u)^2/r^3` against `u^2/r^5`
    CApp3,
}

/// Min over the sample of RHS/LHS for the chosen inequality; strictly
/// positive values are evidence of the coercivity constant. Weighted
/// variants use `(lambda r)^delta / (1+r)^delta`.
pub fn coercivity_ratio(
    k: HomotopyClass,
    lambda: f64,
    sample: &[Vec<f64>],
    variant: CoercivityVariant,
    delta: f64,
    grid: &RadialGrid,
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let a_op = DiscreteOperator::new(OperatorKind::A, k, lambda, grid)?;
    let nodes = grid.nodes();
    let n = nodes.len();
    let mut min_ratio = f64::INFINITY;
    for u in sample {
        let au = a_op.apply(u)?;
        let du = grid.deriv1(u);
        let mut lhs = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let r = nodes[i];
            match variant {
                CoercivityVariant::CApp1 => {
                    lhs[i] = du[i] * du[i] + u[i] * u[i] / (r * r);
                    rhs[i] = au[i] * au[i];
                }
                CoercivityVariant::CApp2 => {
                    let w = (lambda * r).powf(delta) / (1.0 + r).powf(delta);
                    lhs[i] = w * u[i] * u[i] / r.powi(4);
                    rhs[i] = w * au[i] * au[i] / (r * r);
                }
                CoercivityVariant::CApp3 => {
                    let w = (lambda * r).powf(delta) / (1.0 + r).powf(delta);
                    lhs[i] = w * u[i] * u[i] / r.powi(5);
                    rhs[i] = w * au[i] * au[i] / r.powi(3);
                }
            }
        }
        let l = grid.integrate_rdr(&lhs);
        let r = grid.integrate_rdr(&rhs);
        if l > 0.0 {
            min_ratio = min_ratio.min(r / l);
        }
    }
    Ok(min_ratio)
}

/// Deterministic test family for the coercivity checks: sums of at most 8
/// Gaussian bumps with centers log-uniform in `[1e-2, 1e2]`, damped to
/// `O(r^4)` at the origin and projected orthogonal to `J_lambda` in the
/// `r dr` pairing.
pub fn coercivity_sample(
    k: HomotopyClass,
    lambda: f64,
    count: usize,
    seed: u64,
    grid: &RadialGrid,
) -> Result<Vec<Vec<f64>>> {
    let p = SolitonProfile::new(k, lambda)?;
    let j = grid.sample(|r| p.eval_j(r));
    let jj = grid.inner_rdr(&j, &j);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = grid.nodes();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let n_bumps = rng.gen_range(1..=8);
        let bumps: Vec<(f64, f64, f64)> = (0..n_bumps)
            .map(|_| {
                let c = 10f64.powf(rng.gen_range(-2.0..2.0));
                let w = c * rng.gen_range(0.2..1.0);
                let a = rng.gen_range(-1.0..1.0f64);
                (a, c, w)
            })
            .collect();
        let mut u: Vec<f64> = nodes
            .iter()
            .map(|&r| {
                let env = (r * r / (1.0 + r * r)).powi(2);
                env * bumps
                    .iter()
                    .map(|&(a, c, w)| a * (-((r - c) / w).powi(2)).exp())
                    .sum::<f64>()
            })
            .collect();
        let beta = grid.inner_rdr(&u, &j) / jj;
        for (ui, &ji) in u.iter_mut().zip(&j) {
            *ui -= beta * ji;
        }
        out.push(u);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualPair {
    pub residuals: Vec<f64>,
    /// Observed convergence orders between successive refinements.
    pub orders: Vec<f64>,
}

/// Residuals and margins for the `verify-operators` report, measured at
/// `refine + 1` uniform refinement levels of the given grid.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorReport {
    pub k: u32,
    pub lambda: f64,
    pub kernel: ResidualPair,
    pub factorization: ResidualPair,
    pub intertwining: ResidualPair,
    pub self_adjointness: ResidualPair,
    pub residual_hk: ResidualPair,
    pub potentials: PotentialReport,
    pub coercivity: CoercivityMargins,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityMargins {
    pub delta: f64,
    pub c_app1: f64,
    pub c_app2: f64,
    pub c_app3: f64,
}

fn max_abs_diff(a: &[f64], b: &[f64], skip: usize) -> f64 {
    let n = a.len();
    a.iter()
        .zip(b)
        .enumerate()
        .skip(skip)
        .take(n - 2 * skip)
        .fold(0.0f64, |m, (_, (&x, &y))| m.max((x - y).abs()))
}

fn orders_of(res: &[f64]) -> Vec<f64> {
    res.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

pub fn verify_report(
    k: HomotopyClass,
    lambda: f64,
    grid: &RadialGrid,
    refine: usize,
) -> Result<OperatorReport> {
    let p = SolitonProfile::new(k, lambda)?;
    let mut kernel = Vec::new();
    let mut fact = Vec::new();
    let mut inter = Vec::new();
    let mut selfadj = Vec::new();
    let mut hk = Vec::new();
    let mut g = grid.clone();
    for _ in 0..=refine {
        let a = DiscreteOperator::new(OperatorKind::A, k, lambda, &g)?;
        let astar = DiscreteOperator::new(OperatorKind::Astar, k, lambda, &g)?;
        let h = DiscreteOperator::new(OperatorKind::H, k, lambda, &g)?;
        let ht = DiscreteOperator::new(OperatorKind::Htilde, k, lambda, &g)?;

        let j = g.sample(|r| p.eval_j(r));
        let sup_j = j.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        kernel.push(max_abs_diff(&a.apply(&j)?, &vec![0.0; g.len()], 1) / sup_j);

        let test = g.sample(|r| r * r * (-r).exp());
        fact.push(max_abs_diff(&h.apply(&test)?, &astar.apply(&a.apply(&test)?)?, 2));
        inter.push(max_abs_diff(&a.apply(&h.apply(&test)?)?, &ht.apply(&a.apply(&test)?)?, 2));

        let chi = g.sample(|r| r * r * (-2.0 * (r - 1.0) * (r - 1.0)).exp());
        let lhs = g.inner_rdr(&h.apply(&test)?, &chi);
        let rhs = g.inner_rdr(&test, &h.apply(&chi)?);
        selfadj.push((lhs - rhs).abs());

        hk.push(residual_hk(k, &g)?);
        if kernel.len() <= refine {
            g = g.refine_all()?;
        }
    }

    let cgrid = RadialGrid::geometric(3000, 1e-4, 1e3)?;
    let sample = coercivity_sample(k, lambda, 200, 0x5eed, &cgrid)?;
    let delta = 0.1;
    let coercivity = CoercivityMargins {
        delta,
        c_app1: coercivity_ratio(k, lambda, &sample, CoercivityVariant::CApp1, delta, &cgrid)?,
        c_app2: coercivity_ratio(k, lambda, &sample, CoercivityVariant::CApp2, delta, &cgrid)?,
        c_app3: coercivity_ratio(k, lambda, &sample, CoercivityVariant::CApp3, delta, &cgrid)?,
    };

    Ok(OperatorReport {
        k: k.k(),
        lambda,
        kernel: ResidualPair { orders: orders_of(&kernel), residuals: kernel },
        factorization: ResidualPair { orders: orders_of(&fact), residuals: fact },
        intertwining: ResidualPair { orders: orders_of(&inter), residuals: inter },
        self_adjointness: ResidualPair { orders: orders_of(&selfadj), residuals: selfadj },
        residual_hk: ResidualPair { orders: orders_of(&hk), residuals: hk },
        potentials: verify_potential_properties(k, lambda, 0.0, grid)?,
        coercivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k4() -> HomotopyClass {
        HomotopyClass::new(4).unwrap()
    }

    fn test_grid(n: usize) -> RadialGrid {
        RadialGrid::uniform(n, 12.0).unwrap()
    }

    #[test]
    fn kernel_residual_second_order() {
        let res = |n: usize| {
            let g = test_grid(n);
            let p = SolitonProfile::new(k4(), 1.0).unwrap();
            let a = DiscreteOperator::new(OperatorKind::A, k4(), 1.0, &g).unwrap();
            let j = g.sample(|r| p.eval_j(r));
            a.apply(&j)
                .unwrap()
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()))
        };
        let r1 = res(600);
        let r2 = res(1200);
        assert!(r1 < 0.1, "coarse residual {r1:e}");
        let order = (r1 / r2).log2();
        assert!(order > 1.7, "observed order {order:.2}");
    }

    #[test]
    fn kernel_scales_with_lambda() {
        // rescaling the grid by 1/lambda reproduces the residual up to the
        // exact factor lambda carried by the operator itself
        let rel = |lambda: f64| {
            let g = RadialGrid::uniform(800, 12.0 / lambda).unwrap();
            let p = SolitonProfile::new(k4(), lambda).unwrap();
            let a = DiscreteOperator::new(OperatorKind::A, k4(), lambda, &g).unwrap();
            let j = g.sample(|r| p.eval_j(r));
            let sup = j.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            a.apply(&j)
                .unwrap()
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()))
                / sup
        };
        let r1 = rel(1.0);
        let r2 = rel(4.0);
        assert!((4.0 * r1 / r2 - 1.0).abs() < 1e-6, "{r1:e} vs {r2:e}");
    }

    fn max_in_window(a: &[f64], b: &[f64], g: &RadialGrid, r_lo: f64, r_hi: f64) -> f64 {
        g.nodes()
            .iter()
            .enumerate()
            .filter(|(_, &r)| r >= r_lo && r <= r_hi)
            .fold(0.0f64, |m, (i, _)| m.max((a[i] - b[i]).abs()))
    }

    #[test]
    fn factorization_and_intertwining_second_order() {
        // composed stencils lose an order only at r = O(h) where the 1/r
        // multipliers amplify the truncation error; convergence is measured
        // on a fixed physical window
        let residuals = |n: usize| {
            let g = test_grid(n);
            let a = DiscreteOperator::new(OperatorKind::A, k4(), 1.0, &g).unwrap();
            let astar = DiscreteOperator::new(OperatorKind::Astar, k4(), 1.0, &g).unwrap();
            let h = DiscreteOperator::new(OperatorKind::H, k4(), 1.0, &g).unwrap();
            let ht = DiscreteOperator::new(OperatorKind::Htilde, k4(), 1.0, &g).unwrap();
            let test = g.sample(|r| r * r * (-r).exp());
            let f = max_in_window(
                &h.apply(&test).unwrap(),
                &astar.apply(&a.apply(&test).unwrap()).unwrap(),
                &g,
                0.1,
                11.5,
            );
            let i = max_in_window(
                &a.apply(&h.apply(&test).unwrap()).unwrap(),
                &ht.apply(&a.apply(&test).unwrap()).unwrap(),
                &g,
                0.1,
                11.5,
            );
            (f, i)
        };
        let (f1, i1) = residuals(600);
        let (f2, i2) = residuals(1200);
        assert!((f1 / f2).log2() > 1.7, "factorization order {:.2}", (f1 / f2).log2());
        assert!((i1 / i2).log2() > 1.7, "intertwining order {:.2}", (i1 / i2).log2());
    }

    #[test]
    fn self_adjointness_of_h() {
        // on a uniform interior the discretization errors cancel almost
        // entirely; the defect sits far below the C h^2 envelope
        let g = test_grid(600);
        let h = DiscreteOperator::new(OperatorKind::H, k4(), 1.0, &g).unwrap();
        let psi = g.sample(|r| r * r * (-(r - 2.0) * (r - 2.0) * 4.0).exp());
        let chi = g.sample(|r| r * r * (-(r - 3.0) * (r - 3.0) * 4.0).exp());
        let defect = (g.inner_rdr(&h.apply(&psi).unwrap(), &chi)
            - g.inner_rdr(&psi, &h.apply(&chi).unwrap()))
        .abs();
        let norm = g.inner_rdr(&psi, &psi).sqrt() * g.inner_rdr(&chi, &chi).sqrt();
        assert!(defect <= 1e-9 * norm.max(1.0), "defect {defect:e}");
    }

    #[test]
    fn residual_hk_converges_at_second_order() {
        for k in [4u32, 6] {
            let kc = HomotopyClass::new(k).unwrap();
            let g1 = RadialGrid::two_zone(4001, 0.0015, 2.0, 1000.0).unwrap();
            let g2 = g1.refine_all().unwrap();
            let r1 = residual_hk(kc, &g1).unwrap();
            let r2 = residual_hk(kc, &g2).unwrap();
            if k == 4 {
                let p = SolitonProfile::new(kc, 1.0).unwrap();
                let sup_j = (0..400).map(|i| p.eval_j(i as f64 * 0.01)).fold(0.0f64, f64::max);
                assert!(r1 < 1e-4 * sup_j, "k={k}: residual {r1:e}");
            }
            let ratio = r1 / r2;
            assert!((3.2..=4.8).contains(&ratio), "k={k}: refinement ratio {ratio:.2}");
        }
    }

    #[test]
    fn potential_margins_nonnegative() {
        let g = RadialGrid::geometric(2000, 1e-3, 1e3).unwrap();
        for k in [2u32, 4] {
            let kc = HomotopyClass::new(k).unwrap();
            let rep = verify_potential_properties(kc, 1.0, 0.5, &g).unwrap();
            assert!(rep.positivity.holds, "k={k} positivity {:?}", rep.positivity);
            assert!(rep.space_repulsivity.holds, "k={k} repulsivity {:?}", rep.space_repulsivity);
            assert!(rep.time_repulsivity.holds, "k={k} time {:?}", rep.time_repulsivity);
        }
        let frozen = verify_potential_properties(k4(), 1.0, 0.0, &g).unwrap();
        assert_eq!(frozen.time_repulsivity.min_margin, 0.0);
    }

    #[test]
    fn coercivity_positive_and_scale_invariant() {
        let g = RadialGrid::geometric(1500, 1e-4, 1e3).unwrap();
        let sample = coercivity_sample(k4(), 1.0, 40, 7, &g).unwrap();
        let base = coercivity_ratio(k4(), 1.0, &sample, CoercivityVariant::CApp1, 0.1, &g).unwrap();
        assert!(base > 0.0 && base.is_finite(), "ratio {base}");
        let scaled: Vec<Vec<f64>> = sample
            .iter()
            .map(|u| u.iter().map(|&v| 10.0 * v).collect())
            .collect();
        let s = coercivity_ratio(k4(), 1.0, &scaled, CoercivityVariant::CApp1, 0.1, &g).unwrap();
        assert!((s - base).abs() <= 1e-12 * base.abs(), "{s} vs {base}");
    }

    #[test]
    fn coercivity_rejects_empty_sample() {
        let g = RadialGrid::geometric(100, 1e-2, 1e2).unwrap();
        assert!(matches!(
            coercivity_ratio(k4(), 1.0, &[], CoercivityVariant::CApp1, 0.1, &g),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn apply_rejects_mismatched_grid() {
        let g = test_grid(100);
        let a = DiscreteOperator::new(OperatorKind::A, k4(), 1.0, &g).unwrap();
        assert!(matches!(a.apply(&[0.0; 50]), Err(Error::GridMismatch { .. })));
    }
}
