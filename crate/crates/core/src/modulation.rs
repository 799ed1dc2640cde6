//! Modulation analysis: extraction of the concentration parameter
//! `lambda(t)` from field snapshots via the orthogonality condition
//! `<phi - I_lambda, J_lambda> = 0`, the `u = w0 + w` decomposition, and
//! the error functional / Morawetz diagnostics that drive the refined
//! blowup ODE.

use crate::error::{Error, Result};
use crate::evolve::FieldState;
use crate::functionals;
use crate::grid::fd_weights;
use crate::operators::{DiscreteOperator, OperatorKind};
use crate::profiles::{SolitonProfile, W0Coefficients};
use serde::Serialize;

/// Relative orthogonality tolerance: `|g(lambda)| <= ORTHO_TOL * <J, J>`.
pub const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct LambdaExtraction {
    pub lambda: f64,
    pub residual: f64,
    pub iters: usize,
}

fn g_and_slope(state: &FieldState, lambda: f64) -> Result<(f64, f64)> {
    let p = SolitonProfile::new(state.k, lambda)?;
    let grid = &state.grid;
    let j = grid.sample(|r| p.eval_j(r));
    let u: Vec<f64> = state
        .phi
        .iter()
        .zip(grid.nodes())
        .map(|(&phi, &r)| phi - p.eval_i(r))
        .collect();
    let g = grid.inner_rdr(&u, &j);
    // dg/dlambda = -<J,J>/lambda + <u, (r d_r J)_lambda>/lambda
    let rdrj = grid.sample(|r| p.eval_r_dr_j(r));
    let slope = (-grid.inner_rdr(&j, &j) + grid.inner_rdr(&u, &rdrj)) / lambda;
    Ok((g, slope))
}

/// Root of `g(lambda) = <phi - I_lambda, J_lambda>` nearest the guess, by
/// safeguarded Newton inside a sign-change bracket within
/// `[guess/4, 4 guess]`.
pub fn extract_lambda(state: &FieldState, lambda_guess: f64) -> Result<LambdaExtraction> {
    assert!(lambda_guess > 0.0, "lambda_guess must be positive");
    let bracket = (lambda_guess / 4.0, 4.0 * lambda_guess);
    let p = SolitonProfile::new(state.k, lambda_guess)?;
    let j = state.grid.sample(|r| p.eval_j(r));
    let jj = state.grid.inner_rdr(&j, &j);
    let tol = ORTHO_TOL * jj;

    // scan log-uniformly for the sign-change interval nearest the guess
    const SCAN: usize = 48;
    let lg = |x: f64| x.ln();
    let samples: Vec<f64> = (0..=SCAN)
        .map(|i| (lg(bracket.0) + (lg(bracket.1) - lg(bracket.0)) * i as f64 / SCAN as f64).exp())
        .collect();
    let gs: Vec<f64> = samples
        .iter()
        .map(|&l| g_and_slope(state, l).map(|(g, _)| g))
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..SCAN {
        if gs[i] == 0.0 {
            return Ok(LambdaExtraction { lambda: samples[i], residual: 0.0, iters: 0 });
        }
        if gs[i] * gs[i + 1] < 0.0 {
            let mid = (samples[i] * samples[i + 1]).sqrt();
            let better = match best {
                None => true,
                Some((m, _)) => (mid - lambda_guess).abs() < (m - lambda_guess).abs(),
            };
            if better {
                best = Some((mid, samples[i]));
            }
        }
    }
    let (_, mut lo) = best.ok_or(Error::NoRootInBracket { lo: bracket.0, hi: bracket.1 })?;
    let mut hi = samples[samples.iter().position(|&s| s == lo).unwrap() + 1];
    let (mut g_lo, _) = g_and_slope(state, lo)?;

    let mut lambda = 0.5 * (lo + hi);
    let max_iters = 60;
    for iter in 1..=max_iters {
        let (g, slope) = g_and_slope(state, lambda)?;
        if g.abs() <= tol {
            return Ok(LambdaExtraction { lambda, residual: g, iters: iter });
        }
        if g * g_lo < 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
            g_lo = g;
        }
        let newton = lambda - g / slope;
        lambda = if slope != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= f64::EPSILON * lambda.abs() {
            // bracket at rounding resolution; accept if close
            let (g, _) = g_and_slope(state, lambda)?;
            if g.abs() <= 10.0 * tol {
                return Ok(LambdaExtraction { lambda, residual: g, iters: iter });
            }
            return Err(Error::MaxIters { iters: iter, residual: g });
        }
    }
    let (g, _) = g_and_slope(state, lambda)?;
    Err(Error::MaxIters { iters: max_iters, residual: g })
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub u: Vec<f64>,
    pub w0: Vec<f64>,
    pub w: Vec<f64>,
    /// `<w, J_lambda>` relative to `<J, J>`; should stay at the
    /// orthogonality tolerance since `<w0, J_lambda> = 0`.
    pub w_ortho_residual: f64,
    /// `<w0, J_lambda>` relative to `<J, J>`; zero analytically.
    pub w0_ortho_residual: f64,
}

/// Split `u = phi - I_lambda` into the explicit correction `w0` and the
/// remainder `w`.
pub fn decompose(
    state: &FieldState,
    lambda: f64,
    lambda_dot: f64,
    coeffs: &W0Coefficients,
) -> Result<Decomposition> {
    let p = SolitonProfile::new(state.k, lambda)?;
    let grid = &state.grid;
    let u: Vec<f64> = state
        .phi
        .iter()
        .zip(grid.nodes())
        .map(|(&phi, &r)| phi - p.eval_i(r))
        .collect();
    let w0: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| p.eval_w0(lambda_dot, r, coeffs))
        .collect::<Result<_>>()?;
    let w: Vec<f64> = u.iter().zip(&w0).map(|(&a, &b)| a - b).collect();
    let j = grid.sample(|r| p.eval_j(r));
    let jj = grid.inner_rdr(&j, &j);
    Ok(Decomposition {
        w_ortho_residual: grid.inner_rdr(&w, &j) / jj,
        w0_ortho_residual: grid.inner_rdr(&w0, &j) / jj,
        u,
        w0,
        w,
    })
}

/// `eps_1 = 2 lambda^2 <u, (r d_r J)_lambda>`, the lambda-dot-cancelled
/// form of the refined-ODE forcing correction (removable singularity at
/// `lambda_dot = 0`).
pub fn eps1(state: &FieldState, lambda: f64) -> Result<f64> {
    let p = SolitonProfile::new(state.k, lambda)?;
    let grid = &state.grid;
    let u: Vec<f64> = state
        .phi
        .iter()
        .zip(grid.nodes())
        .map(|(&phi, &r)| phi - p.eval_i(r))
        .collect();
    let rdrj = grid.sample(|r| p.eval_r_dr_j(r));
    Ok(2.0 * lambda * lambda * grid.inner_rdr(&u, &rdrj))
}

/// The error functional: five inner products against the modulated
/// kernel, with
///
/// ```text
/// d_t J_lambda   = (ld/l) (r d_r J)_lambda
/// d_t^2 J_lambda = (ldd/l - ld^2/l^2)(r d_r J)_lambda + (ld/l)^2 ((r d_r)^2 J)_lambda
/// ```
///
/// and the cubic-and-higher nonlinearity `N~(u)`. The quadratic term
/// carries the `k^2` factor of the nonlinearity's expansion.
pub fn cal_e(
    state: &FieldState,
    lambda: f64,
    lambda_dot: f64,
    lambda_ddot: f64,
    coeffs: &W0Coefficients,
) -> Result<f64> {
    let p = SolitonProfile::new(state.k, lambda)?;
    let grid = &state.grid;
    let dec = decompose(state, lambda, lambda_dot, coeffs)?;
    let kf = state.k.k_f64();

    let rdrj = grid.sample(|r| p.eval_r_dr_j(r));
    let rdr2j = grid.sample(|r| p.eval_r_dr2_j(r));
    let j = grid.sample(|r| p.eval_j(r));
    let n = grid.len();

    let ld_over_l = lambda_dot / lambda;
    let jdot: Vec<f64> = rdrj.iter().map(|&v| ld_over_l * v).collect();
    let c1 = lambda_ddot / lambda - ld_over_l * ld_over_l;
    let jddot: Vec<f64> = (0..n)
        .map(|i| c1 * rdrj[i] + ld_over_l * ld_over_l * rdr2j[i])
        .collect();

    let term1 = 2.0 * grid.inner_rdr(&dec.w, &jdot) * lambda_dot;
    let term2 = grid.inner_rdr(&dec.w, &jddot) * lambda;
    let term3 =
        (lambda_ddot - 2.0 * lambda_dot * lambda_dot / lambda) * grid.inner_rdr(&dec.w0, &rdrj);

    let mut quad = vec![0.0; n];
    let mut cubic = vec![0.0; n];
    for i in 0..n {
        let r = grid.nodes()[i];
        let trig = p.eval_trig_composites(r);
        let u = dec.u[i];
        let w = dec.w[i];
        let w0 = dec.w0[i];
        quad[i] = kf * kf * w * (2.0 * w0 + w) / (r * r) * trig.sin_2i * j[i];
        // N~(u) = N(u) - k^2 sin(2 I) u^2 / r^2, O(u^3/r^2)
        let n_full = kf * kf * trig.sin_2i / (2.0 * r * r) * (1.0 - (2.0 * u).cos())
            + kf * kf * trig.cos_2i / (r * r) * (u - 0.5 * (2.0 * u).sin());
        cubic[i] = (n_full - kf * kf * trig.sin_2i * u * u / (r * r)) * j[i];
    }
    let term4 = -grid.integrate_rdr(&quad) * lambda;
    let term5 = -grid.integrate_rdr(&cubic) * lambda;

    Ok(term1 + term2 + term3 + term4 + term5)
}

/// Fourth-order finite-difference derivatives of a sampled trace
/// (5-point stencils, one-sided at the edges).
pub fn differentiate_trace(ts: &[f64], vals: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = ts.len();
    if n < 5 {
        return Err(Error::TraceTooShort { len: n, need: 5 });
    }
    assert_eq!(vals.len(), n);
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(2).min(n - 5);
        let w = fd_weights(&ts[lo..lo + 5], ts[i], 2);
        for m in 0..5 {
            d1[i] += w[1][m] * vals[lo + m];
            d2[i] += w[2][m] * vals[lo + m];
        }
    }
    Ok((d1, d2))
}

#[derive(Debug, Clone, Copy)]
pub struct MorawetzConfig {
    /// Weight exponent, `0 < delta <= 0.5`; the paper fixes only
    /// `delta << 1`.
    pub delta: f64,
    pub t0: f64,
    pub t1: f64,
}

impl Default for MorawetzConfig {
    fn default() -> Self {
        Self { delta: 0.1, t0: 0.0, t1: 1.0 }
    }
}

/// `E_delta[A_lambda w](t0, t1)`: sup-in-time weighted energy of
/// `psi = A_lambda w` plus its space-time integral, with
/// `L = d_t + d_r` computed by centered time differences across
/// snapshots.
pub fn morawetz_energy(
    snapshots: &[FieldState],
    lambdas: &[f64],
    lambda_dots: &[f64],
    coeffs: &W0Coefficients,
    cfg: &MorawetzConfig,
) -> Result<f64> {
    assert!(cfg.delta > 0.0 && cfg.delta <= 0.5, "delta outside (0, 0.5]");
    assert_eq!(snapshots.len(), lambdas.len());
    assert_eq!(snapshots.len(), lambda_dots.len());
    let idx: Vec<usize> = (0..snapshots.len())
        .filter(|&i| snapshots[i].t >= cfg.t0 && snapshots[i].t <= cfg.t1)
        .collect();
    if idx.len() < 3 {
        return Err(Error::InsufficientSnapshots { t0: cfg.t0, t1: cfg.t1, count: idx.len() });
    }
    let grid = &snapshots[idx[0]].grid;
    let n = grid.len();
    for &i in &idx {
        if snapshots[i].grid.len() != n {
            return Err(Error::GridMismatch { expected: n, got: snapshots[i].grid.len() });
        }
    }

    // psi = A_lambda w per selected snapshot
    let mut psis = Vec::with_capacity(idx.len());
    for &i in &idx {
        let dec = decompose(&snapshots[i], lambdas[i], lambda_dots[i], coeffs)?;
        let a = DiscreteOperator::new(OperatorKind::A, snapshots[i].k, lambdas[i], grid)?;
        psis.push(a.apply(&dec.w)?);
    }
    let ts: Vec<f64> = idx.iter().map(|&i| snapshots[i].t).collect();

    let mut sup = 0.0f64;
    let mut spacetime_rows = Vec::with_capacity(idx.len());
    for (m, &i) in idx.iter().enumerate() {
        // d_t psi by centered (one-sided at edges) differences
        let (prev, next) = match m {
            0 => (0, 1),
            _ if m == idx.len() - 1 => (m - 1, m),
            _ => (m - 1, m + 1),
        };
        let dt = ts[next] - ts[prev];
        let dpsi_r = grid.deriv1(&psis[m]);
        let lam = lambdas[i];
        let delta = cfg.delta;
        let mut fixed = vec![0.0; n];
        let mut st = vec![0.0; n];
        for q in 0..n {
            let r = grid.nodes()[q];
            let lpsi = (psis[next][q] - psis[prev][q]) / dt + dpsi_r[q];
            let wgt = (lam * r).powf(delta) / (1.0 + r.powf(delta));
            let psi2 = psis[m][q] * psis[m][q];
            fixed[q] = wgt / lam * (lpsi * lpsi + psi2 / (r * r));
            st[q] = ((lam * r).powf(delta) / ((1.0 + r.powf(delta)).powi(2) * r) * lpsi * lpsi
                + wgt * psi2 / (r * r * r))
                / lam;
        }
        sup = sup.max(grid.integrate_rdr(&fixed));
        spacetime_rows.push(grid.integrate_rdr(&st));
    }
    // trapezoid in time for the space-time piece
    let mut st_total = 0.0;
    for m in 1..spacetime_rows.len() {
        st_total += 0.5 * (spacetime_rows[m] + spacetime_rows[m - 1]) * (ts[m] - ts[m - 1]);
    }
    Ok(sup + st_total)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulationRow {
    pub t: f64,
    pub lambda: f64,
    pub lambda_dot: f64,
    pub lambda_ddot: f64,
    pub e0: f64,
    pub eps1: f64,
    pub cal_e: f64,
    pub ortho_residual: f64,
    pub newton_iters: usize,
    /// "ok" or the extraction failure for this row.
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulationTrace {
    pub rows: Vec<ModulationRow>,
}

/// Per-snapshot modulation analysis of a run: warm-started lambda
/// extraction, finite-difference `lambda_dot`/`lambda_ddot`, and all row
/// diagnostics. Extraction failures are recorded in the row status
/// rather than aborting the trace.
pub fn modulate_run(
    snapshots: &[FieldState],
    coeffs: &W0Coefficients,
    lambda_guess0: f64,
) -> Result<ModulationTrace> {
    if snapshots.len() < 5 {
        return Err(Error::TraceTooShort { len: snapshots.len(), need: 5 });
    }
    let mut guess = lambda_guess0;
    let mut extractions: Vec<std::result::Result<LambdaExtraction, String>> =
        Vec::with_capacity(snapshots.len());
    for s in snapshots {
        match extract_lambda(s, guess) {
            Ok(ex) => {
                guess = ex.lambda;
                extractions.push(Ok(ex));
            }
            Err(e) => extractions.push(Err(e.to_string())),
        }
    }
    let good: Vec<usize> = (0..snapshots.len()).filter(|&i| extractions[i].is_ok()).collect();
    if good.len() < 5 {
        return Err(Error::TraceTooShort { len: good.len(), need: 5 });
    }
    let ts: Vec<f64> = good.iter().map(|&i| snapshots[i].t).collect();
    let ls: Vec<f64> = good
        .iter()
        .map(|&i| extractions[i].as_ref().unwrap().lambda)
        .collect();
    let (ld, ldd) = differentiate_trace(&ts, &ls)?;

    let mut rows = Vec::with_capacity(snapshots.len());
    let mut pos = 0usize;
    for (i, s) in snapshots.iter().enumerate() {
        match &extractions[i] {
            Err(msg) => rows.push(ModulationRow {
                t: s.t,
                lambda: f64::NAN,
                lambda_dot: f64::NAN,
                lambda_ddot: f64::NAN,
                e0: f64::NAN,
                eps1: f64::NAN,
                cal_e: f64::NAN,
                ortho_residual: f64::NAN,
                newton_iters: 0,
                status: msg.clone(),
            }),
            Ok(ex) => {
                let lambda = ex.lambda;
                let lambda_dot = ld[pos];
                let lambda_ddot = ldd[pos];
                pos += 1;
                let p = SolitonProfile::new(s.k, lambda)?;
                let dec = decompose(s, lambda, lambda_dot, coeffs)?;
                // d_t u = pi - d_t I_lambda = pi - (ld/l) J_lambda
                let pi_u: Vec<f64> = s
                    .pi
                    .iter()
                    .zip(s.grid.nodes())
                    .map(|(&pi, &r)| pi - lambda_dot / lambda * p.eval_j(r))
                    .collect();
                let e0 = functionals::orbital_energy(&s.grid, &dec.u, &pi_u, s.k);
                rows.push(ModulationRow {
                    t: s.t,
                    lambda,
                    lambda_dot,
                    lambda_ddot,
                    e0,
                    eps1: eps1(s, lambda)?,
                    cal_e: cal_e(s, lambda, lambda_dot, lambda_ddot, coeffs)?,
                    ortho_residual: ex.residual,
                    newton_iters: ex.iters,
                    status: "ok".into(),
                });
            }
        }
    }
    Ok(ModulationTrace { rows })
}
