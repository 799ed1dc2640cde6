//! The reduced lambda-dynamics: geodesic/Riccati collapse, the refined
//! memory-integral ODE, blowup-time detection, and rate fitting.
//!
//! The refined model integrates
//!
//! ```text
//! C0 ld = l^2 (eps0 - M),    M(t) = int_0^t kappa ld^4 / l^7 ds
//! ```
//!
//! as a two-component system in `(lambda, M)`. With `kappa = 0` this is
//! the exactly solvable Riccati collapse `1/lambda = 1 - eps0 t / C0`.

use crate::error::{Error, Result};
use crate::modulation::ModulationTrace;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OdeVariant {
    /// Free geodesic in the scaling direction: linear `1/lambda`.
    Geodesic,
    /// Riccati collapse, the refined model with no memory term.
    Riccati,
    /// Memory model `calE = kappa ld^4 / l^7`.
    Refined,
    /// Test hook: `calE` frozen to the constant `kappa`, integrable in
    /// closed form.
    ConstantMemory,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OdeModel {
    pub variant: OdeVariant,
    pub c0: f64,
    pub eps0: f64,
    /// Memory coefficient; ignored for geodesic/riccati.
    pub kappa: f64,
}

impl OdeModel {
    pub fn new(variant: OdeVariant, c0: f64, eps0: f64, kappa: f64) -> Result<Self> {
        if !(c0 > 0.0) || !(eps0 >= 0.0) {
            return Err(Error::Config(format!("need C0 > 0 (got {c0}) and eps0 >= 0 (got {eps0})")));
        }
        Ok(Self { variant, c0, eps0, kappa })
    }

    /// `(d lambda / dt, d M / dt)` at state `(lambda, M)`.
    fn rhs(&self, l: f64, m: f64) -> (f64, f64) {
        let ld = l * l * (self.eps0 - m) / self.c0;
        let dm = match self.variant {
            OdeVariant::Geodesic | OdeVariant::Riccati => 0.0,
            OdeVariant::Refined => self.kappa * ld.powi(4) / l.powi(7),
            OdeVariant::ConstantMemory => self.kappa,
        };
        (ld, dm)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub t_end: Option<f64>,
    /// Stop once lambda exceeds this and extrapolate the blowup time;
    /// `None` disables the stop (the integrator then underflows at the
    /// singularity).
    pub blowup_stop: Option<f64>,
    pub rtol: f64,
    pub max_steps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { t_end: None, blowup_stop: Some(1e12), rtol: 1e-10, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeSeries {
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_dot: Vec<f64>,
    pub memory: Vec<f64>,
    /// Blowup-time estimate when the blowup stop fired.
    pub t_star_star: Option<f64>,
}

/// Adaptive Bogacki–Shampine 3(2) integration of the reduced dynamics,
/// starting from `lambda(0) = 1`, `M(0) = 0`.
///
/// Internally the integrated variable is `y = 1/lambda`, which stays
/// regular all the way to the blowup stop (for the Riccati case `y` is
/// exactly linear in time); integrating `lambda` itself would need steps
/// below the floating-point resolution of `t` near the pole.
pub fn solve_ode(model: &OdeModel, opts: &SolveOptions) -> Result<OdeSeries> {
    // y' = -(eps0 - M)/C0; M' = kappa ld^4/l^7 = kappa y'^4 / y (refined)
    let rhs_y = |y: f64, m: f64| -> (f64, f64) {
        let yd = -(model.eps0 - m) / model.c0;
        let dm = match model.variant {
            OdeVariant::Geodesic | OdeVariant::Riccati => 0.0,
            OdeVariant::Refined => model.kappa * yd.powi(4) / y,
            OdeVariant::ConstantMemory => model.kappa,
        };
        (yd, dm)
    };
    let mut t = 0.0;
    let mut y = 1.0f64;
    let mut m = 0.0f64;
    // Kahan compensations: the trajectory spans ~12 decades of y, so bare
    // accumulation injects O(ulp(1)) absolute error that dominates the
    // relative error near the pole.
    let (mut ct, mut cy, mut cm) = (0.0f64, 0.0f64, 0.0f64);
    let kahan = |acc: &mut f64, c: &mut f64, inc: f64| {
        let adj = inc + *c;
        let next = *acc + adj;
        *c = adj - (next - *acc);
        *acc = next;
    };
    let mut series = OdeSeries {
        t: vec![0.0],
        lambda: vec![1.0],
        lambda_dot: vec![model.rhs(1.0, 0.0).0],
        memory: vec![0.0],
        t_star_star: None,
    };
    let t_end = opts.t_end.unwrap_or(f64::INFINITY);
    if t_end <= 0.0 {
        return Ok(series);
    }
    let mut k1 = rhs_y(y, m);
    // keep lambda growth around 5% per step so the output samples every
    // decade of the collapse densely
    let growth_cap = |y: f64, yd: f64| {
        if yd < 0.0 {
            0.05 * y / -yd
        } else {
            f64::INFINITY
        }
    };
    let mut dt = growth_cap(y, k1.0)
        .min(if t_end.is_finite() { t_end / 16.0 } else { f64::INFINITY })
        .min(0.05 * model.c0 / model.eps0.max(1e-12));
    for _ in 0..opts.max_steps {
        if t >= t_end {
            break;
        }
        if let Some(cap) = opts.blowup_stop {
            if 1.0 / y >= cap {
                // y shrinks linearly at rate (eps0 - M)/C0 near blowup
                series.t_star_star = Some(t + y * model.c0 / (model.eps0 - m));
                break;
            }
        }
        dt = dt.min(t_end - t).max(0.0);
        if dt < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, dt });
        }
        // Bogacki–Shampine 3(2) pair
        let p2 = (y + 0.5 * dt * k1.0, m + 0.5 * dt * k1.1);
        if p2.0 <= 0.0 {
            dt *= 0.25;
            continue;
        }
        let k2 = rhs_y(p2.0, p2.1);
        let p3 = (y + 0.75 * dt * k2.0, m + 0.75 * dt * k2.1);
        if p3.0 <= 0.0 {
            dt *= 0.25;
            continue;
        }
        let k3 = rhs_y(p3.0, p3.1);
        let dy = dt * (2.0 * k1.0 + 3.0 * k2.0 + 4.0 * k3.0) / 9.0;
        let dm = dt * (2.0 * k1.1 + 3.0 * k2.1 + 4.0 * k3.1) / 9.0;
        let y3 = y + dy;
        let m3 = m + dm;
        if !y3.is_finite() || y3 <= 0.0 {
            dt *= 0.25;
            continue;
        }
        let k4 = rhs_y(y3, m3);
        let y2 = y + dt * (7.0 * k1.0 / 24.0 + 0.25 * k2.0 + k3.0 / 3.0 + 0.125 * k4.0);
        let m2 = m + dt * (7.0 * k1.1 / 24.0 + 0.25 * k2.1 + k3.1 / 3.0 + 0.125 * k4.1);
        let scale_y = y.abs().max(y3.abs());
        let scale_m = m.abs().max(m3.abs()).max(model.eps0.max(1e-12));
        let err = ((y3 - y2) / scale_y).abs().max(((m3 - m2) / scale_m).abs());
        if err <= opts.rtol {
            kahan(&mut t, &mut ct, dt);
            kahan(&mut y, &mut cy, dy);
            kahan(&mut m, &mut cm, dm);
            k1 = k4; // FSAL
            series.t.push(t);
            series.lambda.push(1.0 / y);
            series.lambda_dot.push(-k1.0 / (y * y));
            series.memory.push(m);
        }
        let factor = if err > 0.0 { 0.9 * (opts.rtol / err).powf(1.0 / 3.0) } else { 2.0 };
        dt = (dt * factor.clamp(0.2, 2.0)).min(growth_cap(y, k1.0));
    }
    Ok(series)
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    /// First time after which `ld^4 / l^7` increases monotonically;
    /// absent when the series never enters the self-similar phase.
    pub onset: Option<f64>,
    /// The bound `4 C0 / eps0` the onset is compared against.
    pub bound: f64,
    pub onset_before_bound: bool,
}

/// Locate the onset of monotone growth of `ld^4 / l^7` and compare it
/// with the `4 C0 / eps0` entry bound for the self-similar phase.
pub fn self_similar_phase_check(
    ts: &[f64],
    lambdas: &[f64],
    lambda_dots: &[f64],
    c0: f64,
    eps0: f64,
) -> Result<PhaseReport> {
    let n = ts.len();
    if n < 3 {
        return Err(Error::SeriesTooShort { len: n });
    }
    let q: Vec<f64> = (0..n)
        .map(|i| lambda_dots[i].powi(4) / lambdas[i].powi(7))
        .collect();
    // last index from which q never decreases (with a relative slack),
    // requiring at least one strict increase beyond it
    let mut onset_idx = None;
    let mut i = n - 1;
    let mut any_strict = false;
    while i > 0 {
        let tol = 1e-12 * q[i].abs().max(q[i - 1].abs());
        if q[i] + tol < q[i - 1] {
            break;
        }
        if q[i] > q[i - 1] + tol {
            any_strict = true;
        }
        i -= 1;
        if any_strict {
            onset_idx = Some(i);
        }
    }
    let onset = onset_idx.map(|i| ts[i]);
    let bound = 4.0 * c0 / eps0;
    Ok(PhaseReport {
        onset,
        bound,
        onset_before_bound: onset.map(|t| t < bound).unwrap_or(false),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateModel {
    PureSelfSimilar,
    LogModified,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub t_star: f64,
    pub model: RateModel,
    /// RMS residual of `ln(lambda * shape)` per decade of lambda.
    pub residual_per_decade: f64,
    /// Multiplicative amplitude of the fitted shape.
    pub amplitude: f64,
}

fn shape(model: RateModel, t_star: f64, t: f64) -> f64 {
    let s = t_star - t;
    match model {
        RateModel::PureSelfSimilar => s,
        RateModel::LogModified => s / s.ln().abs().max(1e-300).sqrt(),
    }
}

/// Mean and RMS of `ln(lambda_i * shape_i)`; the fit is multiplicative so
/// the best amplitude is the geometric mean.
fn fit_residual(ts: &[f64], lambdas: &[f64], model: RateModel, t_star: f64) -> (f64, f64) {
    let logs: Vec<f64> = ts
        .iter()
        .zip(lambdas)
        .map(|(&t, &l)| (l * shape(model, t_star, t)).ln())
        .collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let ss = logs.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / logs.len() as f64).sqrt())
}

/// Least-squares fit of the blowup rate over the sampled series,
/// optimizing the blowup time by golden section on `ln(T - t_last)`.
pub fn fit_rate(ts: &[f64], lambdas: &[f64], model: RateModel) -> Result<RateFit> {
    let n = ts.len();
    if n < 8 {
        return Err(Error::SeriesTooShort { len: n });
    }
    let lmin = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = lambdas.iter().cloned().fold(0.0f64, f64::max);
    let decades = (lmax / lmin).log10();
    if !(decades >= 3.0) {
        return Err(Error::InsufficientDynamicRange { decades, need: 3.0 });
    }
    let t_last = *ts.last().unwrap();
    // two-point pure-model seed for T - t_last
    let (t1, y1) = (ts[n - 2], 1.0 / lambdas[n - 2]);
    let (t2, y2) = (ts[n - 1], 1.0 / lambdas[n - 1]);
    let seed = ((t1 * y2 - t2 * y1) / (y2 - y1) - t_last).abs().max(1e-300);
    let (mut lo, mut hi) = ((0.05 * seed).ln(), (20.0 * seed).ln());
    let obj = |x: f64| fit_residual(ts, lambdas, model, t_last + x.exp()).1;
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut a, mut b) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
    let (mut fa, mut fb) = (obj(a), obj(b));
    for _ in 0..200 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = obj(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = obj(b);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let x = 0.5 * (a + b);
    let t_star = t_last + x.exp();
    let (mean, rms) = fit_residual(ts, lambdas, model, t_star);
    Ok(RateFit {
        t_star,
        model,
        residual_per_decade: rms / decades,
        amplitude: (-mean).exp(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledModel {
    pub model: OdeModel,
    /// Fitted memory coefficient; the delay heuristic expects it
    /// nonnegative.
    pub kappa_negative: bool,
    /// Sup over the window of `|lambda_model - lambda_trace|`.
    pub deviation: f64,
    /// Sup of `|lambda_trace - 1|` over the window, for scale.
    pub trace_excursion: f64,
}

/// Calibrate the refined model from a modulation trace: `eps0 = eps/pi`,
/// `kappa` by least squares of the `calE` column against `ld^4 / l^7`,
/// then integrate and compare.
pub fn couple_from_trace(
    trace: &ModulationTrace,
    eps: f64,
    c0: f64,
) -> Result<CoupledModel> {
    let rows: Vec<_> = trace.rows.iter().filter(|r| r.status == "ok").collect();
    if rows.len() < 5 {
        return Err(Error::TraceTooShort { len: rows.len(), need: 5 });
    }
    let eps0 = eps / std::f64::consts::PI;
    let mut sq = 0.0;
    let mut sqc = 0.0;
    for r in &rows {
        let q = r.lambda_dot.powi(4) / r.lambda.powi(7);
        sq += q * q;
        sqc += q * r.cal_e;
    }
    let kappa = if sq > 0.0 {
        sqc / sq
    } else if eps0 == 0.0 {
        0.0
    } else {
        return Err(Error::FitDegenerate {
            reason: "calE regressor ld^4/l^7 vanishes on the trace".into(),
        });
    };
    let model = OdeModel::new(OdeVariant::Refined, c0, eps0, kappa)?;
    let t_end = rows.last().unwrap().t;
    let series = solve_ode(&model, &SolveOptions { t_end: Some(t_end), ..Default::default() })?;
    // compare at trace times by linear interpolation of the model output
    let mut deviation = 0.0f64;
    let mut excursion = 0.0f64;
    for r in &rows {
        let i = series.t.partition_point(|&t| t < r.t).clamp(1, series.t.len() - 1);
        let (ta, tb) = (series.t[i - 1], series.t[i]);
        let w = if tb > ta { (r.t - ta) / (tb - ta) } else { 0.0 };
        let lm = series.lambda[i - 1] * (1.0 - w) + series.lambda[i] * w;
        deviation = deviation.max((lm - r.lambda).abs());
        excursion = excursion.max((r.lambda - 1.0).abs());
    }
    Ok(CoupledModel {
        model,
        kappa_negative: kappa < 0.0,
        deviation,
        trace_excursion: excursion,
    })
}
