//! Closed-form soliton profiles for the k-equivariant wave map into the
//! sphere, and the derived quantities built from them.
//!
//! The static minimizer in homotopy class `k` is `I(r) = 2 arctan(r^k)`,
//! its ground state is `J = r I' = k sin(I)`, and the rescaled family is
//! `I_lambda(r) = I(lambda r)`. Everything here is a rational or
//! trigonometric closed form in `x = lambda r`; the only numerical care is
//! evaluating `x^k` without overflow at the tails.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Beyond this value of `x^k` (or below its reciprocal) the exact rational
/// forms lose all precision to cancellation and the asymptotic expansions
/// are exact to machine accuracy.
const TAIL_EXP: f64 = 34.5; // ln(1e15) ~ 34.54

/// Topological degree of the equivariant ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HomotopyClass {
    k: u32,
}

impl HomotopyClass {
    /// `k >= 2` is required for `J` to lie in `L^2(r dr)` and for the
    /// admissibility bound `|d_r phi| <= C r` near the origin.
    pub fn new(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!(
                "homotopy degree k = {k} rejected: need k >= 2"
            )));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn k_f64(&self) -> f64 {
        f64::from(self.k)
    }

    /// The blowup theorems require `k >= 4`; the formulas below are valid
    /// for all `k >= 2` and the `k = 2, 3` cases are exposed for
    /// experiments outside the theorem regime.
    pub fn theorem_regime(&self) -> bool {
        self.k >= 4
    }
}

/// Trig composites of the soliton angle, all in rational closed form.
#[derive(Debug, Clone, Copy)]
pub struct TrigComposites {
    pub cos_i: f64,
    pub sin_2i: f64,
    pub cos_2i: f64,
}

/// Coefficients `(a, b)` of the leading correction
/// `w0 = (ldot^2 / lambda^4) (a J_lambda + b (r^2 J)_lambda)`.
///
/// `b = 1/4` always; `a = -(1/4) <J, r^2 J> / <J, J>` is produced by the
/// quadrature engine in [`crate::functionals`].
#[derive(Debug, Clone, Copy)]
pub struct W0Coefficients {
    pub k: u32,
    pub a: f64,
    pub b: f64,
}

/// A soliton profile at scale `lambda`: evaluators for `I`, `J`, `K`, the
/// trig composites, and the `w0` correction. Pure and stateless.
#[derive(Debug, Clone, Copy)]
pub struct SolitonProfile {
    pub class: HomotopyClass,
    pub lambda: f64,
}

impl SolitonProfile {
    pub fn new(class: HomotopyClass, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("lambda = {lambda} must be positive and finite")));
        }
        Ok(Self { class, lambda })
    }

    pub fn unit(class: HomotopyClass) -> Self {
        Self { class, lambda: 1.0 }
    }

    fn k(&self) -> f64 {
        self.class.k_f64()
    }

    /// `t = k ln(lambda r)`, so `(lambda r)^k = e^t`. Returns `None` at r = 0.
    fn log_power(&self, r: f64) -> Option<f64> {
        let x = self.lambda * r;
        if x == 0.0 {
            None
        } else {
            Some(self.k() * x.ln())
        }
    }

    /// Soliton angle `I_lambda(r) = 2 arctan((lambda r)^k)`, in `[0, pi]`.
    pub fn eval_i(&self, r: f64) -> f64 {
        match self.log_power(r) {
            None => 0.0,
            Some(t) if t > TAIL_EXP => PI - 2.0 * (-t).exp(),
            Some(t) if t < -TAIL_EXP => 2.0 * t.exp(),
            Some(t) => 2.0 * t.exp().atan(),
        }
    }

    /// Ground state `J_lambda(r) = r d_r I_lambda = 2k (lambda r)^k / (1 + (lambda r)^{2k})`.
    pub fn eval_j(&self, r: f64) -> f64 {
        let k = self.k();
        match self.log_power(r) {
            None => 0.0,
            Some(t) if t.abs() > TAIL_EXP => 2.0 * k * (-t.abs()).exp(),
            Some(t) => {
                let p = t.exp();
                2.0 * k * p / (1.0 + p * p)
            }
        }
    }

    /// `cos I`, `sin 2I`, `cos 2I` from the rational closed forms
    /// `cos I = (1 - x^{2k}) / (1 + x^{2k})`, `sin I = J / k`.
    pub fn eval_trig_composites(&self, r: f64) -> TrigComposites {
        let (cos_i, sin_i) = match self.log_power(r) {
            None => (1.0, 0.0),
            Some(t) if t > TAIL_EXP => {
                let e = (-t).exp();
                (2.0 * e * e - 1.0, 2.0 * e)
            }
            Some(t) if t < -TAIL_EXP => {
                let e = t.exp();
                (1.0 - 2.0 * e * e, 2.0 * e)
            }
            Some(t) => {
                let p = t.exp();
                let d = 1.0 + p * p;
                ((1.0 - p * p) / d, 2.0 * p / d)
            }
        };
        TrigComposites {
            cos_i,
            sin_2i: 2.0 * sin_i * cos_i,
            cos_2i: 1.0 - 2.0 * sin_i * sin_i,
        }
    }

    /// `K(x) = x^2 J(x) / 4` at `x = lambda r`; solves `H_1 K = -(J + r d_r J)`
    /// and seeds the `w0` correction.
    pub fn eval_k_fn(&self, r: f64) -> f64 {
        let x = self.lambda * r;
        x * x * self.eval_j(r) / 4.0
    }

    /// `r d_r J_lambda = k J_lambda cos(I_lambda)`.
    pub fn eval_r_dr_j(&self, r: f64) -> f64 {
        self.k() * self.eval_j(r) * self.eval_trig_composites(r).cos_i
    }

    /// `(r d_r)^2 J_lambda = k^2 J cos^2 I - J^3`, evaluated at `x = lambda r`.
    pub fn eval_r_dr2_j(&self, r: f64) -> f64 {
        let k = self.k();
        let j = self.eval_j(r);
        let c = self.eval_trig_composites(r).cos_i;
        k * k * j * c * c - j * j * j
    }

    /// Leading radiation correction
    /// `w0(r) = (ldot^2 / lambda^4) (a + b (lambda r)^2) J_lambda(r)`.
    pub fn eval_w0(&self, lambda_dot: f64, r: f64, coeffs: &W0Coefficients) -> Result<f64> {
        if coeffs.k != self.class.k() {
            return Err(Error::CoefficientsUnavailable { k: self.class.k() });
        }
        if lambda_dot == 0.0 {
            return Ok(0.0);
        }
        let x = self.lambda * r;
        let amp = lambda_dot * lambda_dot / self.lambda.powi(4);
        Ok(amp * (coeffs.a + coeffs.b * x * x) * self.eval_j(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(k: u32, lambda: f64) -> SolitonProfile {
        SolitonProfile::new(HomotopyClass::new(k).unwrap(), lambda).unwrap()
    }

    #[test]
    fn rejects_k_below_two() {
        assert!(HomotopyClass::new(1).is_err());
        assert!(HomotopyClass::new(0).is_err());
        assert!(!HomotopyClass::new(2).unwrap().theorem_regime());
        assert!(HomotopyClass::new(4).unwrap().theorem_regime());
    }

    #[test]
    fn i_endpoint_values() {
        let p = profile(4, 1.0);
        assert_eq!(p.eval_i(0.0), 0.0);
        assert!((p.eval_i(1.0) - PI / 2.0).abs() < 1e-15);
        // scaling identity I_lambda(r) = I(lambda r)
        let q = profile(4, 2.0);
        assert!((q.eval_i(0.5) - PI / 2.0).abs() < 1e-15);
        assert!((p.eval_i(1e9) - PI).abs() < 1e-14);
    }

    #[test]
    fn j_reference_values() {
        let p = profile(4, 1.0);
        assert_eq!(p.eval_j(0.0), 0.0);
        assert!((p.eval_j(1.0) - 4.0).abs() < 1e-14);
        // r^{-k} decay at the far tail
        let j = p.eval_j(100.0);
        assert!((j - 8.0 * 100.0f64.powi(-4)).abs() < 1e-20);
    }

    #[test]
    fn j_matches_k_sin_i_to_ulps() {
        for k in 2..=8u32 {
            let p = profile(k, 1.0);
            let tol = 4.0 * f64::from(k) * f64::EPSILON;
            let mut r = 1e-6;
            while r <= 1e6 {
                let j = p.eval_j(r);
                let ks = f64::from(k) * p.eval_i(r).sin();
                assert!(
                    (j - ks).abs() <= tol,
                    "k={k} r={r}: |J - k sin I| = {:e}",
                    (j - ks).abs()
                );
                r *= 1.7;
            }
        }
    }

    #[test]
    fn trig_composites_reference_values() {
        let p = profile(4, 1.0);
        let t1 = p.eval_trig_composites(1.0);
        assert!(t1.cos_i.abs() < 1e-15);
        assert!(t1.sin_2i.abs() < 1e-15);
        let t0 = p.eval_trig_composites(0.0);
        assert_eq!(t0.cos_2i, 1.0);
    }

    #[test]
    fn pythagorean_consistency() {
        for k in 2..=8u32 {
            let p = profile(k, 1.0);
            let mut r = 1e-6;
            while r <= 1e6 {
                let t = p.eval_trig_composites(r);
                let sin_i = p.eval_j(r) / f64::from(k);
                let err = (sin_i * sin_i + t.cos_i * t.cos_i - 1.0).abs();
                assert!(err <= 4.0 * f64::EPSILON, "k={k} r={r}: err={err:e}");
                r *= 2.3;
            }
        }
    }

    #[test]
    fn k_fn_reference_values() {
        let p = profile(4, 1.0);
        assert_eq!(p.eval_k_fn(0.0), 0.0);
        assert!((p.eval_k_fn(1.0) - 1.0).abs() < 1e-14);
        // K(2) = (4/4) * J(2) = 2*4*16/257
        assert!((p.eval_k_fn(2.0) - 128.0 / 257.0).abs() < 1e-14);
    }

    #[test]
    fn bogomolny_residual_by_central_differences() {
        // r I' - k sin I = 0; check the discrete residual shrinks at O(h^2)
        let p = profile(4, 1.0);
        let resid = |h: f64| -> f64 {
            let mut worst: f64 = 0.0;
            for i in 1..200 {
                let r = 0.02 * i as f64;
                let dr = (p.eval_i(r + h) - p.eval_i(r - h)) / (2.0 * h);
                worst = worst.max((r * dr - 4.0 * p.eval_i(r).sin()).abs());
            }
            worst
        };
        let r1 = resid(1e-2);
        let r2 = resid(5e-3);
        assert!(r2 < r1 / 3.0, "not second order: {r1:e} -> {r2:e}");
    }

    #[test]
    fn w0_reference_values() {
        let p = profile(4, 1.0);
        let coeffs = W0Coefficients { k: 4, a: -1.0 / (2.0 * 2.0f64.sqrt()), b: 0.25 };
        assert_eq!(p.eval_w0(0.0, 1.0, &coeffs).unwrap(), 0.0);
        let v = p.eval_w0(1.0, 1.0, &coeffs).unwrap();
        assert!((v - (4.0 * coeffs.a + 1.0)).abs() < 1e-14);
        let bad = W0Coefficients { k: 5, ..coeffs };
        assert!(p.eval_w0(1.0, 1.0, &bad).is_err());
    }

    #[test]
    fn r_dr_j_matches_finite_differences() {
        let p = profile(4, 1.0);
        for &r in &[0.3, 0.9, 1.7, 4.0] {
            let h = 1e-5 * r;
            let fd = r * (p.eval_j(r + h) - p.eval_j(r - h)) / (2.0 * h);
            assert!((fd - p.eval_r_dr_j(r)).abs() < 1e-7, "r={r}");
            let fd2 = r * (p.eval_r_dr_j(r + h) - p.eval_r_dr_j(r - h)) / (2.0 * h);
            assert!((fd2 - p.eval_r_dr2_j(r)).abs() < 1e-6, "r={r}");
        }
    }
}
