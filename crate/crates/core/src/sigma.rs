//! Multiplicative nonlinearities with linear growth bounds
//! `l |x| <= |sigma(x)| <= L |x|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::validation::ValidationReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaFunction {
    /// `sigma(x) = c x`.
    Linear { c: f64 },
    /// `sigma(x) = c x (1 + s x^2 / (1 + x^2))`, `c > 0`, `0 <= s < 1`.
    SaturatingLinear { c: f64, s: f64 },
}

impl SigmaFunction {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SigmaFunction::Linear { c } => c * x,
            SigmaFunction::SaturatingLinear { c, s } => {
                let x2 = x * x;
                c * x * (1.0 + s * x2 / (1.0 + x2))
            }
        }
    }

    /// Declared lower constant `l_sigma`.
    pub fn lower(&self) -> f64 {
        match *self {
            SigmaFunction::Linear { c } => c.abs(),
            SigmaFunction::SaturatingLinear { c, .. } => c,
        }
    }

    /// Declared upper constant `L_sigma`.
    pub fn upper(&self) -> f64 {
        match *self {
            SigmaFunction::Linear { c } => c.abs(),
            SigmaFunction::SaturatingLinear { c, s } => c * (1.0 + s),
        }
    }

    /// Global Lipschitz constant. For the saturating form the derivative
    /// peaks at `x^2 = 3`, giving `c (1 + 9 s / 8)`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            SigmaFunction::Linear { c } => c.abs(),
            SigmaFunction::SaturatingLinear { c, s } => c * (1.0 + 1.125 * s),
        }
    }

    /// Slope when `sigma` is linear.
    pub fn linear_slope(&self) -> Option<f64> {
        match *self {
            SigmaFunction::Linear { c } => Some(c),
            SigmaFunction::SaturatingLinear { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SigmaFunction::Linear { c } => format!("linear(c={c})"),
            SigmaFunction::SaturatingLinear { c, s } => format!("saturating-linear(c={c}, s={s})"),
        }
    }

    /// Parameter ranges only; see [`validate_sigma`] for the pointwise check.
    pub fn check_parameters(&self) -> Result<()> {
        match *self {
            SigmaFunction::Linear { c } if !c.is_finite() => {
                Err(Error::Validation(format!("sigma slope must be finite, got {c}")))
            }
            SigmaFunction::Linear { .. } => Ok(()),
            SigmaFunction::SaturatingLinear { c, s } => {
                if !(c.is_finite() && c > 0.0) {
                    Err(Error::Validation(format!("saturating sigma needs c > 0, got {c}")))
                } else if !(0.0..1.0).contains(&s) {
                    Err(Error::Validation(format!("saturating sigma needs 0 <= s < 1, got {s}")))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Test abscissae: 20 per decade on `+-[1e-6, 1e6]`.
fn test_points() -> Vec<f64> {
    let per_side: Vec<f64> = (0..=240).map(|k| 10f64.powf(-6.0 + k as f64 / 20.0)).collect();
    let mut pts: Vec<f64> = per_side.iter().rev().map(|x| -x).collect();
    pts.extend(per_side);
    pts
}

/// Check the growth bounds and the Lipschitz constant on a log-spaced grid.
/// Any violation is an [`Error::InvalidSigma`] carrying the offending `x`.
pub fn validate_sigma(sigma: &SigmaFunction) -> Result<ValidationReport> {
    sigma.check_parameters().map_err(|e| Error::InvalidSigma {
        witness: 1.0,
        reason: e.to_string(),
    })?;
    let (l, big_l, lip) = (sigma.lower(), sigma.upper(), sigma.lipschitz());
    let pts = test_points();
    if !(l > 0.0) {
        return Err(Error::InvalidSigma {
            witness: pts[pts.len() / 2],
            reason: format!("lower growth constant l_sigma = {l} must be strictly positive"),
        });
    }
    let slack = 1e-12;
    let mut lo_emp = f64::INFINITY;
    let mut hi_emp = 0.0f64;
    for &x in &pts {
        let r = sigma.eval(x).abs() / x.abs();
        lo_emp = lo_emp.min(r);
        hi_emp = hi_emp.max(r);
        if r < l * (1.0 - slack) {
            return Err(Error::InvalidSigma {
                witness: x,
                reason: format!("|sigma(x)| / |x| = {r} is below l_sigma = {l}"),
            });
        }
        if r > big_l * (1.0 + slack) {
            return Err(Error::InvalidSigma {
                witness: x,
                reason: format!("|sigma(x)| / |x| = {r} exceeds L_sigma = {big_l}"),
            });
        }
    }
    let mut lip_emp = 0.0f64;
    for w in pts.windows(2) {
        let q = (sigma.eval(w[1]) - sigma.eval(w[0])).abs() / (w[1] - w[0]);
        lip_emp = lip_emp.max(q);
        if q > lip * (1.0 + 1e-9) {
            return Err(Error::InvalidSigma {
                witness: w[0],
                reason: format!("difference quotient {q} exceeds the Lipschitz constant {lip}"),
            });
        }
    }
    let mut report = ValidationReport::default();
    report.push("lower growth bound", true, lo_emp, l);
    report.push("upper growth bound", true, hi_emp, big_l);
    report.push("lipschitz bound", true, lip_emp, lip);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_tight() {
        let r = validate_sigma(&SigmaFunction::Linear { c: 1.0 }).unwrap();
        assert!(r.passed());
        assert_eq!(r.get("lower growth bound").unwrap().measured, 1.0);
        assert_eq!(r.get("upper growth bound").unwrap().measured, 1.0);
    }

    #[test]
    fn saturating_bounds_within_declared() {
        let s = SigmaFunction::SaturatingLinear { c: 1.0, s: 0.5 };
        let r = validate_sigma(&s).unwrap();
        let lo = r.get("lower growth bound").unwrap().measured;
        let hi = r.get("upper growth bound").unwrap().measured;
        assert!(lo >= 1.0 - 1e-12 && hi <= 1.5 + 1e-12);
        assert!(hi > 1.49);
        let lip = r.get("lipschitz bound").unwrap().measured;
        assert!(lip > 1.5 && lip <= 1.5625 + 1e-9);
    }

    #[test]
    fn zero_slope_is_rejected_with_witness() {
        match validate_sigma(&SigmaFunction::Linear { c: 0.0 }) {
            Err(Error::InvalidSigma { witness, .. }) => assert!(witness.is_finite()),
            other => panic!("expected invalid sigma, got {other:?}"),
        }
        assert!(validate_sigma(&SigmaFunction::SaturatingLinear { c: 1.0, s: 1.0 }).is_err());
    }

    #[test]
    fn sigma_vanishes_at_zero() {
        for s in [SigmaFunction::Linear { c: -2.0 }, SigmaFunction::SaturatingLinear { c: 0.7, s: 0.3 }] {
            assert_eq!(s.eval(0.0), 0.0);
        }
    }
}
