//! Moment Lyapunov exponents, noise-level sweeps and the Laplace-transform
//! divergence probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatkernel::HeatKernelEvaluator;
use crate::moments::{
    energy_curve, estimate_moments, solve_volterra_colored, solve_volterra_white, LogSeries, MomentCurve,
    VolterraSetup,
};
use crate::sde::{simulate_ensemble_with, SimulationConfig};
use crate::stats::fit_line;

/// Minimum number of usable points in a fit window.
pub const MIN_FIT_POINTS: usize = 5;
/// Fits below this coefficient of determination are flagged.
pub const R2_RESOLVED: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Resolved,
    Unresolved,
}

/// Fitted slope of `ln(moment)` against `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub rate: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub intercept: f64,
    pub window: [f64; 2],
    pub points: usize,
    /// Points in the window dropped as zero, negative or diverged.
    pub excluded: usize,
    pub p: f64,
    /// Node position or `"energy"` / interior label.
    pub target: String,
    pub status: FitStatus,
}

impl ExponentEstimate {
    pub fn is_resolved(&self) -> bool {
        self.status == FitStatus::Resolved
    }

    /// Sign of the rate when it is either well fitted or significant.
    pub fn sign(&self) -> Option<f64> {
        if self.is_resolved() || self.rate.abs() > 2.0 * self.stderr {
            Some(self.rate.signum())
        } else {
            None
        }
    }
}

/// Default window: the last half of the recorded horizon.
pub fn default_window(series: &LogSeries) -> [f64; 2] {
    let t_end = series.times.last().copied().unwrap_or(0.0);
    [0.5 * t_end, t_end]
}

/// Least-squares rate of `series` on `window` (default: last half).
///
/// The standard error is the residual one, combined with the propagated
/// per-point error: the larger of the two for Monte Carlo series, their sum
/// for oracle series (whose point errors are step-halving changes).
pub fn fit_exponent(series: &LogSeries, p: f64, window: Option<[f64; 2]>) -> Result<ExponentEstimate> {
    let window = window.unwrap_or_else(|| default_window(series));
    let slack = 1e-9 * window[1].abs().max(1.0);
    let in_window: Vec<usize> = (0..series.times.len())
        .filter(|&i| series.times[i] >= window[0] - slack && series.times[i] <= window[1] + slack)
        .collect();
    let usable: Vec<usize> = in_window.iter().copied().filter(|&i| series.log_values[i].is_finite()).collect();
    let excluded = in_window.len() - usable.len();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::Analysis(format!(
            "fit window [{}, {}] has {} usable points (need {MIN_FIT_POINTS}, {excluded} excluded); record more times or widen the window",
            window[0],
            window[1],
            usable.len()
        )));
    }
    let x: Vec<f64> = usable.iter().map(|&i| series.times[i]).collect();
    let y: Vec<f64> = usable.iter().map(|&i| series.log_values[i]).collect();
    let fit = fit_line(&x, &y).ok_or_else(|| Error::Analysis("fit window has no time spread".into()))?;
    let mean_t = x.iter().sum::<f64>() / x.len() as f64;
    let sxx: f64 = x.iter().map(|t| (t - mean_t) * (t - mean_t)).sum();
    let propagate = |errs: &[f64]| -> f64 {
        let v: f64 = usable
            .iter()
            .zip(&x)
            .map(|(&i, t)| {
                let e = errs[i];
                let e = if e.is_finite() { e } else { 0.0 };
                (t - mean_t).powi(2) * e * e
            })
            .sum();
        v.sqrt() / sxx
    };
    let mut stderr = fit.slope_stderr;
    if let Some(se) = &series.log_stderr {
        stderr = stderr.max(propagate(se));
    }
    if let Some(r) = &series.refinement {
        stderr += propagate(r);
    }
    Ok(ExponentEstimate {
        rate: fit.slope,
        stderr,
        r_squared: fit.r_squared,
        intercept: fit.intercept,
        window,
        points: usable.len(),
        excluded,
        p,
        target: series.label.clone(),
        status: if fit.r_squared >= R2_RESOLVED {
            FitStatus::Resolved
        } else {
            FitStatus::Unresolved
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethod {
    Oracle,
    MonteCarlo,
}

/// What the rate is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SweepTarget {
    /// Moment at the node nearest `x`.
    Node { x: f64 },
    /// Energy `sqrt(h sum E|u|^2)`.
    Energy { epsilon: f64 },
    /// Interior infimum over `|x| <= R - epsilon`.
    InteriorInfimum { epsilon: f64 },
}

impl Default for SweepTarget {
    fn default() -> Self {
        SweepTarget::Node { x: 0.0 }
    }
}

/// One sweep configuration: a base run whose `xi` is varied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSetup {
    pub base: SimulationConfig,
    pub xi_values: Vec<f64>,
    pub method: SweepMethod,
    pub p: f64,
    pub target: SweepTarget,
    pub window: Option<[f64; 2]>,
    pub bisect: bool,
    /// Target bracket width of the oracle bisection.
    pub bracket_width: f64,
    pub max_bisections: usize,
}

impl SweepSetup {
    pub fn new(base: SimulationConfig, xi_values: Vec<f64>, method: SweepMethod) -> Self {
        Self {
            base,
            xi_values,
            method,
            p: 2.0,
            target: SweepTarget::default(),
            window: None,
            bisect: true,
            bracket_width: 0.1,
            max_bisections: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub xi: f64,
    pub estimate: ExponentEstimate,
    /// The log-moment series the rate was fitted to.
    pub series: LogSeries,
    /// Added by bisection rather than the initial scan.
    pub bisection: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepStatus {
    /// A sign change was found and bracketed.
    Bracketed,
    /// Every rate has the same sign.
    NoCrossoverInRange,
}

/// Rates across `xi` and the decay/growth crossover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub method: SweepMethod,
    pub p: f64,
    pub target: SweepTarget,
    /// Sorted by `xi`.
    pub points: Vec<SweepPoint>,
    /// `[xi-, xi+]` with `rate(xi-) < 0 < rate(xi+)`, both evaluated.
    pub bracket: Option<[f64; 2]>,
    /// MC only: midpoint where `|rate| < 2 stderr` stopped the bisection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossover_estimate: Option<f64>,
    pub status: SweepStatus,
    /// Rates nondecreasing in `xi` within `2 stderr` of each adjacent pair.
    pub monotone: bool,
    pub mu1: f64,
}

impl PhaseDiagram {
    pub fn bracket_width(&self) -> Option<f64> {
        self.bracket.map(|[a, b]| b - a)
    }

    pub fn rate_at(&self, xi: f64) -> Option<&ExponentEstimate> {
        self.points.iter().find(|p| p.xi == xi).map(|p| &p.estimate)
    }
}

fn pick_series(target: &SweepTarget, curve: &MomentCurve, radius: f64, energy: Option<LogSeries>) -> LogSeries {
    match *target {
        SweepTarget::Node { x } => curve.series_at(curve.nearest(x)),
        SweepTarget::InteriorInfimum { epsilon } => curve.interior_infimum(radius, epsilon),
        SweepTarget::Energy { .. } => energy.expect("energy series"),
    }
}

/// Second-moment oracle curve for `base` at noise level `xi`.
pub fn oracle_curve(base: &SimulationConfig, eval: &HeatKernelEvaluator, xi: f64) -> Result<MomentCurve> {
    let slope = base.sigma.linear_slope().ok_or_else(|| {
        Error::Precondition(format!("the Volterra oracle needs a linear sigma, got {}", base.sigma.label()))
    })?;
    let setup = VolterraSetup::new(xi, slope, base.dt, base.horizon, base.record_times.clone());
    if base.noise.is_white() {
        solve_volterra_white(eval, &base.u0, &setup)
    } else {
        Ok(solve_volterra_colored(eval, &base.u0, &setup, &base.noise)?.curve)
    }
}

fn evaluate_point(setup: &SweepSetup, eval: &HeatKernelEvaluator, xi: f64) -> Result<(ExponentEstimate, LogSeries)> {
    let grid = &setup.base.grid;
    let (curve, energy) = match setup.method {
        SweepMethod::Oracle => {
            let curve = oracle_curve(&setup.base, eval, xi)?;
            let energy = match setup.target {
                SweepTarget::Energy { epsilon } => Some(energy_curve(&curve, grid, epsilon)?.series()),
                _ => None,
            };
            (curve, energy)
        }
        SweepMethod::MonteCarlo => {
            let mut cfg = setup.base.clone();
            cfg.xi = xi;
            let summary = simulate_ensemble_with(&cfg, eval)?;
            let eps = match setup.target {
                SweepTarget::Energy { epsilon } | SweepTarget::InteriorInfimum { epsilon } => epsilon,
                SweepTarget::Node { .. } => 0.2 * grid.radius(),
            };
            let (curve, energy) = estimate_moments(&summary, grid, setup.p, eps)?;
            (curve, Some(energy.series()))
        }
    };
    let series = pick_series(&setup.target, &curve, grid.radius(), energy);
    let p = if matches!(setup.target, SweepTarget::Energy { .. }) { 2.0 } else { setup.p };
    Ok((fit_exponent(&series, p, setup.window)?, series))
}

/// Scan `xi`, then bisect the first sign change.
pub fn xi_sweep(setup: &SweepSetup) -> Result<PhaseDiagram> {
    setup.base.validate()?;
    if setup.xi_values.is_empty() {
        return Err(Error::Config("xi sweep needs at least one value".into()));
    }
    if setup.xi_values.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation("xi values must be finite and >= 0".into()));
    }
    if setup.method == SweepMethod::Oracle && setup.p != 2.0 {
        return Err(Error::Precondition(format!(
            "the oracle only provides second moments; use the Monte Carlo method for p = {}",
            setup.p
        )));
    }
    let eval = HeatKernelEvaluator::for_spec(setup.base.spec, &setup.base.grid)?;
    if setup.method == SweepMethod::MonteCarlo {
        setup.base.check_step(eval.mu1())?;
    }
    let mut xs = setup.xi_values.clone();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let scanned: Vec<Result<(ExponentEstimate, LogSeries)>> = xs.par_iter().map(|&xi| evaluate_point(setup, &eval, xi)).collect();
    let mut points = Vec::with_capacity(xs.len());
    for (xi, point) in xs.iter().zip(scanned) {
        let (estimate, series) = point?;
        points.push(SweepPoint {
            xi: *xi,
            estimate,
            series,
            bisection: false,
        });
    }

    let mut bracket = None;
    let mut crossover_estimate = None;
    let first_change = points.windows(2).position(|w| {
        matches!((w[0].estimate.sign(), w[1].estimate.sign()), (Some(a), Some(b)) if a < 0.0 && b > 0.0)
    });
    if let Some(k) = first_change {
        let (mut lo, mut hi) = (points[k].xi, points[k + 1].xi);
        if setup.bisect {
            for _ in 0..setup.max_bisections {
                if setup.method == SweepMethod::Oracle && hi - lo <= setup.bracket_width {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let (est, series) = evaluate_point(setup, &eval, mid)?;
                let sign = est.sign();
                let small = est.rate.abs() < 2.0 * est.stderr;
                points.push(SweepPoint {
                    xi: mid,
                    estimate: est,
                    series,
                    bisection: true,
                });
                if setup.method == SweepMethod::MonteCarlo && small {
                    crossover_estimate = Some(mid);
                    break;
                }
                match sign {
                    Some(s) if s < 0.0 => lo = mid,
                    Some(_) => hi = mid,
                    None => break,
                }
            }
        }
        bracket = Some([lo, hi]);
    }
    points.sort_by(|a, b| a.xi.total_cmp(&b.xi));
    let monotone = points.windows(2).all(|w| {
        let (a, b) = (&w[0].estimate, &w[1].estimate);
        b.rate >= a.rate - 2.0 * (a.stderr + b.stderr).max(0.0)
    });
    Ok(PhaseDiagram {
        method: setup.method,
        p: setup.p,
        target: setup.target,
        points,
        status: if bracket.is_some() {
            SweepStatus::Bracketed
        } else {
            SweepStatus::NoCrossoverInRange
        },
        bracket,
        crossover_estimate,
        monotone,
        mu1: eval.mu1(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplaceVerdict {
    Convergent,
    Divergent,
    Inconclusive,
}

/// `int_0^inf e^{-beta t} v(t) dt` from a recorded curve plus a fitted
/// exponential tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceProbe {
    pub beta: f64,
    /// Total when the tail converges.
    pub value: Option<f64>,
    /// Exact integral of the piecewise log-linear interpolant over the
    /// recorded horizon.
    pub recorded_part: f64,
    pub tail_rate: f64,
    pub tail_r_squared: f64,
    pub verdict: LaplaceVerdict,
}

/// `int_0^d e^{z tau} dtau / d`, stable near `z = 0`.
fn exp_ratio(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// Laplace-type integral of a log series; the verdict follows the fitted
/// tail rate against `beta`.
pub fn laplace_probe_series(series: &LogSeries, beta: f64, window: Option<[f64; 2]>) -> Result<LaplaceProbe> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Validation(format!("beta must be positive, got {beta}")));
    }
    let pts: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.log_values)
        .filter(|(_, y)| y.is_finite())
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Analysis("Laplace probe needs at least two finite points".into()));
    }
    let mut recorded = 0.0;
    for w in pts.windows(2) {
        let ((ta, ya), (tb, yb)) = (w[0], w[1]);
        let d = tb - ta;
        let s = (yb - ya) / d;
        recorded += (ya - beta * ta).exp() * d * exp_ratio((s - beta) * d);
    }
    let fit = fit_exponent(series, 2.0, window)?;
    let (t_end, y_end) = *pts.last().expect("two points");
    let verdict = if !fit.is_resolved() {
        LaplaceVerdict::Inconclusive
    } else if fit.rate > beta {
        LaplaceVerdict::Divergent
    } else {
        LaplaceVerdict::Convergent
    };
    let value = match verdict {
        LaplaceVerdict::Convergent if fit.rate < beta => {
            Some(recorded + (y_end - beta * t_end).exp() / (beta - fit.rate))
        }
        _ => None,
    };
    Ok(LaplaceProbe {
        beta,
        value,
        recorded_part: recorded,
        tail_rate: fit.rate,
        tail_r_squared: fit.r_squared,
        verdict,
    })
}

/// [`laplace_probe_series`] on the interior infimum of a moment curve.
pub fn laplace_probe(curve: &MomentCurve, radius: f64, epsilon: f64, beta: f64) -> Result<LaplaceProbe> {
    laplace_probe_series(&curve.interior_infimum(radius, epsilon), beta, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(times: &[f64], f: impl Fn(f64) -> f64) -> LogSeries {
        LogSeries {
            label: "test".into(),
            times: times.to_vec(),
            log_values: times.iter().map(|&t| f(t).ln()).collect(),
            log_stderr: None,
            refinement: None,
        }
    }

    fn grid_times(n: usize, t_end: f64) -> Vec<f64> {
        (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
    }

    #[test]
    fn exact_exponential_rate() {
        let s = series(&grid_times(40, 4.0), |t| 7.0 * (2.0 * t).exp());
        let e = fit_exponent(&s, 2.0, None).unwrap();
        assert!((e.rate - 2.0).abs() < 1e-9);
        assert!((e.r_squared - 1.0).abs() < 1e-12);
        assert!(e.is_resolved());
    }

    #[test]
    fn short_window_is_an_error() {
        let s = series(&grid_times(6, 1.0), |t| t.exp());
        assert_eq!(fit_exponent(&s, 2.0, None).unwrap_err().kind(), "analysis");
    }

    #[test]
    fn zero_values_are_excluded_and_counted() {
        let mut s = series(&grid_times(20, 2.0), |t| (-t).exp());
        s.log_values[18] = f64::NAN;
        let e = fit_exponent(&s, 2.0, None).unwrap();
        assert_eq!(e.excluded, 1);
        assert!((e.rate + 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_curve_laplace_value() {
        let s = series(&grid_times(50, 5.0), |_| 3.0);
        let probe = laplace_probe_series(&s, 1.0, None).unwrap();
        assert_eq!(probe.verdict, LaplaceVerdict::Convergent);
        assert!((probe.value.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn growth_faster_than_beta_diverges() {
        let s = series(&grid_times(50, 5.0), |t| (1.5 * t).exp());
        let probe = laplace_probe_series(&s, 1.0, None).unwrap();
        assert_eq!(probe.verdict, LaplaceVerdict::Divergent);
        assert!(probe.value.is_none());
    }

    proptest! {
        #[test]
        fn scaling_does_not_change_rate(k in 1e-6f64..1e6, r in -3.0f64..3.0, noise in 0.0f64..0.05) {
            let times = grid_times(30, 3.0);
            let base = series(&times, |t| (r * t + noise * (7.0 * t).sin()).exp());
            let mut scaled = base.clone();
            for v in scaled.log_values.iter_mut() {
                *v += k.ln();
            }
            let a = fit_exponent(&base, 2.0, None).unwrap();
            let b = fit_exponent(&scaled, 2.0, None).unwrap();
            prop_assert!((a.rate - b.rate).abs() <= 1e-9 * (1.0 + a.rate.abs()));
        }
    }
}
