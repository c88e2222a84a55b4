//! Dirichlet heat kernel on the grid, its two-sided bounds, and the
//! Laplace-type time integrals built from it.
//!
//! With `-L = Q diag(lambda) Q^T` (Euclidean-orthonormal `Q`), the grid
//! kernel is `P(t) = Q diag(e^{-lambda t}) Q^T / h`, so `h P(t) = exp(-t A)`
//! and Chapman-Kolmogorov holds in exact spectral arithmetic.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DomainGrid;
use crate::noise::CorrelationModel;
use crate::operator::GeneratorSpec;
use crate::quadrature::{integrate, integrate_graded};
use crate::spectral::{spectrum_for, SpectralDecomposition};
use crate::stats::fit_line;

/// Spectral heat-kernel evaluator with a thread-safe propagator memo.
#[derive(Debug)]
pub struct HeatKernelEvaluator {
    spectrum: SpectralDecomposition,
    cache: RwLock<HashMap<u64, Arc<DMatrix<f64>>>>,
}

impl HeatKernelEvaluator {
    pub fn new(spectrum: SpectralDecomposition) -> Self {
        Self {
            spectrum,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn for_spec(spec: GeneratorSpec, grid: &DomainGrid) -> Result<Self> {
        Ok(Self::new(spectrum_for(spec, grid)?))
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.spectrum.grid
    }

    pub fn mu1(&self) -> f64 {
        self.spectrum.mu1()
    }

    pub fn len(&self) -> usize {
        self.spectrum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectrum.is_empty()
    }

    fn check_time(t: f64) -> Result<()> {
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("time must be positive and finite, got {t}")))
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::Query(format!("node index {i} out of range 0..{}", self.len())))
        }
    }

    /// `Q diag(weights) Q^T`, exactly symmetric.
    fn spectral_matrix(&self, weights: &[f64]) -> DMatrix<f64> {
        let q = &self.spectrum.vectors;
        let mut scaled = q.clone();
        for (k, &w) in weights.iter().enumerate() {
            scaled.column_mut(k).scale_mut(w);
        }
        let m = scaled * q.transpose();
        (&m + m.transpose()) * 0.5
    }

    /// `P(t)` without touching the cache.
    pub fn kernel_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        Self::check_time(t)?;
        let inv_h = 1.0 / self.grid().h();
        let w: Vec<f64> = self.spectrum.eigenvalues.iter().map(|l| (-l * t).exp() * inv_h).collect();
        Ok(self.spectral_matrix(&w))
    }

    /// `P(t)`, memoized by the bit pattern of `t`.
    pub fn propagator(&self, t: f64) -> Result<Arc<DMatrix<f64>>> {
        Self::check_time(t)?;
        let key = t.to_bits();
        if let Some(p) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(self.kernel_matrix(t)?);
        let mut guard = self.cache.write().expect("cache lock");
        Ok(Arc::clone(guard.entry(key).or_insert(p)))
    }

    pub fn cached_propagators(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    pub fn clear_cache(&self) {
        self.cache.write().expect("cache lock").clear();
    }

    /// The one-step transition matrix `h P(t) = exp(-t A)`.
    pub fn transition(&self, t: f64) -> Result<DMatrix<f64>> {
        Self::check_time(t)?;
        let w: Vec<f64> = self.spectrum.eigenvalues.iter().map(|l| (-l * t).exp()).collect();
        Ok(self.spectral_matrix(&w))
    }

    /// `p_D(t, x_i, x_j)`.
    pub fn evaluate_kernel(&self, t: f64, i: usize, j: usize) -> Result<f64> {
        Self::check_time(t)?;
        self.check_index(i)?;
        self.check_index(j)?;
        let q = &self.spectrum.vectors;
        let s: f64 = self
            .spectrum
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| (-l * t).exp() * (q[(i, k)] * q[(j, k)]))
            .sum();
        Ok(s / self.grid().h())
    }

    /// `h P(t) v`; the identity at `t = 0`.
    pub fn apply_semigroup(&self, t: f64, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.len() {
            return Err(Error::Data(format!(
                "grid function has {} entries, expected {}",
                v.len(),
                self.len()
            )));
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite entry {} at node {i}", v[i])));
        }
        if t == 0.0 {
            return Ok(v.to_vec());
        }
        Self::check_time(t)?;
        let q = &self.spectrum.vectors;
        let mut coef = q.tr_mul(&nalgebra::DVector::from_column_slice(v));
        for (c, l) in coef.iter_mut().zip(&self.spectrum.eigenvalues) {
            *c *= (-l * t).exp();
        }
        Ok((q * coef).as_slice().to_vec())
    }

    /// Surviving mass `h sum_j P(t)_ij` at every node.
    pub fn mass(&self, t: f64) -> Result<Vec<f64>> {
        self.apply_semigroup(t, &vec![1.0; self.len()])
    }

    /// `P(t)` restricted to `rows x cols`, dropping modes whose weight
    /// relative to the principal one is below `e^{-50}`.
    fn kernel_block(&self, t: f64, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let lam = &self.spectrum.eigenvalues;
        let q = &self.spectrum.vectors;
        let keep: Vec<usize> = (0..lam.len()).filter(|&k| (lam[k] - lam[0]) * t < 50.0).collect();
        let inv_h = 1.0 / self.grid().h();
        let a = DMatrix::from_fn(rows.len(), keep.len(), |r, c| {
            let k = keep[c];
            q[(rows[r], k)] * (-lam[k] * t).exp() * inv_h
        });
        let b = DMatrix::from_fn(cols.len(), keep.len(), |r, c| q[(cols[r], keep[c])]);
        a * b.transpose()
    }
}

/// Measured constants of the two-sided kernel bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub epsilon: f64,
    pub alpha: f64,
    /// Upper constant in `p <= c (t^{-1/alpha} ^ t/|x-y|^{1+alpha})` for
    /// small `t`, over all pairs.
    pub c1_small_t: f64,
    /// Lower constant of the same form over interior pairs, `t <= epsilon^alpha`
    /// (near-diagonal pairs `|x-y| <= t^{1/2}` when `alpha = 2`).
    pub c2_small_t: f64,
    pub small_t_window: [f64; 2],
    /// Fitted exponent of `p(t, 0, 0)` against `t`; compare with `-1/alpha`.
    pub small_t_exponent: f64,
    pub small_t_exponent_expected: f64,
    pub mu1: f64,
    /// Fitted long-time decay rate of the interior kernel.
    pub mu1_fit: f64,
    pub mu1_fit_window: [f64; 2],
    pub mu1_fit_r_squared: f64,
    /// Lower constant `min e^{mu1 t} p` over interior pairs and `t >= t0`.
    pub c1_long: f64,
    /// Upper constant `max e^{mu1 t} p` over all pairs and `t >= t0`.
    pub c2_long: f64,
    pub t0: f64,
    /// `"factor-10 band"` or, when the limiting interior spread is itself
    /// above 10, `"within factor 2 of principal mode"`.
    pub t0_criterion: String,
    /// `max/min` of `phi_1(x) phi_1(y)` over interior pairs.
    pub limiting_spread: f64,
    pub interior_nodes: usize,
}

const BAND_FACTOR: f64 = 10.0;

fn clamp0(v: f64) -> f64 {
    v.max(0.0)
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Measure the small-time, interior and long-time kernel constants.
pub fn verify_kernel_bounds(eval: &HeatKernelEvaluator, epsilon: f64) -> Result<KernelBoundReport> {
    let grid = eval.grid();
    let r = grid.radius();
    if !(epsilon > 0.0 && epsilon < r) {
        return Err(Error::Validation(format!(
            "interior margin must satisfy 0 < epsilon < R = {r}, got {epsilon}"
        )));
    }
    let interior = grid.interior(epsilon);
    if interior.len() < 2 {
        return Err(Error::Validation(format!(
            "interior ball B_(R-epsilon) holds {} nodes; refine the grid or reduce epsilon",
            interior.len()
        )));
    }
    let alpha = eval.spectrum().spec.alpha();
    let mu1 = eval.mu1();
    if !(mu1 > 0.0) {
        return Err(Error::Precondition(format!(
            "principal eigenvalue {mu1} is not positive; long-time bounds need a decaying kernel"
        )));
    }
    let all: Vec<usize> = (0..grid.len()).collect();
    let bound = |t: f64, d: f64| -> f64 {
        let near = t.powf(-1.0 / alpha);
        if d == 0.0 {
            near
        } else {
            near.min(t / d.powf(1.0 + alpha))
        }
    };

    // small times: on-diagonal exponent and upper constant
    let small_t_window = [1e-3, 1e-1];
    let centre = grid.nearest(0.0);
    let ts = log_space(small_t_window[0], small_t_window[1], 13);
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for &t in &ts {
        let p = eval.evaluate_kernel(t, centre, centre)?;
        lx.push(t.ln());
        ly.push(clamp0(p).max(f64::MIN_POSITIVE).ln());
    }
    let small_fit = fit_line(&lx, &ly)
        .ok_or_else(|| Error::Analysis("small-time fit window is degenerate".into()))?;
    let mut c1_small_t = 0.0f64;
    for &t in ts.iter().step_by(3) {
        let p = eval.kernel_block(t, &all, &all);
        for (a, &i) in all.iter().enumerate() {
            for (b, &j) in all.iter().enumerate() {
                let d = (grid.x(i) - grid.x(j)).abs();
                c1_small_t = c1_small_t.max(clamp0(p[(a, b)]) / bound(t, d));
            }
        }
    }

    // interior lower constant for t <= epsilon^alpha
    let t_hi = epsilon.powf(alpha).min(small_t_window[1]);
    let mut c2_small_t = f64::INFINITY;
    for &t in &log_space(t_hi / 100.0, t_hi, 5) {
        let p = eval.kernel_block(t, &interior, &interior);
        for (a, &i) in interior.iter().enumerate() {
            for (b, &j) in interior.iter().enumerate() {
                let d = (grid.x(i) - grid.x(j)).abs();
                if alpha >= 2.0 && d > t.sqrt() {
                    continue;
                }
                c2_small_t = c2_small_t.min(clamp0(p[(a, b)]) / bound(t, d));
            }
        }
    }

    // long-time rate from the mean log-kernel over interior pairs
    let mu1_fit_window = [5.0 / mu1, 15.0 / mu1];
    let mut fx = Vec::new();
    let mut fy = Vec::new();
    for i in 0..11 {
        let t = mu1_fit_window[0] + (mu1_fit_window[1] - mu1_fit_window[0]) * i as f64 / 10.0;
        let p = eval.kernel_block(t, &interior, &interior);
        let mean_log = p.iter().map(|v| clamp0(*v).max(f64::MIN_POSITIVE).ln()).sum::<f64>() / p.len() as f64;
        fx.push(t);
        fy.push(mean_log);
    }
    let long_fit = fit_line(&fx, &fy)
        .ok_or_else(|| Error::Analysis("long-time fit window is degenerate; use a longer t range".into()))?;

    // t0: first time the interior spread of e^{mu1 t} p enters the band
    let phi = eval.spectrum().eigenfunction(0);
    let pi: Vec<f64> = interior.iter().map(|&i| phi[i]).collect();
    let (pmin, pmax) = pi.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let limiting_spread = (pmax / pmin).powi(2);
    let use_band = limiting_spread < BAND_FACTOR;
    let entered = |t: f64| -> bool {
        let p = eval.kernel_block(t, &interior, &interior);
        if use_band {
            let (lo, hi) = p.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(clamp0(v)), hi.max(v)));
            lo > 0.0 && hi / lo <= BAND_FACTOR
        } else {
            let g = (mu1 * t).exp();
            (0..pi.len()).all(|a| {
                (0..pi.len()).all(|b| {
                    let r = g * p[(a, b)] / (pi[a] * pi[b]);
                    (0.5..=2.0).contains(&r)
                })
            })
        }
    };
    let t_end = 20.0 / mu1;
    let scan = log_space(1e-3 / mu1, t_end, 60);
    let first = scan.iter().position(|&t| entered(t)).ok_or_else(|| {
        Error::Analysis(format!(
            "kernel never entered the long-time band before t = {t_end}; use a longer t range"
        ))
    })?;
    let mut t0 = scan[first];
    if first > 0 {
        let (mut lo, mut hi) = (scan[first - 1], scan[first]);
        for _ in 0..12 {
            let mid = 0.5 * (lo + hi);
            if entered(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        t0 = hi;
    }

    let mut c1_long = f64::INFINITY;
    let mut c2_long = 0.0f64;
    let mut long_times = vec![t0];
    long_times.extend(scan.iter().copied().filter(|&t| t > t0));
    for &t in &long_times {
        let g = (mu1 * t).exp();
        let pin = eval.kernel_block(t, &interior, &interior);
        c1_long = c1_long.min(pin.iter().map(|v| g * clamp0(*v)).fold(f64::INFINITY, f64::min));
        let pall = eval.kernel_block(t, &all, &all);
        c2_long = c2_long.max(pall.iter().map(|v| g * v).fold(0.0, f64::max));
    }

    Ok(KernelBoundReport {
        epsilon,
        alpha,
        c1_small_t,
        c2_small_t,
        small_t_window,
        small_t_exponent: small_fit.slope,
        small_t_exponent_expected: -1.0 / alpha,
        mu1,
        mu1_fit: -long_fit.slope,
        mu1_fit_window,
        mu1_fit_r_squared: long_fit.r_squared,
        c1_long,
        c2_long,
        t0,
        t0_criterion: if use_band {
            "factor-10 band".into()
        } else {
            "within factor 2 of principal mode".into()
        },
        limiting_spread,
        interior_nodes: interior.len(),
    })
}

/// Which Laplace-type kernel integral to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    /// `int_0^inf e^{beta t} p(t, x, x) dt`, finite for `0 < beta < mu1`.
    DiagonalLaplace,
    /// `sup_t e^{beta t} int p(t, x, y) dy`, bounded for `0 < beta < mu1`.
    MassSupremum,
    /// `int e^{beta t} int int p(t,x1,y1) p(t,x2,y2) f(y1,y2) dy dt`,
    /// finite for `0 < beta < 2 mu1`.
    CorrelatedPair,
    /// `int e^{-beta t} p(t,x1,y1) p(t,x2,y2) dt`, bounded below for interior
    /// points and `beta > 0`.
    InteriorPairLower,
}

impl LemmaId {
    pub fn id(&self) -> &'static str {
        match self {
            LemmaId::DiagonalLaplace => "diagonal-laplace",
            LemmaId::MassSupremum => "mass-supremum",
            LemmaId::CorrelatedPair => "correlated-pair",
            LemmaId::InteriorPairLower => "interior-pair-lower",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diagonal-laplace" => Ok(LemmaId::DiagonalLaplace),
            "mass-supremum" => Ok(LemmaId::MassSupremum),
            "correlated-pair" => Ok(LemmaId::CorrelatedPair),
            "interior-pair-lower" => Ok(LemmaId::InteriorPairLower),
            other => Err(Error::Validation(format!(
                "unknown integral {other:?} (expected diagonal-laplace, mass-supremum, correlated-pair or interior-pair-lower)"
            ))),
        }
    }

    /// Number of spatial points the integrand takes.
    pub fn arity(&self) -> usize {
        match self {
            LemmaId::DiagonalLaplace | LemmaId::MassSupremum => 1,
            LemmaId::CorrelatedPair => 2,
            LemmaId::InteriorPairLower => 4,
        }
    }
}

/// Knobs for [`lemma_integral_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaOptions {
    /// Interior margin for the interior-pair point check.
    pub epsilon: f64,
    /// Time separating the reported head and tail contributions.
    pub split_time: Option<f64>,
    /// Long-time lower constant `c1_long`; enables the interior-pair lower bound.
    pub long_time_lower: Option<f64>,
    /// `T_max = horizon_factor / mu1`.
    pub horizon_factor: f64,
    pub rel_tol: f64,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            split_time: None,
            long_time_lower: None,
            horizon_factor: 20.0,
            rel_tol: 1e-9,
        }
    }
}

impl LemmaOptions {
    /// Split at the measured `t0` and use the measured constants.
    pub fn from_bounds(report: &KernelBoundReport) -> Self {
        Self {
            epsilon: report.epsilon,
            split_time: Some(report.t0),
            long_time_lower: Some(report.c1_long),
            ..Self::default()
        }
    }
}

pub const VERDICT_FINITE: &str = "finite";
pub const VERDICT_VIOLATED: &str = "hypothesis-violated";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: LemmaId,
    pub beta: f64,
    pub mu1: f64,
    /// Requested positions.
    pub points: Vec<f64>,
    /// Grid positions actually used.
    pub nodes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationModel>,
    pub hypothesis: String,
    pub hypothesis_holds: bool,
    pub value: f64,
    pub finite: bool,
    pub verdict: String,
    pub quadrature_error: f64,
    pub t_max: f64,
    /// Analytic exponential tail beyond `t_max` (zero when not appended).
    pub analytic_tail: f64,
    pub split_time: f64,
    /// Contribution of `[0, split_time]`.
    pub head: f64,
    /// Contribution beyond `split_time`, including the analytic tail.
    pub tail: f64,
    /// `c1_long^2 e^{-(beta + 2 mu1) t0} / (beta + 2 mu1)` for the interior pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
}

/// Evaluate a lemma integral with default options.
pub fn lemma_integral(
    eval: &HeatKernelEvaluator,
    lemma: LemmaId,
    beta: f64,
    points: &[f64],
    correlation: Option<&CorrelationModel>,
) -> Result<LemmaReport> {
    lemma_integral_with(eval, lemma, beta, points, correlation, &LemmaOptions::default())
}

pub fn lemma_integral_with(
    eval: &HeatKernelEvaluator,
    lemma: LemmaId,
    beta: f64,
    points: &[f64],
    correlation: Option<&CorrelationModel>,
    opts: &LemmaOptions,
) -> Result<LemmaReport> {
    if !beta.is_finite() {
        return Err(Error::Validation(format!("beta must be finite, got {beta}")));
    }
    if points.len() != lemma.arity() {
        return Err(Error::Validation(format!(
            "{} takes {} point(s), got {}",
            lemma.id(),
            lemma.arity(),
            points.len()
        )));
    }
    let grid = eval.grid();
    let r = grid.radius();
    if let Some(p) = points.iter().find(|p| !(p.abs() < r)) {
        return Err(Error::Validation(format!("point {p} lies outside (-R, R) with R = {r}")));
    }
    let mu1 = eval.mu1();
    if !(mu1 > 0.0) {
        return Err(Error::Precondition(format!(
            "principal eigenvalue {mu1} is not positive; the lemma integrals need a decaying kernel"
        )));
    }
    let alpha = eval.spectrum().spec.alpha();
    let idx: Vec<usize> = points.iter().map(|&p| grid.nearest(p)).collect();
    let nodes: Vec<f64> = idx.iter().map(|&i| grid.x(i)).collect();
    let t_max = opts.horizon_factor / mu1;
    let split = opts.split_time.unwrap_or(1.0 / mu1).clamp(0.0, t_max);
    let lam = &eval.spectrum().eigenvalues;
    let q = &eval.spectrum().vectors;
    let h = grid.h();
    let n = lam.len();

    let (hypothesis, holds) = match lemma {
        LemmaId::DiagonalLaplace | LemmaId::MassSupremum => ("0 < beta < mu1".to_string(), beta > 0.0 && beta < mu1),
        LemmaId::CorrelatedPair => ("0 < beta < 2 mu1".to_string(), beta > 0.0 && beta < 2.0 * mu1),
        LemmaId::InteriorPairLower => {
            let limit = r - opts.epsilon;
            let inside = nodes.iter().all(|x| x.abs() <= limit + 1e-12);
            (format!("beta > 0 and points in |x| <= {limit}"), beta > 0.0 && inside)
        }
    };

    // modal coefficients c_k of the single-kernel integrands
    let diag_coef: Vec<f64> = match lemma {
        LemmaId::DiagonalLaplace => (0..n).map(|k| q[(idx[0], k)].powi(2) / h).collect(),
        LemmaId::MassSupremum => {
            let ones = q.row_sum();
            (0..n).map(|k| q[(idx[0], k)] * ones[k]).collect()
        }
        _ => Vec::new(),
    };
    let modal = |t: f64, coef: &[f64]| -> f64 { coef.iter().zip(lam).map(|(c, l)| c * (-l * t).exp()).sum() };

    let pair = |t: f64, a: usize, b: usize| -> f64 {
        (0..n).map(|k| (-lam[k] * t).exp() * q[(a, k)] * q[(b, k)]).sum::<f64>() / h
    };

    // correlated pair uses G = Q^T C Q
    let gram = if lemma == LemmaId::CorrelatedPair {
        let model = correlation.ok_or_else(|| {
            Error::Validation("the correlated-pair integral needs a colored correlation model".into())
        })?;
        let c = model.covariance_matrix(grid)?;
        Some(q.transpose() * c * q)
    } else {
        None
    };
    let correlated = |t: f64| -> f64 {
        let g = gram.as_ref().expect("gram");
        let a: Vec<f64> = (0..n).map(|k| (-lam[k] * t).exp() * q[(idx[0], k)]).collect();
        let b: Vec<f64> = (0..n).map(|k| (-lam[k] * t).exp() * q[(idx[1], k)]).collect();
        let mut s = 0.0;
        for (l, &bl) in b.iter().enumerate() {
            if bl == 0.0 {
                continue;
            }
            let col = g.column(l);
            let inner: f64 = a.iter().zip(col.iter()).map(|(x, y)| x * y).sum();
            s += inner * bl;
        }
        s
    };

    if lemma == LemmaId::DiagonalLaplace && alpha <= 1.0 {
        return Err(Error::Validation(format!(
            "the diagonal integral needs alpha > 1 for an integrable diagonal singularity, got alpha = {alpha}"
        )));
    }

    let integrand = |t: f64| -> f64 {
        match lemma {
            LemmaId::DiagonalLaplace => (beta * t).exp() * modal(t, &diag_coef),
            LemmaId::MassSupremum => (beta * t).exp() * modal(t, &diag_coef),
            LemmaId::CorrelatedPair => (beta * t).exp() * correlated(t),
            LemmaId::InteriorPairLower => (-beta * t).exp() * pair(t, idx[0], idx[1]) * pair(t, idx[2], idx[3]),
        }
    };

    let (value, head, tail, error, analytic_tail) = if lemma == LemmaId::MassSupremum {
        let mut times = log_space(1e-6 / mu1, t_max, 400);
        times.push(split);
        let mut sup = 0.0f64;
        let mut head_sup = 0.0f64;
        let mut tail_sup = 0.0f64;
        for &t in &times {
            let v = integrand(t);
            sup = sup.max(v);
            if t <= split {
                head_sup = head_sup.max(v);
            } else {
                tail_sup = tail_sup.max(v);
            }
        }
        (sup, head_sup, tail_sup, 0.0, 0.0)
    } else {
        let abs_tol = 1e-300;
        let head_int = if lemma == LemmaId::DiagonalLaplace {
            integrate_graded(integrand, split, 3.0, abs_tol, opts.rel_tol, 4000)
        } else {
            integrate(integrand, 0.0, split, abs_tol, opts.rel_tol, 4000)
        };
        let body = integrate(integrand, split, t_max, abs_tol, opts.rel_tol, 4000);
        let end = integrand(t_max);
        let tail_rate = match lemma {
            LemmaId::DiagonalLaplace => mu1 - beta,
            LemmaId::CorrelatedPair => 2.0 * mu1 - beta,
            _ => beta + 2.0 * mu1,
        };
        let analytic = if holds && tail_rate > 0.0 { end / tail_rate } else { 0.0 };
        let tail = body.value + analytic;
        (
            head_int.value + tail,
            head_int.value,
            tail,
            head_int.error + body.error,
            analytic,
        )
    };

    let lower_bound = match (lemma, opts.long_time_lower, opts.split_time) {
        (LemmaId::InteriorPairLower, Some(c), Some(t0)) => {
            let rate = beta + 2.0 * mu1;
            Some(c * c * (-rate * t0).exp() / rate)
        }
        _ => None,
    };
    let finite = holds && value.is_finite();
    Ok(LemmaReport {
        lemma_id: lemma,
        beta,
        mu1,
        points: points.to_vec(),
        nodes,
        correlation: if lemma == LemmaId::CorrelatedPair { correlation.copied() } else { None },
        hypothesis,
        hypothesis_holds: holds,
        value: clamp0(value),
        finite,
        verdict: if holds { VERDICT_FINITE } else { VERDICT_VIOLATED }.into(),
        quadrature_error: error,
        t_max,
        analytic_tail,
        split_time: split,
        head: clamp0(head),
        tail: clamp0(tail),
        lower_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn eval(alpha: f64, n: usize) -> HeatKernelEvaluator {
        let g = DomainGrid::new(1.0, n).unwrap();
        HeatKernelEvaluator::for_spec(GeneratorSpec::Fractional { alpha, nu: 1.0 }, &g).unwrap()
    }

    #[test]
    fn chapman_kolmogorov_and_symmetry() {
        let e = eval(1.5, 64);
        let h = e.grid().h();
        let (t, s) = (0.03, 0.11);
        let lhs = e.kernel_matrix(t + s).unwrap();
        let rhs = e.kernel_matrix(t).unwrap() * (e.kernel_matrix(s).unwrap() * h);
        assert!((&lhs - &rhs).norm() / lhs.norm() < 1e-9);
        assert_eq!(lhs, lhs.transpose());
        for (i, j) in [(0, 5), (3, 40), (63, 1)] {
            assert_eq!(e.evaluate_kernel(0.2, i, j).unwrap(), e.evaluate_kernel(0.2, j, i).unwrap());
        }
    }

    #[test]
    fn sub_markov_mass_nonincreasing() {
        let e = eval(1.2, 48);
        let mut prev = vec![1.0 + 1e-12; 48];
        for t in [1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0, 3.0] {
            let m = e.mass(t).unwrap();
            for (a, b) in m.iter().zip(&prev) {
                assert!(*a <= 1.0 + 1e-8);
                assert!(*a <= b + 1e-9);
            }
            prev = m;
        }
    }

    #[test]
    fn semigroup_identity_and_composition() {
        let e = eval(1.5, 40);
        let v: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin().abs()).collect();
        assert_eq!(e.apply_semigroup(0.0, &v).unwrap(), v);
        let a = e.apply_semigroup(0.3, &e.apply_semigroup(0.2, &v).unwrap()).unwrap();
        let b = e.apply_semigroup(0.5, &v).unwrap();
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * scale);
        }
        assert!(b.iter().all(|&x| x >= -1e-10));
        let mut bad = v.clone();
        bad[3] = f64::NAN;
        assert_eq!(e.apply_semigroup(0.1, &bad).unwrap_err().kind(), "data");
        assert_eq!(e.evaluate_kernel(0.0, 0, 0).unwrap_err().kind(), "domain");
    }

    #[test]
    fn propagator_cache_is_shared() {
        let e = eval(1.5, 20);
        let a = e.propagator(0.1).unwrap();
        let b = e.propagator(0.1).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(e.cached_propagators(), 1);
        assert_eq!(*a, e.kernel_matrix(0.1).unwrap());
    }

    #[test]
    fn classical_long_time_rate() {
        let e = eval(2.0, 255);
        let c = e.grid().nearest(0.0);
        let rate = -e.evaluate_kernel(5.0, c, c).unwrap().ln() / 5.0;
        let exact = PI * PI / 4.0;
        assert!((rate - exact).abs() / exact < 0.02, "{rate}");
    }

    #[test]
    fn lemma_ids_round_trip() {
        for l in [
            LemmaId::DiagonalLaplace,
            LemmaId::MassSupremum,
            LemmaId::CorrelatedPair,
            LemmaId::InteriorPairLower,
        ] {
            assert_eq!(LemmaId::parse(l.id()).unwrap(), l);
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{}\"", l.id()));
        }
    }

    #[test]
    fn diagonal_laplace_matches_modal_sum() {
        // int_0^inf e^{beta t} p(t,x,x) dt = sum_k q_xk^2 / (h (lambda_k - beta))
        let e = eval(1.5, 64);
        let mu1 = e.mu1();
        let beta = 0.5 * mu1;
        let rep = lemma_integral(&e, LemmaId::DiagonalLaplace, beta, &[0.0], None).unwrap();
        let i = e.grid().nearest(0.0);
        let q = &e.spectrum().vectors;
        let exact: f64 = e
            .spectrum()
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| q[(i, k)].powi(2) / (e.grid().h() * (l - beta)))
            .sum();
        assert!(rep.finite);
        assert!((rep.value - exact).abs() / exact < 1e-6, "{} vs {exact}", rep.value);
    }

    #[test]
    fn violated_hypothesis_is_reported_not_raised() {
        let e = eval(1.5, 32);
        let rep = lemma_integral(&e, LemmaId::DiagonalLaplace, 1.5 * e.mu1(), &[0.0], None).unwrap();
        assert!(!rep.finite);
        assert_eq!(rep.verdict, VERDICT_VIOLATED);
        let low = eval(0.8, 32);
        assert!(lemma_integral(&low, LemmaId::DiagonalLaplace, 0.1, &[0.0], None).is_err());
    }
}
