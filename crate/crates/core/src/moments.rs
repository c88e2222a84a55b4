//! Second-moment oracles for linear `sigma` and moment/energy curves from
//! Monte Carlo ensembles.
//!
//! With `sigma(u) = L u` the second moments solve closed Volterra
//! equations. White noise gives, for `m_t(x) = E|u_t(x)|^2`,
//!
//! ```text
//! m_t(x) = g_t(x)^2 + xi^2 L^2 int_0^t sum_y h p(t-s,x,y)^2 m_s(y) ds
//! ```
//!
//! and colored noise gives the full covariance
//!
//! ```text
//! M_t = g_t g_t^T + xi^2 L^2 int_0^t E(t-s) (C o M_s) E(t-s) ds,
//! ```
//!
//! where `g_t = h P(t) u0` and `E = h P`. In the eigenbasis both kernels
//! are sums of exponentials `e^{-(lambda_k + lambda_l)(t-s)}`, so the time
//! integrals over one step are done exactly against a piecewise-linear
//! interpolant of the forcing (product integration). The weights absorb
//! the stiff modes, including the integrable on-diagonal singularity of the
//! white-noise kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DomainGrid;
use crate::heatkernel::HeatKernelEvaluator;
use crate::noise::CorrelationModel;
use crate::sde::EnsembleSummary;

/// Where a curve came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    VolterraOracle,
    MonteCarlo,
}

impl Provenance {
    pub fn tag(&self) -> &'static str {
        match self {
            Provenance::VolterraOracle => "volterra-oracle",
            Provenance::MonteCarlo => "monte-carlo",
        }
    }
}

/// `E|u_t(x)|^p` on record times x nodes.
///
/// Values are stored as `values[t][i] * exp(log_scale[t])` so that strongly
/// growing or decaying oracle solutions stay representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub p: f64,
    pub provenance: Provenance,
    pub times: Vec<f64>,
    pub nodes: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub log_scale: Vec<f64>,
    /// Monte Carlo standard errors, same scaling as `values`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<Vec<f64>>>,
    /// Oracle step-halving change, max relative over nodes, per time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<Vec<f64>>,
    /// Paths that contributed at each time (Monte Carlo only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_paths: Option<Vec<u64>>,
}

/// A scalar time series on the log scale, the common input of the fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSeries {
    pub label: String,
    pub times: Vec<f64>,
    /// `ln value`; `NaN` where the value is unusable (zero, diverged).
    pub log_values: Vec<f64>,
    /// Standard error of `ln value` (`stderr / value`), when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_stderr: Option<Vec<f64>>,
    /// Relative refinement error of the underlying oracle, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<Vec<f64>>,
}

fn ln_or_nan(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v.ln()
    } else {
        f64::NAN
    }
}

impl MomentCurve {
    /// Unscaled value `E|u_t(x_i)|^p` (may overflow for extreme growth).
    pub fn value(&self, time: usize, node: usize) -> f64 {
        self.values[time][node] * self.log_scale[time].exp()
    }

    pub fn ln_value(&self, time: usize, node: usize) -> f64 {
        ln_or_nan(self.values[time][node]) + self.log_scale[time]
    }

    /// Series at one node.
    pub fn series_at(&self, node: usize) -> LogSeries {
        let nt = self.times.len();
        LogSeries {
            label: format!("x={}", self.nodes[node]),
            times: self.times.clone(),
            log_values: (0..nt).map(|t| self.ln_value(t, node)).collect(),
            log_stderr: self.stderr.as_ref().map(|se| {
                (0..nt)
                    .map(|t| {
                        let v = self.values[t][node];
                        if v > 0.0 {
                            se[t][node] / v
                        } else {
                            f64::NAN
                        }
                    })
                    .collect()
            }),
            refinement: self.refinement.clone(),
        }
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        self.nodes
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Interior infimum `min_{|x| <= R - eps} E|u_t(x)|^p` per time.
    pub fn interior_infimum(&self, radius: f64, epsilon: f64) -> LogSeries {
        let limit = radius - epsilon + 1e-12 * radius;
        let inside: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].abs() <= limit).collect();
        let nt = self.times.len();
        let mut log_values = Vec::with_capacity(nt);
        let mut log_stderr = Vec::with_capacity(nt);
        for t in 0..nt {
            let best = inside
                .iter()
                .copied()
                .min_by(|&a, &b| self.values[t][a].total_cmp(&self.values[t][b]));
            match best {
                Some(i) => {
                    log_values.push(self.ln_value(t, i));
                    log_stderr.push(match &self.stderr {
                        Some(se) if self.values[t][i] > 0.0 => se[t][i] / self.values[t][i],
                        _ => f64::NAN,
                    });
                }
                None => {
                    log_values.push(f64::NAN);
                    log_stderr.push(f64::NAN);
                }
            }
        }
        LogSeries {
            label: format!("interior infimum (eps={epsilon})"),
            times: self.times.clone(),
            log_values,
            log_stderr: self.stderr.as_ref().map(|_| log_stderr),
            refinement: self.refinement.clone(),
        }
    }
}

/// `sqrt(h sum_i E|u_t(x_i)|^2)` with the grid sandwich bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCurve {
    pub provenance: Provenance,
    pub epsilon: f64,
    pub times: Vec<f64>,
    /// Energy, scaled by `exp(log_scale / 2)`.
    pub values: Vec<f64>,
    pub log_scale: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<f64>>,
    /// `h * #interior * min_interior E|u|^2` (scaled like energy^2).
    pub sandwich_lower: Vec<f64>,
    /// `h * N * max E|u|^2` (scaled like energy^2).
    pub sandwich_upper: Vec<f64>,
    pub sandwich_holds: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<Vec<f64>>,
}

impl EnergyCurve {
    pub fn ln_value(&self, time: usize) -> f64 {
        ln_or_nan(self.values[time]) + 0.5 * self.log_scale[time]
    }

    pub fn series(&self) -> LogSeries {
        let nt = self.times.len();
        LogSeries {
            label: "energy".into(),
            times: self.times.clone(),
            log_values: (0..nt).map(|t| self.ln_value(t)).collect(),
            log_stderr: self
                .stderr
                .as_ref()
                .map(|se| (0..nt).map(|t| se[t] / self.values[t]).collect()),
            refinement: self.refinement.as_ref().map(|r| r.iter().map(|v| 0.5 * v).collect()),
        }
    }

    pub fn sandwich_ok(&self) -> bool {
        self.sandwich_holds.iter().all(|&b| b)
    }
}

/// Energy and sandwich from a second-moment curve.
pub fn energy_curve(curve: &MomentCurve, grid: &DomainGrid, epsilon: f64) -> Result<EnergyCurve> {
    if curve.p != 2.0 {
        return Err(Error::Query(format!("energy needs the p = 2 curve, got p = {}", curve.p)));
    }
    if curve.nodes.len() != grid.len() {
        return Err(Error::Data("curve and grid disagree on the node count".into()));
    }
    let interior = grid.interior(epsilon);
    let h = grid.h();
    let n = grid.len();
    let nt = curve.times.len();
    let mut values = Vec::with_capacity(nt);
    let mut lower = Vec::with_capacity(nt);
    let mut upper = Vec::with_capacity(nt);
    let mut holds = Vec::with_capacity(nt);
    let mut stderr = curve.stderr.as_ref().map(|_| Vec::with_capacity(nt));
    for t in 0..nt {
        let row = &curve.values[t];
        let total: f64 = h * row.iter().sum::<f64>();
        let min_int = interior.iter().map(|&i| row[i]).fold(f64::INFINITY, f64::min);
        let max_all = row.iter().copied().fold(0.0f64, f64::max);
        let lo = if interior.is_empty() { 0.0 } else { h * interior.len() as f64 * min_int };
        let hi = h * n as f64 * max_all;
        // rounding slack of the N-term sums
        let slack = 4.0 * n as f64 * f64::EPSILON * total.abs();
        holds.push(lo <= total + slack && total <= hi + slack);
        lower.push(lo);
        upper.push(hi);
        let e = total.max(0.0).sqrt();
        values.push(e);
        if let (Some(out), Some(se)) = (stderr.as_mut(), curve.stderr.as_ref()) {
            let var: f64 = se[t].iter().map(|s| (h * s) * (h * s)).sum();
            out.push(if e > 0.0 { var.sqrt() / (2.0 * e) } else { 0.0 });
        }
    }
    Ok(EnergyCurve {
        provenance: curve.provenance,
        epsilon,
        times: curve.times.clone(),
        values,
        log_scale: curve.log_scale.clone(),
        stderr,
        sandwich_lower: lower,
        sandwich_upper: upper,
        sandwich_holds: holds,
        refinement: curve.refinement.clone(),
    })
}

/// Moment and energy curves from an ensemble.
pub fn estimate_moments(summary: &EnsembleSummary, grid: &DomainGrid, p: f64, epsilon: f64) -> Result<(MomentCurve, EnergyCurve)> {
    if !summary.has_order(p) {
        return Err(Error::Query(format!(
            "moment order {p} was not recorded (have {:?})",
            summary.moment_orders
        )));
    }
    let curve = monte_carlo_curve(summary, p)?;
    let second = if p == 2.0 { curve.clone() } else { monte_carlo_curve(summary, 2.0)? };
    let energy = energy_curve(&second, grid, epsilon)?;
    Ok((curve, energy))
}

fn monte_carlo_curve(summary: &EnsembleSummary, p: f64) -> Result<MomentCurve> {
    let nt = summary.times.len();
    let n = summary.nodes.len();
    let mut values = vec![vec![0.0; n]; nt];
    let mut stderr = vec![vec![0.0; n]; nt];
    for t in 0..nt {
        for i in 0..n {
            let e = summary.moment(p, t, i)?;
            values[t][i] = e.value;
            stderr[t][i] = e.stderr;
        }
    }
    Ok(MomentCurve {
        p,
        provenance: Provenance::MonteCarlo,
        times: summary.times.clone(),
        nodes: summary.nodes.clone(),
        values,
        log_scale: vec![0.0; nt],
        stderr: Some(stderr),
        refinement: None,
        effective_paths: Some(summary.effective_paths.clone()),
    })
}

/// Parameters shared by the two oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraSetup {
    pub xi: f64,
    /// Slope `L` of the linear `sigma`.
    pub slope: f64,
    pub dt: f64,
    pub horizon: f64,
    pub record_times: Vec<f64>,
    /// Solve again at `dt / 2` and require agreement within `refine_gate`.
    pub refine: bool,
    pub refine_gate: f64,
}

impl VolterraSetup {
    pub fn new(xi: f64, slope: f64, dt: f64, horizon: f64, record_times: Vec<f64>) -> Self {
        Self {
            xi,
            slope,
            dt,
            horizon,
            record_times,
            refine: true,
            refine_gate: 0.02,
        }
    }

    fn validate(&self) -> Result<(u64, Vec<u64>)> {
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::Validation(format!("xi must be >= 0, got {}", self.xi)));
        }
        if !self.slope.is_finite() {
            return Err(Error::Validation(format!("sigma slope must be finite, got {}", self.slope)));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::Validation("dt and horizon must be positive".into()));
        }
        let to_step = |t: f64, what: &str| -> Result<u64> {
            let k = (t / self.dt).round();
            if !(k >= 0.0) || (k * self.dt - t).abs() > 1e-9 * t.abs().max(self.dt) {
                return Err(Error::Config(format!("{what} {t} is not a multiple of dt = {}", self.dt)));
            }
            Ok(k as u64)
        };
        let steps = to_step(self.horizon, "horizon")?;
        if self.record_times.is_empty() || self.record_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("record times must be non-empty and strictly increasing".into()));
        }
        let rec = self
            .record_times
            .iter()
            .map(|&t| to_step(t, "record time"))
            .collect::<Result<Vec<_>>>()?;
        if rec.iter().any(|&k| k > steps) {
            return Err(Error::Config("record times must not exceed the horizon".into()));
        }
        Ok((steps, rec))
    }
}

/// Exact step weights of `int_0^dt e^{-mu r} (linear interpolant) dr`:
/// `a` multiplies the left value, `b` the right one.
pub(crate) fn product_weights(mu: f64, dt: f64) -> (f64, f64, f64) {
    let z = mu * dt;
    let decay = (-z).exp();
    if z.abs() < 1e-3 {
        let a = dt * (0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0);
        let b = dt * (0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0);
        (decay, a, b)
    } else {
        let whole = -(-z).exp_m1() / z;
        let a = dt * (1.0 - (1.0 + z) * decay) / (z * z);
        (decay, a, dt * whole - a)
    }
}

/// Forcing map `M -> X` of the Volterra system.
enum Forcing {
    /// `X = diag(m) / h`.
    White { inv_h: f64 },
    /// `X = C o M`.
    Colored { c: DMatrix<f64> },
}

/// Result of one product-integration solve (scaled state per record time).
struct RawSolution {
    /// Diagonal of `M` per record time.
    diagonals: Vec<Vec<f64>>,
    /// Full `M` per record time (colored only).
    matrices: Vec<DMatrix<f64>>,
    log_scale: Vec<f64>,
}

const RESCALE_HIGH: f64 = 1e150;
const RESCALE_LOW: f64 = 1e-150;

fn solve_product_integration(
    eval: &HeatKernelEvaluator,
    u0: &[f64],
    setup: &VolterraSetup,
    dt: f64,
    forcing: &Forcing,
    keep_matrices: bool,
) -> Result<RawSolution> {
    let q = &eval.spectrum().vectors;
    let lam = &eval.spectrum().eigenvalues;
    let n = lam.len();
    let steps = (setup.horizon / dt).round() as u64;
    let rec: Vec<u64> = setup.record_times.iter().map(|&t| (t / dt).round() as u64).collect();
    let coupling = setup.xi * setup.xi * setup.slope * setup.slope;

    let mut decay = DMatrix::zeros(n, n);
    let mut wa = DMatrix::zeros(n, n);
    let mut wb = DMatrix::zeros(n, n);
    for l in 0..n {
        for k in 0..n {
            let (d, a, b) = product_weights(lam[k] + lam[l], dt);
            decay[(k, l)] = d;
            wa[(k, l)] = a;
            wb[(k, l)] = b;
        }
    }
    let g_hat = q.tr_mul(&DVector::from_column_slice(u0));
    let semigroup = |t: f64| -> DVector<f64> {
        let mut c = g_hat.clone();
        for (v, l) in c.iter_mut().zip(lam) {
            *v *= (-l * t).exp();
        }
        q * c
    };
    let white = matches!(forcing, Forcing::White { .. });
    // state: colored keeps the full matrix, white only its diagonal
    let g0 = DVector::from_column_slice(u0);
    let mut state = if white {
        DMatrix::from_diagonal(&g0.map(|v| v * v))
    } else {
        &g0 * g0.transpose()
    };
    let to_modal = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let x = match forcing {
            Forcing::White { inv_h } => {
                let mut s = q.clone();
                for (i, mut row) in s.row_iter_mut().enumerate() {
                    row *= m[(i, i)] * inv_h;
                }
                s
            }
            Forcing::Colored { c } => c.component_mul(m) * q,
        };
        q.tr_mul(&x)
    };
    let from_modal = |hm: &DMatrix<f64>| -> DMatrix<f64> {
        if white {
            let qh = q * hm;
            let d = DVector::from_fn(n, |i, _| qh.row(i).dot(&q.row(i)));
            DMatrix::from_diagonal(&d)
        } else {
            let r = q * hm * q.transpose();
            (&r + r.transpose()) * 0.5
        }
    };
    let source = |g: &DVector<f64>, scale: f64| -> DMatrix<f64> {
        if white {
            DMatrix::from_diagonal(&g.map(|v| v * v * scale))
        } else {
            (g * g.transpose()) * scale
        }
    };

    // White forcing only touches diag(M), so the implicit step is the
    // N x N linear system (I - coupling A) m = rhs with a constant A.
    let white_system = match forcing {
        Forcing::White { inv_h } => {
            let mut a = DMatrix::zeros(n, n);
            for j in 0..n {
                let qj = q.row(j).transpose();
                let z = q * wb.component_mul(&(&qj * qj.transpose()));
                for i in 0..n {
                    a[(i, j)] = inv_h * z.row(i).dot(&q.row(i));
                }
            }
            let system = DMatrix::identity(n, n) - a * coupling;
            let lu = system.lu();
            if !lu.is_invertible() {
                return Err(Error::Numerical("implicit Volterra step is singular; reduce dt".into()));
            }
            Some(lu)
        }
        Forcing::Colored { .. } => None,
    };
    let fixed_point = |start: &DMatrix<f64>, partial: &DMatrix<f64>, src: &DMatrix<f64>, t: f64| -> Result<DMatrix<f64>> {
        let mut guess = start.clone();
        for _ in 0..200 {
            let trial = partial + wb.component_mul(&to_modal(&guess));
            let next = src + from_modal(&trial) * coupling;
            let diff = (&next - &guess).amax();
            let size = next.amax();
            guess = next;
            if diff <= 1e-14 * size || size == 0.0 {
                return Ok(guess);
            }
        }
        Err(Error::Numerical(format!(
            "implicit Volterra step did not converge at t = {t}; reduce dt"
        )))
    };

    let mut log_scale = 0.0f64;
    let mut hist = DMatrix::<f64>::zeros(n, n);
    let mut x_now = to_modal(&state);
    let mut diagonals = Vec::with_capacity(rec.len());
    let mut matrices = Vec::new();
    let mut log_scales = Vec::with_capacity(rec.len());
    let mut push = |state: &DMatrix<f64>, ls: f64, diagonals: &mut Vec<Vec<f64>>, matrices: &mut Vec<DMatrix<f64>>| {
        diagonals.push((0..n).map(|i| state[(i, i)]).collect());
        if keep_matrices {
            matrices.push(state.clone());
        }
        log_scales.push(ls);
    };
    let mut r = 0usize;
    while r < rec.len() && rec[r] == 0 {
        push(&state, log_scale, &mut diagonals, &mut matrices);
        r += 1;
    }
    for step in 1..=steps {
        let t = step as f64 * dt;
        let g = semigroup(t);
        let partial = decay.component_mul(&hist) + wa.component_mul(&x_now);
        let src = source(&g, (-log_scale).exp());
        let guess = match &white_system {
            Some(lu) => {
                let rhs = src.diagonal() + from_modal(&partial).diagonal() * coupling;
                DMatrix::from_diagonal(&lu.solve(&rhs).expect("factor checked nonsingular"))
            }
            None => fixed_point(&state, &partial, &src, t)?,
        };
        let x_next = to_modal(&guess);
        let next_hist = &partial + wb.component_mul(&x_next);
        state = guess;
        hist = next_hist;
        x_now = x_next;
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("Volterra solution became non-finite at t = {t}")));
        }
        let size = state.amax();
        if size > RESCALE_HIGH || (size > 0.0 && size < RESCALE_LOW) {
            let f = 1.0 / size;
            state *= f;
            hist *= f;
            x_now *= f;
            log_scale += size.ln();
        }
        while r < rec.len() && rec[r] == step {
            push(&state, log_scale, &mut diagonals, &mut matrices);
            r += 1;
        }
    }
    Ok(RawSolution {
        diagonals,
        matrices,
        log_scale: log_scales,
    })
}

fn relative_change(fine: &RawSolution, coarse: &RawSolution) -> Vec<f64> {
    fine.diagonals
        .iter()
        .zip(&coarse.diagonals)
        .zip(fine.log_scale.iter().zip(&coarse.log_scale))
        .map(|((f, c), (lf, lc))| {
            let shift = (lc - lf).exp();
            f.iter()
                .zip(c)
                .map(|(a, b)| {
                    let b = b * shift;
                    if *a > 0.0 {
                        (a - b).abs() / a
                    } else {
                        (a - b).abs()
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

fn oracle(
    eval: &HeatKernelEvaluator,
    u0: &[f64],
    setup: &VolterraSetup,
    forcing: &Forcing,
    keep_matrices: bool,
) -> Result<(RawSolution, Option<Vec<f64>>)> {
    setup.validate()?;
    if u0.len() != eval.len() {
        return Err(Error::Data(format!("u0 has {} entries, grid has {}", u0.len(), eval.len())));
    }
    if let Some(v) = u0.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite initial value {v}")));
    }
    let fine = solve_product_integration(eval, u0, setup, setup.dt, forcing, keep_matrices)?;
    if !setup.refine || setup.xi == 0.0 {
        let nt = fine.diagonals.len();
        return Ok((fine, setup.refine.then(|| vec![0.0; nt])));
    }
    let half = solve_product_integration(eval, u0, setup, 0.5 * setup.dt, forcing, keep_matrices)?;
    let change = relative_change(&half, &fine);
    let worst = change.iter().copied().fold(0.0, f64::max);
    if worst > setup.refine_gate {
        return Err(Error::Numerical(format!(
            "oracle changed by {:.3}% under step halving (gate {:.1}%); reduce dt",
            100.0 * worst,
            100.0 * setup.refine_gate
        )));
    }
    Ok((half, Some(change)))
}

fn into_curve(eval: &HeatKernelEvaluator, setup: &VolterraSetup, raw: &RawSolution, refinement: Option<Vec<f64>>) -> MomentCurve {
    MomentCurve {
        p: 2.0,
        provenance: Provenance::VolterraOracle,
        times: setup.record_times.clone(),
        nodes: eval.grid().nodes().to_vec(),
        values: raw.diagonals.clone(),
        log_scale: raw.log_scale.clone(),
        stderr: None,
        refinement,
        effective_paths: None,
    }
}

/// Second moments under white noise with `sigma(u) = L u`.
pub fn solve_volterra_white(eval: &HeatKernelEvaluator, u0: &[f64], setup: &VolterraSetup) -> Result<MomentCurve> {
    let alpha = eval.spectrum().spec.alpha();
    if alpha <= 1.0 {
        return Err(Error::Precondition(format!(
            "white-noise second moments need alpha > 1 (kernel square integrable), got alpha = {alpha}"
        )));
    }
    let forcing = Forcing::White {
        inv_h: 1.0 / eval.grid().h(),
    };
    let (raw, refinement) = oracle(eval, u0, setup, &forcing, false)?;
    Ok(into_curve(eval, setup, &raw, refinement))
}

/// Largest grid for the full covariance system.
pub const MAX_COLORED_NODES: usize = 256;

/// Covariance oracle output.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredMoments {
    pub curve: MomentCurve,
    /// `M_t` at each record time, scaled by `exp(curve.log_scale[t])`.
    pub covariances: Vec<DMatrix<f64>>,
}

/// Two-point second moments under colored noise with `sigma(u) = L u`.
pub fn solve_volterra_colored(
    eval: &HeatKernelEvaluator,
    u0: &[f64],
    setup: &VolterraSetup,
    correlation: &CorrelationModel,
) -> Result<ColoredMoments> {
    let n = eval.len();
    if n > MAX_COLORED_NODES {
        return Err(Error::Config(format!(
            "covariance system with N = {n} exceeds the limit N <= {MAX_COLORED_NODES}; use a coarser grid"
        )));
    }
    let c = correlation.covariance_matrix(eval.grid())?;
    let forcing = Forcing::Colored { c };
    let (raw, refinement) = oracle(eval, u0, setup, &forcing, true)?;
    let curve = into_curve(eval, setup, &raw, refinement);
    Ok(ColoredMoments {
        curve,
        covariances: raw.matrices,
    })
}
