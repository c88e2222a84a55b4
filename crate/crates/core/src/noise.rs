//! Spatial noise correlations, the Dalang condition, and reproducible
//! Gaussian increments.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DomainGrid;
use crate::rng::fill_standard_normal;

/// Spatial correlation `f(x, y)` of the driving noise.
///
/// Colored kinds are stationary, `f(x, y) = f~(x - y)`, except
/// `ConstantFloor`, which is the constant kernel `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorrelationModel {
    /// Space-time white noise (delta correlation).
    White,
    /// `|x - y|^{-gamma}`, locally integrable for `0 < gamma < 1`.
    Riesz { gamma: f64 },
    /// `1 / (1 + ((x - y) / theta)^2)`.
    Cauchy { theta: f64 },
    /// `f = level` everywhere.
    ConstantFloor { level: f64 },
}

impl CorrelationModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CorrelationModel::White => Ok(()),
            CorrelationModel::Riesz { gamma } => {
                if gamma.is_finite() && gamma > 0.0 && gamma < 1.0 {
                    Ok(())
                } else {
                    Err(Error::Validation(format!(
                        "Riesz exponent gamma must satisfy 0 < gamma < 1, got {gamma}"
                    )))
                }
            }
            CorrelationModel::Cauchy { theta } => {
                if theta.is_finite() && theta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Validation(format!(
                        "Cauchy scale theta must be positive, got {theta}"
                    )))
                }
            }
            CorrelationModel::ConstantFloor { level } => {
                if level.is_finite() && level > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Validation(format!(
                        "constant correlation level must be positive, got {level}"
                    )))
                }
            }
        }
    }

    pub fn is_white(&self) -> bool {
        matches!(self, CorrelationModel::White)
    }

    pub fn label(&self) -> String {
        match *self {
            CorrelationModel::White => "white".into(),
            CorrelationModel::Riesz { gamma } => format!("riesz(gamma={gamma})"),
            CorrelationModel::Cauchy { theta } => format!("cauchy(theta={theta})"),
            CorrelationModel::ConstantFloor { level } => format!("constant-floor(K={level})"),
        }
    }

    /// Dominating stationary kernel `f~(z)`; `None` for white noise.
    /// Riesz is infinite at `z = 0`.
    pub fn dominating(&self, z: f64) -> Option<f64> {
        let z = z.abs();
        match *self {
            CorrelationModel::White => None,
            CorrelationModel::Riesz { gamma } => Some(z.powf(-gamma)),
            CorrelationModel::Cauchy { theta } => Some(1.0 / (1.0 + (z / theta).powi(2))),
            CorrelationModel::ConstantFloor { level } => Some(level),
        }
    }

    /// `f(x, y)` at two points.
    pub fn evaluate(&self, x: f64, y: f64) -> Option<f64> {
        self.dominating(x - y)
    }

    /// Grid covariance `C_ij = f(x_i, x_j)`. The Riesz diagonal is the
    /// cell average of `|z|^{-gamma}` over `[-h/2, h/2]`.
    pub fn covariance_matrix(&self, grid: &DomainGrid) -> Result<DMatrix<f64>> {
        self.validate()?;
        if self.is_white() {
            return Err(Error::Precondition(
                "white noise has no covariance matrix (delta correlation); use the white-noise rule"
                    .into(),
            ));
        }
        let n = grid.len();
        let h = grid.h();
        let mut c = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                c[(i, j)] = if i == j {
                    match *self {
                        CorrelationModel::Riesz { gamma } => (0.5 * h).powf(-gamma) / (1.0 - gamma),
                        _ => self.dominating(0.0).expect("colored"),
                    }
                } else {
                    // integer offsets keep C exactly symmetric
                    self.dominating((i as f64 - j as f64) * h).expect("colored")
                };
            }
        }
        Ok(c)
    }
}

/// Outcome of the Dalang integrability condition in dimension one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DalangVerdict {
    pub passed: bool,
    /// `alpha - 1` (white) or `alpha - gamma` (Riesz); absent when the
    /// spectral measure is finite.
    pub margin: Option<f64>,
    pub note: String,
}

pub fn dalang_check(model: &CorrelationModel, alpha: f64) -> DalangVerdict {
    match *model {
        CorrelationModel::White => DalangVerdict {
            passed: alpha > 1.0,
            margin: Some(alpha - 1.0),
            note: "white noise in d = 1 requires alpha > 1".into(),
        },
        CorrelationModel::Riesz { gamma } => DalangVerdict {
            passed: gamma < alpha,
            margin: Some(alpha - gamma),
            note: "Riesz spectral density ~ |k|^(gamma-1) is integrable against 1/(1+|k|^alpha) iff gamma < alpha".into(),
        },
        CorrelationModel::Cauchy { .. } => DalangVerdict {
            passed: true,
            margin: None,
            note: "finite spectral measure (exponentially decaying density)".into(),
        },
        CorrelationModel::ConstantFloor { .. } => DalangVerdict {
            passed: true,
            margin: None,
            note: "finite spectral measure (point mass at 0)".into(),
        },
    }
}

/// Jitter multipliers of `1e-12 * trace / N` tried in order.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6];

/// Cholesky factor of a symmetric positive semidefinite matrix. Pivots
/// within rounding of zero are accepted as exact zeros, so rank-deficient
/// matrices factor without perturbation.
pub(crate) fn semidefinite_cholesky(c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = c.nrows();
    let max_diag = (0..n).map(|i| c[(i, i)]).fold(0.0f64, f64::max);
    if !(max_diag > 0.0) {
        return None;
    }
    let tol = 64.0 * n as f64 * f64::EPSILON * max_diag;
    let off_tol = (tol * max_diag).sqrt();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = c[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            for i in j + 1..n {
                let mut r = c[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                if r.abs() > off_tol {
                    return None;
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        // d / sqrt(d) rather than sqrt(d): rows equal to row j then get
        // bitwise-equal entries
        l[(j, j)] = d / ljj;
        for i in j + 1..n {
            let mut r = c[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / ljj;
        }
    }
    Some(l)
}

/// Generator of Gaussian space-time increments on a grid.
///
/// White: independent `N(0, dt / h)` per node. Colored: `sqrt(dt) * L z`
/// with `L L^T = C` and `z` standard normal. Draws are pure functions of
/// `(seed, path, step)`.
#[derive(Debug, Clone)]
pub struct NoiseIncrementSampler {
    pub model: CorrelationModel,
    pub grid: DomainGrid,
    pub seed: u64,
    covariance: Option<DMatrix<f64>>,
    factor: Option<DMatrix<f64>>,
    /// Absolute diagonal jitter that made the factorization succeed.
    pub jitter: f64,
    /// `min_ij C_ij`; `None` for white noise.
    pub floor: Option<f64>,
    pub warnings: Vec<String>,
}

impl NoiseIncrementSampler {
    pub fn white(grid: &DomainGrid, seed: u64) -> Self {
        Self {
            model: CorrelationModel::White,
            grid: grid.clone(),
            seed,
            covariance: None,
            factor: None,
            jitter: 0.0,
            floor: None,
            warnings: Vec::new(),
        }
    }

    /// Sampler for any model: the white-noise rule or a factored covariance.
    pub fn for_model(model: CorrelationModel, grid: &DomainGrid, seed: u64) -> Result<Self> {
        if model.is_white() {
            Ok(Self::white(grid, seed))
        } else {
            build_covariance(model, grid, seed)
        }
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.covariance.as_ref()
    }

    /// Lower-triangular factor of the covariance (colored only).
    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        self.factor.as_ref()
    }

    /// Floor check of the positive-correlation assumption.
    pub fn floor_note(&self) -> String {
        match self.floor {
            None => "floor not applicable (white noise)".into(),
            Some(k) if k > 0.0 => format!("measured floor K_R = {k}"),
            Some(k) => format!("measured floor K_R = {k} is not positive"),
        }
    }

    /// One increment `dF(x_i)` over a step of length `dt > 0`.
    pub fn sample_increment(&self, dt: f64, path: u64, step: u64) -> Vec<f64> {
        let n = self.grid.len();
        let mut z = vec![0.0; n];
        let mut out = vec![0.0; n];
        self.fill_increment(dt, path, step, &mut z, &mut out);
        out
    }

    /// Allocation-free form of [`Self::sample_increment`]; `z` is scratch.
    pub fn fill_increment(&self, dt: f64, path: u64, step: u64, z: &mut [f64], out: &mut [f64]) {
        assert!(dt > 0.0, "time step must be positive");
        fill_standard_normal(self.seed, path, step, z);
        match &self.factor {
            None => {
                let s = (dt / self.grid.h()).sqrt();
                for (o, zi) in out.iter_mut().zip(z.iter()) {
                    *o = s * zi;
                }
            }
            Some(l) => {
                let s = dt.sqrt();
                let n = z.len();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for k in 0..=i.min(n - 1) {
                        acc += l[(i, k)] * z[k];
                    }
                    *o = s * acc;
                }
            }
        }
    }
}

/// Assemble and factor the covariance of a colored model.
pub fn build_covariance(model: CorrelationModel, grid: &DomainGrid, seed: u64) -> Result<NoiseIncrementSampler> {
    model.validate()?;
    let c = model.covariance_matrix(grid)?;
    let n = grid.len();
    let floor = c.iter().copied().fold(f64::INFINITY, f64::min);
    let mut warnings = Vec::new();
    if floor <= 0.0 {
        warnings.push(format!(
            "measured correlation floor {floor} is not positive on B_R; the positive-floor assumption fails"
        ));
    }
    let unit = 1e-12 * c.trace() / n as f64;
    for &mult in JITTER_LADDER.iter() {
        let jitter = mult * unit;
        let mut cj = c.clone();
        for i in 0..n {
            cj[(i, i)] += jitter;
        }
        if let Some(factor) = semidefinite_cholesky(&cj) {
            if jitter > 0.0 {
                warnings.push(format!("covariance factored with diagonal jitter {jitter:e}"));
            }
            return Ok(NoiseIncrementSampler {
                model,
                grid: grid.clone(),
                seed,
                covariance: Some(c),
                factor: Some(factor),
                jitter,
                floor: Some(floor),
                warnings,
            });
        }
    }
    Err(Error::Model(format!(
        "covariance of {} is not positive semidefinite on this grid (N = {n}) even with jitter {:e}",
        model.label(),
        JITTER_LADDER[JITTER_LADDER.len() - 1] * unit
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dalang_examples() {
        let v = dalang_check(&CorrelationModel::Riesz { gamma: 0.5 }, 1.5);
        assert!(v.passed);
        assert!((v.margin.unwrap() - 1.0).abs() < 1e-15);
        assert!(!dalang_check(&CorrelationModel::Riesz { gamma: 0.5 }, 0.4).passed);
        let w = dalang_check(&CorrelationModel::White, 2.0);
        assert!(w.passed && w.margin == Some(1.0));
        assert!(!dalang_check(&CorrelationModel::White, 1.0).passed);
        assert!(dalang_check(&CorrelationModel::Cauchy { theta: 0.3 }, 0.5).passed);
    }

    #[test]
    fn constant_floor_factor_is_rank_one_and_exact() {
        let g = DomainGrid::new(1.0, 32).unwrap();
        let s = build_covariance(CorrelationModel::ConstantFloor { level: 2.0 }, &g, 5).unwrap();
        assert_eq!(s.floor, Some(2.0));
        let l = s.factor().unwrap();
        let recon = l * l.transpose();
        assert!((recon - s.covariance().unwrap()).amax() < 1e-12);
        for step in 0..20 {
            let v = s.sample_increment(0.01, 3, step);
            assert!(v.iter().all(|&x| x == v[0]));
        }
    }

    #[test]
    fn riesz_floor_at_extreme_pair() {
        let g = DomainGrid::new(1.0, 255).unwrap();
        let s = build_covariance(CorrelationModel::Riesz { gamma: 0.5 }, &g, 0).unwrap();
        let far = g.x(g.len() - 1) - g.x(0);
        let floor = s.floor.unwrap();
        assert!((floor - far.powf(-0.5)).abs() < 1e-12);
        assert!((floor - 2f64.powf(-0.5)).abs() / 2f64.powf(-0.5) < 0.01);
    }

    #[test]
    fn white_has_no_covariance() {
        let g = DomainGrid::new(1.0, 16).unwrap();
        let err = build_covariance(CorrelationModel::White, &g, 0).unwrap_err();
        assert_eq!(err.kind(), "precondition");
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(CorrelationModel::Riesz { gamma: 1.0 }.validate().is_err());
        assert!(CorrelationModel::Cauchy { theta: 0.0 }.validate().is_err());
        assert!(CorrelationModel::ConstantFloor { level: -1.0 }.validate().is_err());
    }

    #[test]
    fn colored_kernels_dominate_off_diagonal() {
        let g = DomainGrid::new(1.0, 40).unwrap();
        for m in [
            CorrelationModel::Riesz { gamma: 0.7 },
            CorrelationModel::Cauchy { theta: 0.2 },
            CorrelationModel::ConstantFloor { level: 1.0 },
        ] {
            let c = m.covariance_matrix(&g).unwrap();
            for i in 0..g.len() {
                for j in 0..g.len() {
                    assert_eq!(c[(i, j)], c[(j, i)]);
                    assert!(c[(i, i)] >= c[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn white_increment_variance() {
        let g = DomainGrid::new(1.0, 16).unwrap();
        let s = NoiseIncrementSampler::white(&g, 11);
        let dt = 1e-3;
        let m = 100_000u64;
        let mut acc = crate::stats::Welford::default();
        for p in 0..m {
            acc.add(s.sample_increment(dt, p, 0)[7]);
        }
        let target = dt / g.h();
        assert!((acc.sample_variance() - target).abs() / target < 0.03);
    }

    #[test]
    fn riesz_sample_covariance() {
        let g = DomainGrid::new(1.0, 12).unwrap();
        let s = build_covariance(CorrelationModel::Riesz { gamma: 0.5 }, &g, 99).unwrap();
        let n = g.len();
        let dt = 0.01;
        let m = 100_000u64;
        let mut sum = DMatrix::<f64>::zeros(n, n);
        let mut mean = vec![0.0; n];
        for p in 0..m {
            let v = nalgebra::DVector::from_vec(s.sample_increment(dt, p, 1));
            sum += &v * v.transpose();
            for (a, b) in mean.iter_mut().zip(v.iter()) {
                *a += b;
            }
        }
        let sample = sum / m as f64;
        let target = s.covariance().unwrap() * dt;
        let rel = (&sample - &target).norm() / target.norm();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
        for (i, mu) in mean.iter().enumerate() {
            let mu = mu / m as f64;
            let se = (target[(i, i)] / m as f64).sqrt();
            assert!(mu.abs() < 4.0 * se, "node {i} mean {mu}");
        }
    }
}
