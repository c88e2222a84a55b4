//! Matrix discretizations of killed nonlocal generators on a [`DomainGrid`].
//!
//! Every assembly returns the matrix of `-L` acting on interior nodal
//! values, with the grid function extended by zero outside `(-R, R)`.
//!
//! The fractional Laplacian `nu (-Delta)^{alpha/2}` is discretized by
//! quadrature of its hypersingular integral
//!
//! ```text
//! c(alpha) * int_0^inf (2u(x) - u(x+z) - u(x-z)) z^{-1-alpha} dz
//! ```
//!
//! The even second difference `w(z) = 2u(x) - u(x+z) - u(x-z)` is treated as
//! `w(h) (z/h)^2` on the first cell, which removes the singularity, and is
//! interpolated piecewise linearly between nodes further out. All weights are
//! nonnegative, so the matrix is a symmetric Toeplitz M-matrix whose diagonal
//! carries the full (analytic) mass of the jump kernel, including the part
//! that lands in the exterior.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DomainGrid;
use crate::quadrature::gk15;
use crate::validation::ValidationReport;

/// The generator being discretized. The exterior condition is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    /// `-nu (-Delta)^{alpha/2}`.
    Fractional { alpha: f64, nu: f64 },
    /// `-nu (-Delta)^{alpha/2} + drift`.
    FractionalWithDrift { alpha: f64, nu: f64, drift: f64 },
    /// `-nu (-Delta)^{alpha/2} - a^beta (-Delta)^{beta/2}` with `1 < beta < alpha < 2`.
    DoubleFractional { alpha: f64, nu: f64, beta: f64, a: f64 },
    /// `m - (m^{2/alpha} - Delta)^{alpha/2}`, realized as a spectral function of
    /// the classical Dirichlet Laplacian. This is a surrogate: it is *not*
    /// the generator of the relativistic process killed on exiting the domain.
    RelativisticSurrogate { alpha: f64, mass: f64 },
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        match *self {
            GeneratorSpec::Fractional { alpha, nu } => {
                require(finite(alpha) && alpha > 0.0 && alpha <= 2.0, || {
                    format!("fractional index must satisfy 0 < alpha <= 2, got {alpha}")
                })?;
                require(finite(nu) && nu > 0.0, || format!("diffusivity must be > 0, got {nu}"))
            }
            GeneratorSpec::FractionalWithDrift { alpha, nu, drift } => {
                GeneratorSpec::Fractional { alpha, nu }.validate()?;
                require(finite(drift), || format!("drift must be finite, got {drift}"))
            }
            GeneratorSpec::DoubleFractional { alpha, nu, beta, a } => {
                require(finite(alpha) && finite(beta) && 1.0 < beta && beta < alpha && alpha < 2.0, || {
                    format!("double operator needs 1 < beta < alpha < 2, got beta = {beta}, alpha = {alpha}")
                })?;
                require(finite(nu) && nu > 0.0, || format!("diffusivity must be > 0, got {nu}"))?;
                require(finite(a) && a > 0.0, || format!("second coefficient must be > 0, got {a}"))
            }
            GeneratorSpec::RelativisticSurrogate { alpha, mass } => {
                require(finite(alpha) && alpha > 0.0 && alpha < 2.0, || {
                    format!("relativistic index must satisfy 0 < alpha < 2, got {alpha}")
                })?;
                require(finite(mass) && mass > 0.0, || format!("mass must be > 0, got {mass}"))
            }
        }
    }

    /// The leading (highest-order) stability index; it controls small-time
    /// and high-frequency behavior.
    pub fn alpha(&self) -> f64 {
        match *self {
            GeneratorSpec::Fractional { alpha, .. }
            | GeneratorSpec::FractionalWithDrift { alpha, .. }
            | GeneratorSpec::DoubleFractional { alpha, .. }
            | GeneratorSpec::RelativisticSurrogate { alpha, .. } => alpha,
        }
    }

    pub fn drift(&self) -> f64 {
        match *self {
            GeneratorSpec::FractionalWithDrift { drift, .. } => drift,
            _ => 0.0,
        }
    }

    /// The same generator with any drift removed.
    pub fn driftless(&self) -> GeneratorSpec {
        match *self {
            GeneratorSpec::FractionalWithDrift { alpha, nu, .. } => GeneratorSpec::Fractional { alpha, nu },
            other => other,
        }
    }

    pub fn is_surrogate(&self) -> bool {
        matches!(self, GeneratorSpec::RelativisticSurrogate { .. })
    }

    pub fn label(&self) -> String {
        match *self {
            GeneratorSpec::Fractional { alpha, nu } => format!("fractional(alpha={alpha}, nu={nu})"),
            GeneratorSpec::FractionalWithDrift { alpha, nu, drift } => {
                format!("fractional-with-drift(alpha={alpha}, nu={nu}, drift={drift})")
            }
            GeneratorSpec::DoubleFractional { alpha, nu, beta, a } => {
                format!("double-fractional(alpha={alpha}, nu={nu}, beta={beta}, a={a})")
            }
            GeneratorSpec::RelativisticSurrogate { alpha, mass } => {
                format!("relativistic-surrogate(alpha={alpha}, mass={mass}) [spectral surrogate]")
            }
        }
    }

    /// Nominal grid-convergence order of the principal eigenvalue, used for
    /// Richardson extrapolation.
    pub(crate) fn convergence_order(&self) -> f64 {
        match *self {
            GeneratorSpec::RelativisticSurrogate { .. } => 2.0,
            GeneratorSpec::Fractional { alpha, .. } | GeneratorSpec::FractionalWithDrift { alpha, .. }
                if alpha == 2.0 =>
            {
                2.0
            }
            GeneratorSpec::Fractional { .. }
            | GeneratorSpec::FractionalWithDrift { .. }
            | GeneratorSpec::DoubleFractional { .. } => 1.0,
        }
    }
}

/// The matrix of `-L` on the interior nodes.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub spec: GeneratorSpec,
    pub grid: DomainGrid,
    pub matrix: DMatrix<f64>,
}

impl DiscreteOperator {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

/// Normalizing constant `c(1, alpha)` of the one-dimensional fractional
/// Laplacian's singular integral.
pub fn fractional_constant(alpha: f64) -> f64 {
    use libm::tgamma;
    alpha * 2f64.powf(alpha - 1.0) * tgamma(0.5 * (1.0 + alpha))
        / (std::f64::consts::PI.sqrt() * tgamma(1.0 - 0.5 * alpha))
}

/// Dimensionless jump weights for spacing `h = 1`.
///
/// Returns `(total, weights)` where `weights[k]` is the weight of the
/// second difference at distance `k` (index 0 unused) and `total` is the
/// full sum over all `k >= 1`, available in closed form.
pub(crate) fn jump_weights(alpha: f64, n: usize) -> (f64, Vec<f64>) {
    let mut w = vec![0.0; n.max(2)];
    w[1] += 1.0 / (2.0 - alpha);
    let kernel = |z: f64| z.powf(-1.0 - alpha);
    for k in 1..n {
        let lo = k as f64;
        let hi = lo + 1.0;
        // descending hat of node k on [k, k+1]
        let (down, _) = gk15(&mut |z| (hi - z) * kernel(z), lo, hi);
        w[k] += down;
        if k + 1 < n {
            let (up, _) = gk15(&mut |z| (z - lo) * kernel(z), lo, hi);
            w[k + 1] += up;
        }
    }
    let total = 1.0 / (2.0 - alpha) + 1.0 / alpha;
    (total, w)
}

fn fractional_matrix(alpha: f64, coef: f64, grid: &DomainGrid) -> DMatrix<f64> {
    let n = grid.len();
    let h = grid.h();
    if alpha == 2.0 {
        let s = coef / (h * h);
        return DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0 * s,
            1 => -s,
            _ => 0.0,
        });
    }
    let (total, w) = jump_weights(alpha, n);
    let scale = coef * fractional_constant(alpha) * h.powf(-alpha);
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * total * scale,
        k => -w[k] * scale,
    })
}

/// Euclidean-orthonormal eigenpairs of the 3-point Dirichlet Laplacian
/// `[-1, 2, -1]/h^2`, known in closed form.
pub(crate) fn classical_dirichlet_modes(grid: &DomainGrid) -> (Vec<f64>, DMatrix<f64>) {
    let n = grid.len();
    let h = grid.h();
    let np1 = (n + 1) as f64;
    let values = (1..=n)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI / (2.0 * np1)).sin();
            4.0 * s * s / (h * h)
        })
        .collect();
    let norm = (2.0 / np1).sqrt();
    let vectors = DMatrix::from_fn(n, n, |i, k| {
        norm * ((i + 1) as f64 * (k + 1) as f64 * std::f64::consts::PI / np1).sin()
    });
    (values, vectors)
}

fn relativistic_matrix(alpha: f64, mass: f64, grid: &DomainGrid) -> DMatrix<f64> {
    let (values, q) = classical_dirichlet_modes(grid);
    let shift = mass.powf(2.0 / alpha);
    let g = DVector::from_iterator(
        values.len(),
        values.iter().map(|&l| (shift + l).powf(0.5 * alpha) - mass),
    );
    let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |i, k| q[(i, k)] * g[k]);
    let m = &scaled * q.transpose();
    // symmetrize away rounding
    (&m + m.transpose()) * 0.5
}

/// Assemble the matrix of `-L` for `spec` on `grid`.
pub fn build_operator(spec: GeneratorSpec, grid: &DomainGrid) -> Result<DiscreteOperator> {
    spec.validate()?;
    let matrix = match spec {
        GeneratorSpec::Fractional { alpha, nu } => fractional_matrix(alpha, nu, grid),
        GeneratorSpec::FractionalWithDrift { alpha, nu, drift } => {
            let mut m = fractional_matrix(alpha, nu, grid);
            for i in 0..grid.len() {
                m[(i, i)] -= drift;
            }
            m
        }
        GeneratorSpec::DoubleFractional { alpha, nu, beta, a } => {
            fractional_matrix(alpha, nu, grid) + fractional_matrix(beta, a.powf(beta), grid)
        }
        GeneratorSpec::RelativisticSurrogate { alpha, mass } => relativistic_matrix(alpha, mass, grid),
    };
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "assembly of {} produced non-finite entries",
            spec.label()
        )));
    }
    Ok(DiscreteOperator {
        spec,
        grid: grid.clone(),
        matrix,
    })
}

/// Relative asymmetry `max |A - A^T| / max |A|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Structural checks: symmetry, sign pattern, and (for driftless
/// generators) positive definiteness.
pub fn validate_operator(op: &DiscreteOperator) -> ValidationReport {
    let mut report = ValidationReport::default();
    let m = &op.matrix;
    let n = m.nrows();

    let asym = asymmetry(m);
    report.push("symmetric", asym <= 1e-12, asym, 1e-12);

    let scale = m.amax();
    let off_tol = 1e-12 * scale;
    let mut max_off = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_off = max_off.max(m[(i, j)]);
            }
        }
    }
    report.push("off-diagonal <= 0", max_off <= off_tol, max_off, off_tol);

    let drift = op.spec.drift();
    let min_diag = (0..n).map(|i| m[(i, i)] + drift).fold(f64::INFINITY, f64::min);
    report
        .push("driftless diagonal > 0", min_diag > 0.0, min_diag, 0.0)
        .note = (drift != 0.0).then(|| format!("drift {drift} removed before the check"));

    let eigenvalues = m.clone().symmetric_eigenvalues();
    let lambda1 = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let check = report.push("positive definite (lambda_1 > 0)", lambda1 > 0.0, lambda1, 0.0);
    if lambda1 <= 0.0 && drift > 0.0 {
        check.note = Some(format!(
            "supercritical drift: drift {drift} >= principal eigenvalue {} of the driftless operator",
            lambda1 + drift
        ));
    }
    if op.spec.is_surrogate() {
        report.push("relativistic variant is a spectral surrogate", true, 0.0, 0.0).note =
            Some("function of the classical Dirichlet Laplacian, not the killed relativistic generator".into());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> DomainGrid {
        DomainGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn classical_limit_is_three_point_stencil() {
        let g = grid(255);
        let op = build_operator(GeneratorSpec::Fractional { alpha: 2.0, nu: 1.0 }, &g).unwrap();
        let h2 = g.h() * g.h();
        let m = &op.matrix;
        assert_eq!(m[(10, 10)], 2.0 / h2);
        assert_eq!(m[(10, 11)], -1.0 / h2);
        assert_eq!(m[(10, 9)], -1.0 / h2);
        assert_eq!(m[(10, 12)], 0.0);
    }

    #[test]
    fn fractional_constant_known_values() {
        assert!((fractional_constant(1.0) - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        // c(alpha) / (2 - alpha) -> 1 as alpha -> 2
        let a = 2.0 - 1e-7;
        assert!((fractional_constant(a) / (2.0 - a) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn jump_weights_are_positive_and_sum_below_total() {
        for &alpha in &[0.5, 1.0, 1.5, 1.9] {
            let (total, w) = jump_weights(alpha, 400);
            assert!(w[1..].iter().all(|&x| x > 0.0));
            let partial: f64 = w[1..].iter().sum();
            assert!(partial < total);
            // the missing mass is the tail int_{n-1}^inf z^{-1-alpha} dz (plus the last half-hat)
            let tail = 399f64.powf(-alpha) / alpha;
            assert!((total - partial - tail).abs() < 0.02 * tail, "alpha={alpha}");
        }
    }

    #[test]
    fn fractional_sign_structure_and_symmetry() {
        let op = build_operator(GeneratorSpec::Fractional { alpha: 1.5, nu: 1.0 }, &grid(64)).unwrap();
        let report = validate_operator(&op);
        assert!(report.passed(), "{report:?}");
        let m = &op.matrix;
        for i in 0..64 {
            assert!(m[(i, i)] > 0.0);
            for j in 0..64 {
                if i != j {
                    assert!(m[(i, j)] <= 0.0);
                }
                assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
    }

    #[test]
    fn drift_subtracts_identity() {
        let g = grid(48);
        let base = build_operator(GeneratorSpec::Fractional { alpha: 1.5, nu: 1.0 }, &g).unwrap();
        let drift = build_operator(
            GeneratorSpec::FractionalWithDrift {
                alpha: 1.5,
                nu: 1.0,
                drift: 0.5,
            },
            &g,
        )
        .unwrap();
        let expected = &base.matrix - DMatrix::identity(48, 48) * 0.5;
        assert_eq!(drift.matrix, expected);
    }

    #[test]
    fn double_is_sum_of_constituents() {
        let g = grid(40);
        let spec = GeneratorSpec::DoubleFractional {
            alpha: 1.8,
            nu: 1.0,
            beta: 1.2,
            a: 0.7,
        };
        let op = build_operator(spec, &g).unwrap();
        let first = build_operator(GeneratorSpec::Fractional { alpha: 1.8, nu: 1.0 }, &g).unwrap();
        let second = build_operator(
            GeneratorSpec::Fractional {
                alpha: 1.2,
                nu: 0.7f64.powf(1.2),
            },
            &g,
        )
        .unwrap();
        assert_eq!(op.matrix, &first.matrix + &second.matrix);
    }

    #[test]
    fn invalid_parameters_name_the_bound() {
        let g = grid(16);
        let err = build_operator(GeneratorSpec::Fractional { alpha: 2.5, nu: 1.0 }, &g).unwrap_err();
        assert!(err.to_string().contains("0 < alpha <= 2"));
        let err = build_operator(
            GeneratorSpec::DoubleFractional {
                alpha: 1.5,
                nu: 1.0,
                beta: 1.6,
                a: 1.0,
            },
            &g,
        )
        .unwrap_err();
        assert!(err.to_string().contains("1 < beta < alpha < 2"));
        assert!(build_operator(GeneratorSpec::RelativisticSurrogate { alpha: 1.0, mass: 0.0 }, &g).is_err());
    }

    #[test]
    fn supercritical_drift_flagged() {
        let g = grid(32);
        let op = build_operator(
            GeneratorSpec::FractionalWithDrift {
                alpha: 1.5,
                nu: 1.0,
                drift: 10.0,
            },
            &g,
        )
        .unwrap();
        let report = validate_operator(&op);
        let pd = report.get("positive definite (lambda_1 > 0)").unwrap();
        assert!(!pd.passed);
        assert!(pd.note.as_deref().unwrap().contains("supercritical drift"));
    }

    #[test]
    fn relativistic_surrogate_is_symmetric_m_matrix() {
        let op = build_operator(GeneratorSpec::RelativisticSurrogate { alpha: 1.0, mass: 1.0 }, &grid(48)).unwrap();
        let report = validate_operator(&op);
        assert!(report.passed(), "{report:?}");
    }
}
