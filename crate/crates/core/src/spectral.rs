//! Dense symmetric eigendecomposition of a [`DiscreteOperator`].

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DomainGrid;
use crate::operator::{asymmetry, build_operator, DiscreteOperator, GeneratorSpec};

/// Eigenpairs of `-L` in ascending order.
///
/// `vectors` holds Euclidean-orthonormal columns `q_k`; the grid
/// eigenfunctions `phi_k = q_k / sqrt(h)` are orthonormal for the
/// `h`-weighted inner product. Each column is signed so that its first
/// component of non-negligible size is positive.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub spec: GeneratorSpec,
    pub grid: DomainGrid,
    pub eigenvalues: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Principal eigenvalue at the coarse grid (about `N/2` nodes), if it exists.
    pub mu1_coarse: Option<f64>,
    /// Richardson extrapolation from `N` and `N/2`, with the order observed
    /// against a third level `N/4` when available.
    pub mu1_extrapolated: Option<f64>,
}

impl SpectralDecomposition {
    pub fn mu1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `phi_k(x_i)`, normalized in the `h`-weighted inner product.
    pub fn eigenfunction(&self, k: usize) -> Vec<f64> {
        let s = 1.0 / self.grid.h().sqrt();
        self.vectors.column(k).iter().map(|v| v * s).collect()
    }

    /// Gram matrix `h * Phi^T Phi` of the grid eigenfunctions.
    pub fn gram(&self) -> DMatrix<f64> {
        self.vectors.transpose() * &self.vectors
    }

    pub fn record(&self, include_eigenvectors: bool) -> SpectrumRecord {
        SpectrumRecord {
            format_version: SPECTRUM_FORMAT_VERSION,
            spec: self.spec,
            grid: self.grid.clone(),
            surrogate: self.spec.is_surrogate(),
            eigenvalues: self.eigenvalues.clone(),
            mu1: self.mu1(),
            mu1_coarse: self.mu1_coarse,
            mu1_extrapolated: self.mu1_extrapolated,
            eigenvectors: include_eigenvectors
                .then(|| (0..self.len()).map(|k| self.eigenfunction(k)).collect()),
        }
    }
}

pub const SPECTRUM_FORMAT_VERSION: u32 = 1;

/// Serializable summary of a spectrum. Eigenvectors (as `h`-normalized grid
/// functions) are optional because they are `N^2` numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub format_version: u32,
    pub spec: GeneratorSpec,
    pub grid: DomainGrid,
    pub surrogate: bool,
    pub eigenvalues: Vec<f64>,
    pub mu1: f64,
    pub mu1_coarse: Option<f64>,
    pub mu1_extrapolated: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

fn sorted_eigen(matrix: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = matrix.nrows();
    let scale = matrix.amax();
    let eig = SymmetricEigen::try_new(matrix, 1e-15 * f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical(format!(
            "symmetric eigensolver did not converge (n = {n}, max |entry| = {scale:e})"
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "eigensolver returned non-finite eigenvalues (max |entry| = {scale:e})"
        )));
    }
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let norm = col.norm();
        col /= norm;
        let tiny = 1e-8 * col.amax();
        if let Some(first) = col.iter().find(|v| v.abs() > tiny) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

fn principal_eigenvalue(spec: GeneratorSpec, grid: &DomainGrid) -> Result<f64> {
    let values = build_operator(spec, grid)?.matrix.symmetric_eigenvalues();
    Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Full eigendecomposition of `-L`, with the principal eigenvalue
/// additionally computed on the coarsened grid and Richardson-extrapolated.
pub fn eigendecompose(op: &DiscreteOperator) -> Result<SpectralDecomposition> {
    let asym = asymmetry(&op.matrix);
    if asym > 1e-12 {
        return Err(Error::Precondition(format!(
            "operator matrix is not symmetric (relative asymmetry {asym:e})"
        )));
    }
    let (eigenvalues, vectors) = sorted_eigen(op.matrix.clone())?;
    let mut mu1_coarse = None;
    let mut mu1_extrapolated = None;
    if let Some(coarse) = op.grid.coarsened() {
        let mc = principal_eigenvalue(op.spec, &coarse)?;
        let ratio = coarse.h() / op.grid.h();
        let fine = eigenvalues[0];
        // Observed order from a third level when the three values are
        // monotone; the nominal order otherwise.
        let mut p = op.spec.convergence_order();
        if let Some(coarser) = coarse.coarsened() {
            let mcc = principal_eigenvalue(op.spec, &coarser)?;
            let (d_fine, d_coarse) = (mc - fine, mcc - mc);
            if d_fine != 0.0 && d_coarse / d_fine > 1.0 {
                let observed = (d_coarse / d_fine).ln() / ratio.ln();
                if (0.25..=4.0).contains(&observed) {
                    p = observed;
                }
            }
        }
        mu1_coarse = Some(mc);
        mu1_extrapolated = Some(fine + (fine - mc) / (ratio.powf(p) - 1.0));
    }
    Ok(SpectralDecomposition {
        spec: op.spec,
        grid: op.grid.clone(),
        eigenvalues,
        vectors,
        mu1_coarse,
        mu1_extrapolated,
    })
}

/// Build and decompose in one step.
pub fn spectrum_for(spec: GeneratorSpec, grid: &DomainGrid) -> Result<SpectralDecomposition> {
    eigendecompose(&build_operator(spec, grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn classical_eigenvalues_match_closed_form() {
        // -nu u'' on (-R, R): lambda_k = nu pi^2 k^2 / (4 R^2)
        let g = DomainGrid::new(1.0, 255).unwrap();
        let s = spectrum_for(GeneratorSpec::Fractional { alpha: 2.0, nu: 1.0 }, &g).unwrap();
        for k in 1..=4 {
            let exact = PI * PI * (k * k) as f64 / 4.0;
            let rel = (s.eigenvalues[k - 1] - exact).abs() / exact;
            assert!(rel < 0.02, "k={k} rel={rel}");
        }
    }

    #[test]
    fn eigenvectors_h_orthonormal_and_signed() {
        let g = DomainGrid::new(1.0, 96).unwrap();
        let s = spectrum_for(GeneratorSpec::Fractional { alpha: 1.5, nu: 1.0 }, &g).unwrap();
        let gram = s.gram();
        let err = (gram - DMatrix::identity(96, 96)).amax();
        assert!(err < 1e-10, "{err}");
        // principal eigenfunction is positive everywhere
        assert!(s.eigenfunction(0).iter().all(|&v| v > 0.0));
        let phi = s.eigenfunction(0);
        let h = g.h();
        let norm: f64 = phi.iter().map(|v| v * v * h).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drift_shifts_spectrum_exactly() {
        let g = DomainGrid::new(1.0, 64).unwrap();
        let base = spectrum_for(GeneratorSpec::Fractional { alpha: 1.5, nu: 1.0 }, &g).unwrap();
        let drift = spectrum_for(
            GeneratorSpec::FractionalWithDrift {
                alpha: 1.5,
                nu: 1.0,
                drift: 0.5,
            },
            &g,
        )
        .unwrap();
        assert!((drift.mu1() - (base.mu1() - 0.5)).abs() < 1e-11);
        for (a, b) in base.eigenvalues.iter().zip(&drift.eigenvalues) {
            assert!((a - 0.5 - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn cauchy_process_principal_eigenvalue() {
        // alpha = 1 on (-1, 1): lambda_1 = 1.1577738836977 (known to high accuracy)
        let g = DomainGrid::new(1.0, 511).unwrap();
        let s = spectrum_for(GeneratorSpec::Fractional { alpha: 1.0, nu: 1.0 }, &g).unwrap();
        let reference = 1.157_773_883_697_7;
        let rel = (s.mu1() - reference).abs() / reference;
        assert!(rel < 0.01, "mu1 = {} rel = {rel}", s.mu1());
        let rel_x = (s.mu1_extrapolated.unwrap() - reference).abs() / reference;
        assert!(rel_x <= rel + 1e-4, "extrapolated {}", s.mu1_extrapolated.unwrap());
    }

    #[test]
    fn record_serializes_without_vectors_by_default() {
        let g = DomainGrid::new(1.0, 16).unwrap();
        let s = spectrum_for(GeneratorSpec::Fractional { alpha: 1.5, nu: 1.0 }, &g).unwrap();
        let json = serde_json::to_string(&s.record(false)).unwrap();
        assert!(json.contains("\"mu1\""));
        assert!(json.contains("\"mu1_extrapolated\""));
        assert!(!json.contains("eigenvectors"));
        let with = s.record(true);
        assert_eq!(with.eigenvectors.as_ref().unwrap().len(), 16);
        let back: SpectrumRecord = serde_json::from_str(&serde_json::to_string(&with).unwrap()).unwrap();
        assert_eq!(back, with);
    }
}
