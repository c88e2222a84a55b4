//! Numerical laboratory for the stochastic fractional heat equation
//!
//! ```text
//! du/dt = L u + xi * sigma(u) * F'(t, x),   x in (-R, R),   u = 0 outside,
//! ```
//!
//! with `L = -nu (-Delta)^{alpha/2}` (and a few relatives) killed on exiting
//! the interval, multiplicative Gaussian noise `F` that is white in time and
//! white or colored in space, and a noise level `xi >= 0`.
//!
//! The crate is organized bottom-up:
//!
//! * [`operator`] and [`spectral`] assemble and diagonalize the generator.
//! * [`heatkernel`] turns the spectrum into the killed heat kernel `p_D`,
//!   measures its two-sided bounds and evaluates the Laplace-type integrals
//!   that control the moment estimates.
//! * [`noise`] models the spatial correlation and draws reproducible
//!   increments, [`sigma`] checks the linear-growth nonlinearity.
//! * [`sde`] advances Monte Carlo ensembles of the mild formulation.
//! * [`moments`] solves the deterministic second-moment Volterra equations
//!   (the oracle) and turns ensembles into moment and energy curves.
//! * [`analysis`] fits moment Lyapunov exponents and sweeps `xi` to bracket
//!   the transition from exponential decay to exponential growth.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod grid;
pub mod heatkernel;
pub mod moments;
pub mod noise;
pub mod operator;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod sigma;
pub mod spectral;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
pub use grid::DomainGrid;
pub use heatkernel::HeatKernelEvaluator;
pub use noise::{CorrelationModel, NoiseIncrementSampler};
pub use operator::{build_operator, validate_operator, DiscreteOperator, GeneratorSpec};
pub use sigma::SigmaFunction;
pub use spectral::{eigendecompose, SpectralDecomposition};
pub use validation::ValidationReport;


// The guide under `book/` is compiled as doctests so its snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/operator.md")]
    mod operator {}
    #[doc = include_str!("../../../book/src/heat-kernel.md")]
    mod heat_kernel {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
