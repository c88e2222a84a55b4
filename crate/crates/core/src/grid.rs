//! Uniform interior grid on the interval `(-R, R)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of interior nodes.
pub const MIN_NODES: usize = 8;

/// `N` equispaced interior nodes of `(-R, R)` with spacing `h = 2R/(N+1)`.
///
/// The two endpoints `±R` are not nodes: every grid function is implicitly
/// extended by zero to them and to the whole exterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct DomainGrid {
    radius: f64,
    nodes: Vec<f64>,
    spacing: f64,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    radius: f64,
    nodes: usize,
}

impl TryFrom<GridRepr> for DomainGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        DomainGrid::new(r.radius, r.nodes)
    }
}

impl From<DomainGrid> for GridRepr {
    fn from(g: DomainGrid) -> Self {
        GridRepr {
            radius: g.radius,
            nodes: g.len(),
        }
    }
}

impl DomainGrid {
    pub fn new(radius: f64, n: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Validation(format!(
                "grid radius must be finite and > 0, got {radius}"
            )));
        }
        if n < MIN_NODES {
            return Err(Error::Validation(format!(
                "grid needs at least {MIN_NODES} interior nodes, got {n}"
            )));
        }
        let spacing = 2.0 * radius / (n + 1) as f64;
        let nodes = (1..=n).map(|i| -radius + i as f64 * spacing).collect();
        Ok(Self {
            radius,
            nodes,
            spacing,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node spacing `h`.
    pub fn h(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn x(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let raw = ((x + self.radius) / self.spacing).round() as isize - 1;
        raw.clamp(0, self.len() as isize - 1) as usize
    }

    /// Indices of nodes inside the closed sub-ball `|x| <= R - epsilon`.
    pub fn interior(&self, epsilon: f64) -> Vec<usize> {
        let limit = self.radius - epsilon + 1e-12 * self.radius;
        (0..self.len())
            .filter(|&i| self.nodes[i].abs() <= limit)
            .collect()
    }

    /// Indices of nodes in the closed interval `[lo, hi]`.
    pub fn indices_in(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.nodes[i] >= lo - 1e-12 && self.nodes[i] <= hi + 1e-12)
            .collect()
    }

    /// Grid with (roughly) half the nodes and twice the spacing. Exactly
    /// twice the spacing when `N` is odd.
    pub fn coarsened(&self) -> Option<Self> {
        let coarse = self.len().div_ceil(2) - 1;
        (coarse >= MIN_NODES).then(|| Self::new(self.radius, coarse).expect("valid radius"))
    }

    /// `h * sum(v)`: the grid quadrature of a grid function.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        self.spacing * v.iter().sum::<f64>()
    }

    /// The grid measure `h * #{nodes}` of an index set.
    pub fn measure(&self, count: usize) -> f64 {
        self.spacing * count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_strictly_inside_and_spacing_consistent() {
        let g = DomainGrid::new(1.0, 255).unwrap();
        assert_eq!(g.len(), 255);
        assert!((g.h() * 256.0 - 2.0).abs() < 1e-15);
        assert!(g.nodes().iter().all(|&x| x > -1.0 && x < 1.0));
        assert!((g.x(127)).abs() < 1e-15);
        assert_eq!(g.nearest(0.0), 127);
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(matches!(DomainGrid::new(1.0, 7), Err(Error::Validation(_))));
        assert!(DomainGrid::new(0.0, 16).is_err());
    }

    #[test]
    fn coarsening_doubles_spacing_for_odd_n() {
        let g = DomainGrid::new(2.0, 511).unwrap();
        let c = g.coarsened().unwrap();
        assert_eq!(c.len(), 255);
        assert!((c.h() - 2.0 * g.h()).abs() < 1e-15);
    }

    #[test]
    fn interior_respects_margin() {
        let g = DomainGrid::new(1.0, 99).unwrap();
        let idx = g.interior(0.2);
        assert!(idx.iter().all(|&i| g.x(i).abs() <= 0.8 + 1e-12));
        assert!(idx.len() > 70 && idx.len() < 82);
    }
}
