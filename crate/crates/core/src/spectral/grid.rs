use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ProjectivePoint;
use crate::walk::interpolate_periodic;

/// Uniform grid `θ_j = jπ/M` on the projective line, `θ ≡ θ + π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectiveGrid {
    size: usize,
}

impl ProjectiveGrid {
    pub fn new(size: usize) -> Result<ProjectiveGrid> {
        if size < 8 {
            return Err(Error::input(format!("grid size must be ≥ 8, got {size}")));
        }
        if size > u32::MAX as usize {
            return Err(Error::input("grid size too large"));
        }
        Ok(ProjectiveGrid { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn spacing(&self) -> f64 {
        PI / self.size as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.size).map(|j| self.node(j))
    }

    /// Left node index and fractional offset of angle `theta ∈ [0, π)`.
    #[inline]
    pub fn locate(&self, theta: f64) -> (usize, f64) {
        let pos = theta / PI * self.size as f64;
        let base = pos.floor();
        let j = (base as i64).rem_euclid(self.size as i64) as usize;
        (j, pos - base)
    }

    #[inline]
    pub fn next(&self, j: usize) -> usize {
        if j + 1 == self.size {
            0
        } else {
            j + 1
        }
    }
}

/// Function on the projective line stored at grid nodes, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn from_fn(grid: ProjectiveGrid, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn constant(grid: ProjectiveGrid, c: f64) -> GridFunction {
        GridFunction {
            values: vec![c; grid.size()],
        }
    }

    pub fn grid(&self) -> ProjectiveGrid {
        ProjectiveGrid {
            size: self.values.len(),
        }
    }

    #[inline]
    pub fn eval_angle(&self, theta: f64) -> f64 {
        interpolate_periodic(&self.values, theta)
    }

    pub fn eval(&self, x: &ProjectivePoint) -> f64 {
        self.eval_angle(x.angle())
    }

    pub fn is_constant(&self) -> Option<f64> {
        let first = *self.values.first()?;
        self.values.iter().all(|v| *v == first).then_some(first)
    }

    /// Largest difference quotient `|φ(θ_{j+1}) − φ(θ_j)|/h^γ` between neighbours,
    /// a cheap proxy for the γ-Hölder seminorm of the interpolant.
    pub fn holder_estimate(&self, gamma: f64) -> f64 {
        let grid = self.grid();
        let h = grid.spacing().sin();
        (0..self.values.len())
            .map(|j| (self.values[grid.next(j)] - self.values[j]).abs() / h.powf(gamma))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_wraps() {
        let g = ProjectiveGrid::new(16).unwrap();
        assert_eq!(g.locate(0.0), (0, 0.0));
        let (j, f) = g.locate(PI - 1e-12);
        assert_eq!(j, 15);
        assert!(f > 0.99);
        assert_eq!(g.next(15), 0);
        let (j, f) = g.locate(g.node(3) + 0.5 * g.spacing());
        assert_eq!(j, 3);
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_function_interpolates_linearly() {
        let g = ProjectiveGrid::new(8).unwrap();
        let phi = GridFunction::from_fn(g, |t| t);
        let mid = 0.5 * (g.node(2) + g.node(3));
        assert!((phi.eval_angle(mid) - mid).abs() < 1e-14);
        assert_eq!(GridFunction::constant(g, 2.0).is_constant(), Some(2.0));
    }
}
