//! Tensor-product trapezoid grids over axis-aligned boxes, used for all
//! 1D/2D quadrature expectations and for plotting-field emission.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

/// Axis-aligned box, one (lo, hi) pair per dimension.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::InvalidArgument("region has lo >= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }
}

/// Trapezoid grid: nodes in row-major order, x (last axis) varying fastest.
#[derive(Debug, Clone)]
pub struct Grid {
    pub region: Region,
    pub points_per_axis: usize,
    nodes: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(region: Region, points_per_axis: usize) -> Result<Self> {
        let dim = region.dim();
        if dim == 0 || dim > 3 {
            return Err(Error::InvalidArgument(format!(
                "grid supports 1-3 dimensions, got {dim}"
            )));
        }
        if points_per_axis < 2 {
            return Err(Error::InvalidArgument("grid needs >= 2 points per axis".into()));
        }
        let n = points_per_axis;
        let steps: Vec<f64> = (0..dim)
            .map(|d| (region.hi[d] - region.lo[d]) / (n - 1) as f64)
            .collect();
        let axis_w = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let total = n.pow(dim as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut x = DVector::zeros(dim);
            let mut w = 1.0;
            // row-major: last axis varies fastest
            for d in (0..dim).rev() {
                let idx = rem % n;
                rem /= n;
                x[d] = region.lo[d] + idx as f64 * steps[d];
                w *= axis_w(idx) * steps[d];
            }
            nodes.push(x);
            weights.push(w);
        }
        Ok(Self {
            region,
            points_per_axis,
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// integral of f over the box
    pub fn integrate(&self, mut f: impl FnMut(&DVector<f64>) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    /// E_p[f] over the grid together with the captured probability mass.
    pub fn expectation(
        &self,
        p: &GaussianMixture,
        mut f: impl FnMut(&DVector<f64>) -> f64,
    ) -> Result<(f64, f64)> {
        let mut mass = 0.0;
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let dens = p.log_density(x)?.exp();
            mass += w * dens;
            acc += w * dens * f(x);
        }
        Ok((acc, mass))
    }

    /// E_p[f] requiring the grid to capture at least `required` mass.
    pub fn expectation_checked(
        &self,
        p: &GaussianMixture,
        required: f64,
        f: impl FnMut(&DVector<f64>) -> f64,
    ) -> Result<f64> {
        let (acc, mass) = self.expectation(p, f)?;
        if mass < required {
            return Err(Error::InsufficientCoverage {
                mass,
                required,
            });
        }
        Ok(acc)
    }
}

/// Uniform trapezoid nodes and weights on [a, b].
pub fn trapezoid_nodes(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "trapezoid needs >= 2 nodes");
    let h = (b - a) / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
    let weights: Vec<f64> = (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_weights_sum_to_volume() {
        let g = Grid::new(Region::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap(), 33).unwrap();
        let vol: f64 = g.weights().iter().sum();
        assert!((vol - 6.0).abs() < 1e-12);
    }

    #[test]
    fn grid_is_row_major_last_axis_fastest() {
        let g = Grid::new(Region::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), 3).unwrap();
        // first three nodes share axis-0 value, axis-1 sweeps
        assert_eq!(g.nodes()[0].as_slice(), &[0.0, 0.0]);
        assert_eq!(g.nodes()[1].as_slice(), &[0.0, 0.5]);
        assert_eq!(g.nodes()[2].as_slice(), &[0.0, 1.0]);
        assert_eq!(g.nodes()[3].as_slice(), &[0.5, 0.0]);
    }

    #[test]
    fn expectation_checks_coverage() {
        let p = GaussianMixture::standard(1);
        let tight = Grid::new(Region::new(vec![-1.0], vec![1.0]).unwrap(), 65).unwrap();
        let err = tight.expectation_checked(&p, 1.0 - 1e-6, |_| 1.0);
        assert!(matches!(err, Err(Error::InsufficientCoverage { .. })));
        let wide = Grid::new(Region::new(vec![-8.0], vec![8.0]).unwrap(), 513).unwrap();
        let one = wide.expectation_checked(&p, 1.0 - 1e-6, |_| 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trapezoid_integrates_quadratic() {
        let (nodes, weights) = trapezoid_nodes(0.0, 2.0, 2001);
        let v: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| w * t * t)
            .sum();
        assert!((v - 8.0 / 3.0).abs() < 1e-5);
    }
}
