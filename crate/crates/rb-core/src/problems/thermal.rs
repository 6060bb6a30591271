//! Conductivity-block diffusion on the unit square: a 3x3 checkerboard of
//! subdomains whose odd-numbered blocks carry the conductivity `μ_1` and the
//! even-numbered ones `μ_2`.  Piecewise linear elements on a uniform
//! criss-cross triangulation; flux datum 1 on the bottom edge, homogeneous
//! Neumann on the sides, homogeneous Dirichlet on the top.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{linear_combination, unify_patterns, CsrMatrix};
use crate::scalar::Scalar;
use crate::theta::ThetaFunction;
use crate::truth::{TruthModel, XGram};

#[derive(Debug, Clone, Copy)]
pub struct ThermalBlockConfig {
    /// mesh cells per side; must be a positive multiple of 3 so cell edges
    /// align with the block boundaries
    pub cells: usize,
}

impl ThermalBlockConfig {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 3 || cells % 3 != 0 {
            return Err(Error::InvalidConfig(format!(
                "cells per side must be a positive multiple of 3, got {cells}"
            )));
        }
        Ok(Self { cells })
    }

    /// Unknowns after eliminating the Dirichlet top edge.
    pub fn dofs(&self) -> usize {
        self.cells * (self.cells + 1)
    }

    /// Coordinates of the retained nodes, indexed like the dof vector.
    pub fn dof_coordinates(&self) -> Vec<(f64, f64)> {
        let n = self.cells;
        let h = 1.0 / n as f64;
        let mut coords = Vec::with_capacity(self.dofs());
        for iy in 0..n {
            for ix in 0..=n {
                coords.push((ix as f64 * h, iy as f64 * h));
            }
        }
        coords
    }

    /// 1-based block number of a cell, counted bottom-to-top then
    /// left-to-right; the corner blocks are odd.
    fn block_of(&self, cx: usize, cy: usize) -> usize {
        let bx = cx * 3 / self.cells;
        let by = cy * 3 / self.cells;
        bx * 3 + by + 1
    }
}

/// Assembles the two-term affine truth model.  The X-inner product is the
/// full diffusion form at `μ = (1, 1)`, which makes the form exactly
/// parametrically coercive with constant `min(μ_1, μ_2)`.
pub fn build_thermal_block<T: Scalar>(cfg: &ThermalBlockConfig) -> Result<TruthModel<T>> {
    let n = cfg.cells;
    let h = 1.0 / n as f64;
    let n_keep = cfg.dofs(); // node ids below this survive the top-edge elimination
    let node = |ix: usize, iy: usize| iy * (n + 1) + ix;

    // reference stiffness of a right triangle with axis-aligned legs,
    // right-angle vertex first; h-independent in two dimensions
    const K_LOCAL: [[f64; 3]; 3] =
        [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];

    let mut odd = Vec::new();
    let mut even = Vec::new();
    for cy in 0..n {
        for cx in 0..n {
            let v00 = node(cx, cy);
            let v10 = node(cx + 1, cy);
            let v01 = node(cx, cy + 1);
            let v11 = node(cx + 1, cy + 1);
            let tris = [[v00, v10, v01], [v11, v01, v10]];
            let sink = if cfg.block_of(cx, cy) % 2 == 1 { &mut odd } else { &mut even };
            for tri in tris {
                for (a, row) in tri.iter().zip(K_LOCAL.iter()) {
                    for (b, &k) in tri.iter().zip(row) {
                        if *a < n_keep && *b < n_keep && k != 0.0 {
                            sink.push((*a, *b, T::from_re(k)));
                        }
                    }
                }
            }
        }
    }
    let a_odd = CsrMatrix::from_triplets(n_keep, n_keep, odd)?;
    let a_even = CsrMatrix::from_triplets(n_keep, n_keep, even)?;
    let terms = unify_patterns(&[a_odd, a_even])?;

    // flux datum 1 on the bottom edge: trapezoidal edge weights
    let mut f = DVector::zeros(n_keep);
    for ix in 0..=n {
        let w = if ix == 0 || ix == n { 0.5 * h } else { h };
        f[node(ix, 0)] = T::from_re(w);
    }

    let gram = linear_combination(&[T::one(), T::one()], &terms);

    TruthModel::new(
        terms,
        vec![f],
        vec![ThetaFunction::coordinate(0), ThetaFunction::coordinate(1)],
        vec![ThetaFunction::constant(T::one())],
        XGram::Fixed(gram),
        true,
    )
}
