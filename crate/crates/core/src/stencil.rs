//! Discrete Hessian on interior lattice points.
//!
//! Diagonal entries use the centred second difference. Off-diagonal entries
//! use one of two seven-point cross stencils; which one keeps the scheme
//! monotone depends on the sign of the coefficient multiplying the entry
//! (see [`CrossOrientation::monotone_for`]).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

/// Choice of cross-derivative stencil for one `(i, j)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossOrientation {
    /// `[2u + u(+i+j) + u(-i-j) - u(±i) - u(±j)] / 2h²`: non-negative weights
    /// on the `(+,+)`/`(-,-)` diagonal.
    Plus,
    /// `[-2u - u(+i-j) - u(-i+j) + u(±i) + u(±j)] / 2h²`: non-positive weights
    /// on the `(+,-)`/`(-,+)` diagonal.
    Minus,
}

impl CrossOrientation {
    /// Orientation for which `2 a_ij * ∂_ij` puts non-positive weight on every
    /// neighbour, given a negative semi-definite diagonally dominant matrix.
    pub fn monotone_for(a_ij: f64) -> Self {
        if a_ij >= 0.0 {
            CrossOrientation::Minus
        } else {
            CrossOrientation::Plus
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            CrossOrientation::Plus => CrossOrientation::Minus,
            CrossOrientation::Minus => CrossOrientation::Plus,
        }
    }
}

/// How the scheme picks cross orientations from matrix coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StencilPolicy {
    #[default]
    Monotone,
    /// Deliberately wrong orientation; exists to prove the monotonicity
    /// checker is not vacuous.
    Flipped,
}

impl StencilPolicy {
    pub fn orientation(self, a_ij: f64) -> CrossOrientation {
        match self {
            StencilPolicy::Monotone => CrossOrientation::monotone_for(a_ij),
            StencilPolicy::Flipped => CrossOrientation::monotone_for(a_ij).flipped(),
        }
    }
}

/// Discrete Hessian at one interior point. Symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianSample(pub DMatrix<f64>);

impl HessianSample {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn unit(d: usize, i: usize, s: i32) -> Vec<i32> {
    let mut o = vec![0; d];
    o[i] = s;
    o
}

fn pair(d: usize, i: usize, si: i32, j: usize, sj: i32) -> Vec<i32> {
    let mut o = vec![0; d];
    o[i] = si;
    o[j] = sj;
    o
}

/// Neighbour offsets and weights (in units of `1/h²`) of `∂²_{ii}`.
pub fn diag_weights(d: usize, i: usize) -> Vec<(Vec<i32>, f64)> {
    vec![
        (vec![0; d], -2.0),
        (unit(d, i, 1), 1.0),
        (unit(d, i, -1), 1.0),
    ]
}

/// Neighbour offsets and weights (in units of `1/h²`) of `∂²_{ij}`, `i != j`.
pub fn cross_weights(d: usize, i: usize, j: usize, orientation: CrossOrientation) -> Vec<(Vec<i32>, f64)> {
    let (sign, diag) = match orientation {
        CrossOrientation::Plus => (1.0, 1),
        CrossOrientation::Minus => (-1.0, -1),
    };
    vec![
        (vec![0; d], sign),
        (pair(d, i, 1, j, diag), 0.5 * sign),
        (pair(d, i, -1, j, -diag), 0.5 * sign),
        (unit(d, i, 1), -0.5 * sign),
        (unit(d, i, -1), -0.5 * sign),
        (unit(d, j, 1), -0.5 * sign),
        (unit(d, j, -1), -0.5 * sign),
    ]
}

fn apply(u: &GridFunction, point: usize, weights: &[(Vec<i32>, f64)]) -> Result<f64> {
    let grid = u.grid();
    if point >= grid.len() || !grid.is_interior(point) {
        return Err(Error::StencilOutOfDomain { index: point });
    }
    let h = grid.spacing();
    let mut acc = 0.0;
    for (offset, w) in weights {
        acc += w * u[grid.neighbor(point, offset)?];
    }
    Ok(acc / (h * h))
}

pub fn hessian_diag(u: &GridFunction, axis: usize, point: usize) -> Result<f64> {
    let d = u.grid().dim();
    if axis >= d {
        return Err(Error::Shape {
            expected: format!("axis < {d}"),
            found: format!("{axis}"),
        });
    }
    apply(u, point, &diag_weights(d, axis))
}

pub fn hessian_cross(
    u: &GridFunction,
    i: usize,
    j: usize,
    orientation: CrossOrientation,
    point: usize,
) -> Result<f64> {
    let d = u.grid().dim();
    if i == j || i >= d || j >= d {
        return Err(Error::Shape {
            expected: format!("distinct axes below {d}"),
            found: format!("({i}, {j})"),
        });
    }
    apply(u, point, &cross_weights(d, i, j, orientation))
}

/// Assemble `D²_h u` at `point`, picking the cross stencil of each pair `i < j`
/// with `orientation(i, j)`.
pub fn discrete_hessian(
    u: &GridFunction,
    point: usize,
    orientation: impl Fn(usize, usize) -> CrossOrientation,
) -> Result<HessianSample> {
    let d = u.grid().dim();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = hessian_diag(u, i, point)?;
        for j in 0..i {
            let v = hessian_cross(u, j, i, orientation(j, i), point)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(HessianSample(m))
}

/// `Tr(A D²_h u)` as a fixed linear combination of lattice values, with the
/// cross orientation of each pair chosen from the sign of `a_ij`.
///
/// Offsets are stored as linear index shifts, so evaluation is only valid at
/// interior points.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStencil {
    terms: Vec<(isize, f64)>,
}

impl TraceStencil {
    pub fn for_matrix(grid: &Grid, a: &DMatrix<f64>, policy: StencilPolicy) -> Self {
        let d = grid.dim();
        let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
        let mut acc: BTreeMap<isize, f64> = BTreeMap::new();
        let mut add = |weights: Vec<(Vec<i32>, f64)>, scale: f64| {
            for (offset, w) in weights {
                *acc.entry(grid.offset_delta(&offset)).or_insert(0.0) += scale * w;
            }
        };
        for i in 0..d {
            add(diag_weights(d, i), a[(i, i)]);
            for j in (i + 1)..d {
                // Tr(AM) picks up a_ij m_ji + a_ji m_ij
                let c = a[(i, j)] + a[(j, i)];
                if c != 0.0 {
                    add(cross_weights(d, i, j, policy.orientation(c)), c);
                }
            }
        }
        let terms = acc
            .into_iter()
            .filter(|(_, w)| *w != 0.0)
            .map(|(delta, w)| (delta, w * inv_h2))
            .collect();
        TraceStencil { terms }
    }

    pub fn terms(&self) -> &[(isize, f64)] {
        &self.terms
    }

    /// Weight on the centre point.
    pub fn centre_weight(&self) -> f64 {
        self.terms
            .iter()
            .find(|(delta, _)| *delta == 0)
            .map_or(0.0, |(_, w)| *w)
    }

    #[inline]
    pub fn apply(&self, values: &[f64], point: usize) -> f64 {
        let mut acc = 0.0;
        for &(delta, w) in &self.terms {
            acc += w * values[point.wrapping_add_signed(delta)];
        }
        acc
    }
}
