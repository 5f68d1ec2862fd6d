//! Uniform lattices over axis-aligned boxes.
//!
//! Points are enumerated in row-major order: the first axis varies slowest.
//! A point is interior when it lies strictly inside the box on every axis,
//! which guarantees that all axis neighbours and all diagonal neighbours used
//! by the cross-derivative stencils exist.

use std::ops::{Index, IndexMut};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_cone_radius() -> f64 {
    1.0
}

fn default_cone_opening() -> f64 {
    std::f64::consts::FRAC_PI_2
}

/// An axis-aligned box `[lower, upper]`.
///
/// The exterior cone parameters are carried as metadata only. Boxes satisfy
/// the exterior cone condition trivially.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_cone_radius")]
    pub cone_radius: f64,
    #[serde(default = "default_cone_opening")]
    pub cone_opening: f64,
}

impl DomainSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let spec = DomainSpec {
            lower,
            upper,
            cone_radius: default_cone_radius(),
            cone_opening: default_cone_opening(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() {
            return Err(Error::Config("domain must have at least one axis".into()));
        }
        if self.lower.len() != self.upper.len() {
            return Err(Error::Shape {
                expected: format!("{} upper bounds", self.lower.len()),
                found: format!("{}", self.upper.len()),
            });
        }
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "axis {k}: lower bound {lo} must be below upper bound {hi}"
                )));
            }
        }
        if !(self.cone_radius > 0.0 && self.cone_opening > 0.0) {
            return Err(Error::Config("cone metadata must be positive".into()));
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).collect()
    }

    /// Radius of the smallest origin-centred ball containing the box.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Uniform lattice with `n` points per axis, endpoints included.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: DomainSpec,
    n: usize,
    h: f64,
    strides: Vec<usize>,
    coords: Vec<f64>,
    interior_mask: Vec<bool>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

/// Build the lattice for `spec` with `n_per_axis` points along every axis.
pub fn build_grid(spec: &DomainSpec, n_per_axis: usize) -> Result<Arc<Grid>> {
    Grid::new(spec.clone(), n_per_axis).map(Arc::new)
}

impl Grid {
    pub fn new(spec: DomainSpec, n: usize) -> Result<Self> {
        spec.validate()?;
        if n < 3 {
            return Err(Error::NoInteriorPoints { n });
        }
        let widths = spec.widths();
        let w0 = widths[0];
        if widths.iter().any(|w| (w - w0).abs() > 1e-12 * w0.abs().max(1.0)) {
            return Err(Error::UnequalWidths { widths });
        }
        let d = spec.dim();
        let h = w0 / (n - 1) as f64;
        let total = n.pow(d as u32);

        let mut strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * n;
        }

        let mut coords = Vec::with_capacity(total * d);
        let mut interior_mask = Vec::with_capacity(total);
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for idx in 0..total {
            let mut inside = true;
            for k in 0..d {
                let i = (idx / strides[k]) % n;
                // pin the last node to the upper face so boundary data is sampled there exactly
                let x = if i == n - 1 {
                    spec.upper[k]
                } else {
                    spec.lower[k] + i as f64 * h
                };
                coords.push(x);
                inside &= i != 0 && i != n - 1;
            }
            interior_mask.push(inside);
            if inside {
                interior.push(idx);
            } else {
                boundary.push(idx);
            }
        }

        Ok(Grid {
            spec,
            n,
            h,
            strides,
            coords,
            interior_mask,
            interior,
            boundary,
        })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Total number of lattice points, `n^d`.
    pub fn len(&self) -> usize {
        self.interior_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior_mask.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[idx * d..(idx + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim())
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.interior_mask[idx]
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior_mask
    }

    pub fn interior_indices(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary
    }

    /// Per-axis lattice coordinates of a point.
    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        self.strides.iter().map(|s| (idx / s) % self.n).collect()
    }

    pub fn linear_index(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.dim() {
            return Err(Error::Shape {
                expected: format!("{} axes", self.dim()),
                found: format!("{}", multi.len()),
            });
        }
        if multi.iter().any(|&i| i >= self.n) {
            return Err(Error::Config(format!(
                "multi-index {multi:?} outside 0..{}",
                self.n
            )));
        }
        Ok(multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum())
    }

    /// Index of the point at `x + h * offset`.
    pub fn neighbor(&self, idx: usize, offset: &[i32]) -> Result<usize> {
        if offset.len() != self.dim() {
            return Err(Error::Shape {
                expected: format!("{}-component offset", self.dim()),
                found: format!("{}", offset.len()),
            });
        }
        let out_of_lattice = || Error::OutOfLattice {
            index: idx,
            offset: offset.to_vec(),
        };
        if idx >= self.len() {
            return Err(out_of_lattice());
        }
        let mut target = 0usize;
        for (k, &o) in offset.iter().enumerate() {
            let i = ((idx / self.strides[k]) % self.n) as i64 + o as i64;
            if i < 0 || i >= self.n as i64 {
                return Err(out_of_lattice());
            }
            target += i as usize * self.strides[k];
        }
        Ok(target)
    }

    /// Linear index shift for an offset; valid from any interior point when
    /// every component lies in {-1, 0, 1}.
    pub fn offset_delta(&self, offset: &[i32]) -> isize {
        offset
            .iter()
            .zip(&self.strides)
            .map(|(&o, &s)| o as isize * s as isize)
            .sum()
    }
}

/// Real values attached to every lattice point.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                expected: format!("{} values", grid.len()),
                found: format!("{}", values.len()),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(GridFunction {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        GridFunction {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        GridFunction {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every lattice point.
    pub fn from_fn(grid: &Arc<Grid>, f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = grid.points().map(f).collect();
        GridFunction {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - other|` over all points.
    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Index<usize> for GridFunction {
    type Output = f64;

    fn index(&self, idx: usize) -> &f64 {
        &self.values[idx]
    }
}

impl IndexMut<usize> for GridFunction {
    fn index_mut(&mut self, idx: usize) -> &mut f64 {
        &mut self.values[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(n: usize) -> Arc<Grid> {
        build_grid(&DomainSpec::cube(1, -1.0, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn paper_scale_1d_grid() {
        let g = interval(250);
        assert!((g.spacing() - 2.0 / 249.0).abs() < 1e-15);
        assert_eq!(g.interior_indices().len(), 248);
        assert_eq!(g.point(0), &[-1.0]);
        assert_eq!(g.point(249), &[1.0]);
    }

    #[test]
    fn smallest_grid() {
        let g = interval(3);
        let xs: Vec<f64> = g.points().map(|p| p[0]).collect();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.interior_indices(), &[1]);
        assert_eq!(g.boundary_indices(), &[0, 2]);
    }

    #[test]
    fn square_5x5_counts() {
        let g = build_grid(&DomainSpec::cube(2, -1.0, 1.0).unwrap(), 5).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.interior_indices().len(), 9);
        assert_eq!(g.boundary_indices().len(), 16);
    }

    #[test]
    fn rejects_bad_configs() {
        let d = DomainSpec::cube(1, -1.0, 1.0).unwrap();
        assert!(matches!(build_grid(&d, 2), Err(Error::NoInteriorPoints { n: 2 })));
        let rect = DomainSpec::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(matches!(build_grid(&rect, 5), Err(Error::UnequalWidths { .. })));
        assert!(DomainSpec::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn neighbours() {
        let g = interval(3);
        assert_eq!(g.neighbor(1, &[1]).unwrap(), 2);
        assert!(matches!(g.neighbor(2, &[1]), Err(Error::OutOfLattice { .. })));

        let g2 = build_grid(&DomainSpec::cube(2, -1.0, 1.0).unwrap(), 5).unwrap();
        let centre = g2.linear_index(&[2, 2]).unwrap();
        let diag = g2.neighbor(centre, &[1, -1]).unwrap();
        assert_eq!(g2.multi_index(diag), vec![3, 1]);
        assert_eq!(diag as isize - centre as isize, g2.offset_delta(&[1, -1]));
        assert!(g2.neighbor(0, &[-1, 0]).is_err());
    }

    #[test]
    fn interior_points_have_full_neighbourhood() {
        let g = build_grid(&DomainSpec::cube(3, 0.0, 1.0).unwrap(), 5).unwrap();
        for &idx in g.interior_indices() {
            for a in -1..=1 {
                for b in -1..=1 {
                    for c in -1..=1 {
                        g.neighbor(idx, &[a, b, c]).unwrap();
                    }
                }
            }
        }
        for idx in 0..g.len() {
            assert_eq!(g.linear_index(&g.multi_index(idx)).unwrap(), idx);
        }
        assert_eq!(g.interior_indices().len() + g.boundary_indices().len(), g.len());
    }

    #[test]
    fn grid_function_rejects_non_finite() {
        let g = interval(3);
        assert!(GridFunction::new(&g, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(GridFunction::new(&g, vec![0.0; 4]).is_err());
    }
}
