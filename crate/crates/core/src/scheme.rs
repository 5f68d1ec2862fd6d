//! The regularised discrete operator and its global barriers.
//!
//! For a frozen grid function `v` and `ε > 0` the residual at an interior
//! point is
//!
//! ```text
//! ε u(x) + h(x) F1(D²_h u(x)) + (1 - h(x)) F2(D²_h u(x)) - f(x),
//! h(x) = clamp((v(x) + ε) / 2ε, 0, 1)
//! ```
//!
//! and `u(x) - g(x)` on the boundary. The source is subtracted once.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::operators::{EllipticityBounds, IsaacsOperator};
use crate::problems::ProblemSpec;
use crate::stencil::{StencilPolicy, TraceStencil};

/// Clamped affine ramp blending `F1` and `F2`.
#[inline]
pub fn cutoff(v: f64, epsilon: f64) -> f64 {
    ((v + epsilon) / (2.0 * epsilon)).clamp(0.0, 1.0)
}

/// `ε r + h F1 + (1 - h) F2 - f`, shared by the discrete residual and the
/// continuum operator so both evaluate identically.
#[inline]
pub fn blended_operator(epsilon: f64, r: f64, blend: f64, f1: f64, f2: f64, f: f64) -> f64 {
    epsilon * r + blend * f1 + (1.0 - blend) * f2 - f
}

/// An Isaacs operator with every matrix pre-assembled into a lattice stencil.
#[derive(Debug, Clone)]
pub struct CompiledOperator {
    shape: Vec<usize>,
    stencils: Vec<TraceStencil>,
}

impl CompiledOperator {
    pub fn new(op: &IsaacsOperator, grid: &Grid, policy: StencilPolicy) -> Self {
        CompiledOperator {
            shape: op.shape(),
            stencils: op
                .matrices()
                .map(|a| TraceStencil::for_matrix(grid, a, policy))
                .collect(),
        }
    }

    /// `max_a min_b Tr(A_ab D²_h u)` at an interior point.
    #[inline]
    pub fn eval(&self, values: &[f64], point: usize) -> f64 {
        let mut k = 0;
        let mut sup = f64::NEG_INFINITY;
        for &len in &self.shape {
            let mut inf = f64::INFINITY;
            for st in &self.stencils[k..k + len] {
                inf = inf.min(st.apply(values, point));
            }
            sup = sup.max(inf);
            k += len;
        }
        sup
    }

    pub fn stencils(&self) -> &[TraceStencil] {
        &self.stencils
    }
}

/// Everything about the scheme that does not depend on `ε` or `v`.
#[derive(Debug)]
pub struct Discretization {
    grid: Arc<Grid>,
    f1: CompiledOperator,
    f2: CompiledOperator,
    source: Vec<f64>,
    boundary: Vec<f64>,
    policy: StencilPolicy,
}

impl Discretization {
    pub fn new(problem: &ProblemSpec, grid: &Arc<Grid>, policy: StencilPolicy) -> Result<Arc<Self>> {
        problem.validate()?;
        if problem.domain != *grid.spec() {
            return Err(Error::Config(format!(
                "grid box {:?} does not match problem domain {:?}",
                grid.spec(),
                problem.domain
            )));
        }
        let source: Vec<f64> = grid.points().map(|x| problem.source_at(x)).collect();
        let mut boundary = vec![0.0; grid.len()];
        for &b in grid.boundary_indices() {
            boundary[b] = problem.boundary_at(grid.point(b));
        }
        for (i, v) in source.iter().chain(&boundary).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i % grid.len() });
            }
        }
        Ok(Arc::new(Discretization {
            grid: Arc::clone(grid),
            f1: CompiledOperator::new(&problem.f1, grid, policy),
            f2: CompiledOperator::new(&problem.f2, grid, policy),
            source,
            boundary,
            policy,
        }))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn policy(&self) -> StencilPolicy {
        self.policy
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    /// Dirichlet data; entries at interior points are zero and unused.
    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    /// `(F1(D²_h u), F2(D²_h u))` at an interior point.
    #[inline]
    pub fn operator_values(&self, values: &[f64], point: usize) -> (f64, f64) {
        (self.f1.eval(values, point), self.f2.eval(values, point))
    }

    pub fn f1(&self) -> &CompiledOperator {
        &self.f1
    }

    pub fn f2(&self) -> &CompiledOperator {
        &self.f2
    }

    /// Max over the point set of `|F1 - F2|`, the sensitivity of the residual
    /// to the blend value.
    pub fn max_operator_gap(&self, values: &[f64]) -> f64 {
        self.grid
            .interior_indices()
            .iter()
            .map(|&p| {
                let (a, b) = self.operator_values(values, p);
                (a - b).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `G^v_{ε,h}` for a frozen `v`.
#[derive(Debug, Clone)]
pub struct RegularizedScheme {
    disc: Arc<Discretization>,
    epsilon: f64,
    v: GridFunction,
    blend: Vec<f64>,
}

impl RegularizedScheme {
    pub fn new(problem: &ProblemSpec, grid: &Arc<Grid>, epsilon: f64, v: GridFunction) -> Result<Self> {
        Self::with_policy(problem, grid, epsilon, v, StencilPolicy::Monotone)
    }

    pub fn with_policy(
        problem: &ProblemSpec,
        grid: &Arc<Grid>,
        epsilon: f64,
        v: GridFunction,
        policy: StencilPolicy,
    ) -> Result<Self> {
        let disc = Discretization::new(problem, grid, policy)?;
        Self::from_discretization(disc, epsilon, v)
    }

    pub fn from_discretization(disc: Arc<Discretization>, epsilon: f64, v: GridFunction) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        let g = disc.grid();
        if !Arc::ptr_eq(v.grid(), g) && (v.grid().len() != g.len() || v.grid().spec() != g.spec()) {
            return Err(Error::Shape {
                expected: format!("v on the scheme grid ({} points)", g.len()),
                found: format!("{} points", v.grid().len()),
            });
        }
        let blend = v.values().iter().map(|&x| cutoff(x, epsilon)).collect();
        Ok(RegularizedScheme {
            disc,
            epsilon,
            v,
            blend,
        })
    }

    /// Same discretisation and `ε`, new frozen `v`.
    pub fn refreeze(&self, v: GridFunction) -> Result<Self> {
        Self::from_discretization(Arc::clone(&self.disc), self.epsilon, v)
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.disc.grid()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn v(&self) -> &GridFunction {
        &self.v
    }

    /// `h^v_ε` at every point.
    pub fn blend(&self) -> &[f64] {
        &self.blend
    }

    /// Residual at `point` for raw lattice values.
    #[inline]
    pub fn residual_at(&self, values: &[f64], point: usize) -> f64 {
        if self.disc.grid.is_interior(point) {
            let (a, b) = self.disc.operator_values(values, point);
            blended_operator(
                self.epsilon,
                values[point],
                self.blend[point],
                a,
                b,
                self.disc.source[point],
            )
        } else {
            values[point] - self.disc.boundary[point]
        }
    }

    pub fn residual(&self, u: &GridFunction, point: usize) -> f64 {
        self.residual_at(u.values(), point)
    }

    pub fn residuals(&self, values: &[f64]) -> Vec<f64> {
        (0..values.len()).map(|p| self.residual_at(values, p)).collect()
    }

    /// Max residual magnitude over interior points.
    pub fn max_interior_residual(&self, values: &[f64]) -> f64 {
        self.disc
            .grid
            .interior_indices()
            .iter()
            .map(|&p| self.residual_at(values, p).abs())
            .fold(0.0, f64::max)
    }
}

pub fn scheme_residual(s: &RegularizedScheme, u: &GridFunction, point: usize) -> f64 {
    s.residual(u, point)
}

/// Curvature constants for the two barriers.
///
/// The upper barrier needs `F_i(-cI) >= c d λ_up` and the lower one
/// `F_i(cI) <= -c d λ_low` for both operators; by homogeneity these constants
/// are read off `F_i(∓I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierBounds {
    pub upper_lambda: f64,
    pub lower_lambda: f64,
}

impl BarrierBounds {
    /// Same constant for both sides, giving `w_lower = -w_upper`.
    pub fn symmetric(bounds: EllipticityBounds) -> Self {
        BarrierBounds {
            upper_lambda: bounds.lambda,
            lower_lambda: bounds.lambda,
        }
    }

    /// Sharpest constants valid for the operator pair.
    pub fn from_operators(f1: &IsaacsOperator, f2: &IsaacsOperator) -> Result<Self> {
        let d = f1.dim();
        let id = nalgebra::DMatrix::<f64>::identity(d, d);
        let neg_id = -&id;
        let mut up = f64::INFINITY;
        let mut low = f64::INFINITY;
        for op in [f1, f2] {
            up = up.min(op.eval(&neg_id)? / d as f64);
            low = low.min(-op.eval(&id)? / d as f64);
        }
        if !(up > 0.0 && low > 0.0) {
            return Err(Error::DegenerateEllipticity(format!(
                "barrier constants must be positive, got ({up}, {low})"
            )));
        }
        Ok(BarrierBounds {
            upper_lambda: up,
            lower_lambda: low,
        })
    }
}

/// Sub- and supersolution trapping every discrete solution.
#[derive(Debug, Clone)]
pub struct BarrierPair {
    pub lower: GridFunction,
    pub upper: GridFunction,
    /// Constants of the upper barrier `C1 - C2 |x|² / (2 λ_up d)`.
    pub c1: f64,
    pub c2: f64,
    /// Offset of the lower barrier `-(C1' - C2 |x|² / (2 λ_low d))`.
    pub lower_c1: f64,
}

impl BarrierPair {
    /// `[min lower, max upper]`.
    pub fn band(&self) -> (f64, f64) {
        (self.lower.min(), self.upper.max())
    }

    /// First point where `u` leaves the band widened by `slack`.
    pub fn first_violation(&self, u: &GridFunction, slack: f64) -> Option<(usize, f64)> {
        let (lo, hi) = self.band();
        u.values()
            .iter()
            .position(|&x| x < lo - slack || x > hi + slack)
            .map(|i| (i, u[i]))
    }
}

/// Explicit barriers, certified for every `v` by checking both extreme
/// blends at every lattice point.
pub fn build_barriers(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    epsilon: f64,
    bounds: BarrierBounds,
) -> Result<BarrierPair> {
    build_barriers_with(problem, grid, epsilon, bounds, None)
}

/// As [`build_barriers`], optionally overriding `C2`.
pub fn build_barriers_with(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    epsilon: f64,
    bounds: BarrierBounds,
    c2_override: Option<f64>,
) -> Result<BarrierPair> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let disc = Discretization::new(problem, grid, StencilPolicy::Monotone)?;
    let d = grid.dim() as f64;
    let f_norm = disc.source.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g_norm = grid
        .boundary_indices()
        .iter()
        .fold(0.0f64, |m, &b| m.max(disc.boundary[b].abs()));
    let radius = problem.domain.max_norm();

    let c2 = c2_override.unwrap_or(f_norm);
    let c1 = g_norm + c2 * radius * radius / (2.0 * bounds.upper_lambda * d);
    let lower_c1 = g_norm + c2 * radius * radius / (2.0 * bounds.lower_lambda * d);

    let sq = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let upper = GridFunction::from_fn(grid, |x| c1 - c2 * sq(x) / (2.0 * bounds.upper_lambda * d));
    let lower = GridFunction::from_fn(grid, |x| -(lower_c1 - c2 * sq(x) / (2.0 * bounds.lower_lambda * d)));

    let tol = 1e-9 * (1.0 + c2 + c1.max(lower_c1));
    for p in 0..grid.len() {
        if grid.is_interior(p) {
            let (a_up, b_up) = disc.operator_values(upper.values(), p);
            let (a_lo, b_lo) = disc.operator_values(lower.values(), p);
            for blend in [0.0, 1.0] {
                let g_up = blended_operator(epsilon, upper[p], blend, a_up, b_up, disc.source[p]);
                let g_lo = blended_operator(epsilon, lower[p], blend, a_lo, b_lo, disc.source[p]);
                if g_up < -tol {
                    return Err(Error::BarrierViolation {
                        index: p,
                        detail: format!("upper barrier residual {g_up:e} < 0 at blend {blend}"),
                    });
                }
                if g_lo > tol {
                    return Err(Error::BarrierViolation {
                        index: p,
                        detail: format!("lower barrier residual {g_lo:e} > 0 at blend {blend}"),
                    });
                }
            }
        } else {
            let g = disc.boundary[p];
            if upper[p] - g < -tol || lower[p] - g > tol {
                return Err(Error::BarrierViolation {
                    index: p,
                    detail: format!(
                        "boundary value {g} outside [{}, {}]",
                        lower[p], upper[p]
                    ),
                });
            }
        }
    }
    Ok(BarrierPair {
        lower,
        upper,
        c1,
        c2,
        lower_c1,
    })
}
