//! Two-level iteration: explicit Euler relaxation of `G^v = 0` for a frozen
//! `v`, wrapped in the fixed-point update `v <- u`.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::problems::{error_norm, ProblemSpec};
use crate::scheme::{build_barriers, BarrierBounds, BarrierPair, Discretization, RegularizedScheme};
use crate::stencil::StencilPolicy;

/// Interior sweeps switch to rayon above this many points.
const PARALLEL_THRESHOLD: usize = 1 << 14;
/// Residual growth factor that counts as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;
/// Slack on the barrier band when checking the final iterate.
pub const BARRIER_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum EpsilonRule {
    Fixed { value: f64 },
    /// `ε = factor * h`
    Proportional { factor: f64 },
}

impl EpsilonRule {
    pub fn resolve(self, h: f64) -> f64 {
        match self {
            EpsilonRule::Fixed { value } => value,
            EpsilonRule::Proportional { factor } => factor * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum RhoRule {
    Fixed { value: f64 },
    /// `ρ = factor * h²`
    Proportional { factor: f64 },
}

impl RhoRule {
    pub fn resolve(self, h: f64) -> f64 {
        match self {
            RhoRule::Fixed { value } => value,
            RhoRule::Proportional { factor } => factor * h * h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess {
    #[default]
    Zero,
    /// Blend of per-axis linear interpolants of the Dirichlet data.
    BoundaryExtension,
    /// Restriction of the exact solution (manufactured problems only).
    Exact,
    Custom(Vec<f64>),
}

impl InitialGuess {
    pub fn label(&self) -> &'static str {
        match self {
            InitialGuess::Zero => "zero",
            InitialGuess::BoundaryExtension => "boundary-extension",
            InitialGuess::Exact => "exact",
            InitialGuess::Custom(_) => "custom",
        }
    }

    pub fn build(&self, problem: &ProblemSpec, grid: &Arc<Grid>) -> Result<GridFunction> {
        let mut u = match self {
            InitialGuess::Zero => GridFunction::zeros(grid),
            InitialGuess::BoundaryExtension => boundary_extension(problem, grid),
            InitialGuess::Exact => problem
                .exact
                .as_ref()
                .ok_or_else(|| Error::Config("exact initial guess needs an exact solution".into()))?
                .sample(grid),
            InitialGuess::Custom(values) => GridFunction::new(grid, values.clone())?,
        };
        for &b in grid.boundary_indices() {
            u[b] = problem.boundary_at(grid.point(b));
        }
        Ok(u)
    }
}

/// Weighted blend over axes of the linear interpolant between the two
/// opposite faces; weights `1/dist²` make it match the data on every face.
fn boundary_extension(problem: &ProblemSpec, grid: &Arc<Grid>) -> GridFunction {
    let d = grid.dim();
    let lo = &problem.domain.lower;
    let hi = &problem.domain.upper;
    GridFunction::from_fn(grid, |x| {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..d {
            let (a, b) = (x[k] - lo[k], hi[k] - x[k]);
            let mut left = x.to_vec();
            left[k] = lo[k];
            let mut right = x.to_vec();
            right[k] = hi[k];
            let interp = (b * problem.boundary_at(&left) + a * problem.boundary_at(&right)) / (a + b);
            let dist = a.min(b);
            if dist == 0.0 {
                return interp;
            }
            let w = 1.0 / (dist * dist);
            num += w * interp;
            den += w;
        }
        num / den
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub epsilon: EpsilonRule,
    pub rho: RhoRule,
    pub n_max: usize,
    pub m_max: usize,
    pub inner_tol: Option<f64>,
    pub outer_tol: Option<f64>,
    pub initial_guess: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: EpsilonRule::Proportional { factor: 1.2 },
            rho: RhoRule::Proportional { factor: 0.05 },
            n_max: 55,
            m_max: 5000,
            inner_tol: Some(1e-8),
            outer_tol: None,
            initial_guess: InitialGuess::Zero,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, h: f64) -> Result<()> {
        let (eps, rho) = (self.epsilon.resolve(h), self.rho.resolve(h));
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {rho}")));
        }
        if self.n_max == 0 || self.m_max == 0 {
            return Err(Error::Config("n_max and m_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// One explicit Euler update `u - ρ G(u)` at interior points, boundary reset
/// to the Dirichlet data. All points read the old array.
pub fn euler_step(s: &RegularizedScheme, u: &GridFunction, rho: f64) -> Result<GridFunction> {
    let mut next = u.values().to_vec();
    sweep(s, u.values(), &mut next, rho);
    if let Some(index) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    GridFunction::new(s.grid(), next)
}

/// Writes the Euler update of `cur` into `next` and returns the max interior
/// residual of `cur`.
fn sweep(s: &RegularizedScheme, cur: &[f64], next: &mut [f64], rho: f64) -> f64 {
    let grid = s.grid();
    let disc = s.discretization();
    let update = |p: usize, slot: &mut f64| -> f64 {
        if grid.is_interior(p) {
            let r = s.residual_at(cur, p);
            *slot = cur[p] - rho * r;
            r.abs()
        } else {
            *slot = disc.boundary()[p];
            0.0
        }
    };
    if grid.interior_indices().len() >= PARALLEL_THRESHOLD {
        next.par_iter_mut()
            .enumerate()
            .map(|(p, slot)| update(p, slot))
            .reduce(|| 0.0, f64::max)
    } else {
        next.iter_mut()
            .enumerate()
            .map(|(p, slot)| update(p, slot))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub solution: GridFunction,
    /// Euler updates performed.
    pub iterations: usize,
    /// Max interior residual of the returned solution.
    pub residual: f64,
    pub converged: bool,
}

/// Relaxes `G^v(u) = 0` from `warm_start` for at most `m_max` steps, stopping
/// early once the max interior residual is at most `inner_tol`.
pub fn inner_solve(
    s: &RegularizedScheme,
    rho: f64,
    m_max: usize,
    inner_tol: Option<f64>,
    warm_start: &GridFunction,
) -> Result<InnerResult> {
    let disc = s.discretization();
    let mut cur = warm_start.values().to_vec();
    for &b in s.grid().boundary_indices() {
        cur[b] = disc.boundary()[b];
    }
    let mut next = cur.clone();
    let tol = inner_tol.unwrap_or(0.0);
    let mut initial = None;
    let mut iterations = 0;
    let mut residual;
    loop {
        residual = sweep(s, &cur, &mut next, rho);
        if !residual.is_finite() {
            return Err(Error::Divergence {
                iterations,
                residual,
                initial: initial.unwrap_or(f64::NAN),
            });
        }
        let init = *initial.get_or_insert(residual);
        if residual <= tol || iterations == m_max {
            break;
        }
        if residual > DIVERGENCE_FACTOR * init.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence {
                iterations,
                residual,
                initial: init,
            });
        }
        std::mem::swap(&mut cur, &mut next);
        iterations += 1;
    }
    Ok(InnerResult {
        solution: GridFunction::new(s.grid(), cur)?,
        iterations,
        residual,
        converged: residual <= tol,
    })
}

/// Per-outer-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub n: usize,
    /// Max interior `|G^u(u)|` with the blend frozen at the iterate itself.
    pub residual: f64,
    /// `max |u - u_exact|`, when an exact solution is known.
    pub error: Option<f64>,
    /// `max |v_{n+1} - v_n|`.
    pub fixed_point_gap: f64,
    pub inner_iterations: usize,
    /// Max interior `|G^{v_n}(u)|` at the end of the inner solve.
    pub inner_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunParameters {
    pub problem: String,
    pub n_per_axis: usize,
    pub h: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub n_max: usize,
    pub m_max: usize,
    pub inner_tol: Option<f64>,
    pub outer_tol: Option<f64>,
    pub initial_guess: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub parameters: RunParameters,
    pub history: Vec<OuterRecord>,
    pub final_solution: GridFunction,
    /// Error of the initial guess, when an exact solution is known.
    pub initial_error: Option<f64>,
    pub fixed_point_gap: f64,
    /// Bound on `|∂G/∂v|`: `max |F1 - F2| / 2ε` at the final iterate.
    pub blend_lipschitz: f64,
    pub total_inner_iterations: usize,
    pub barriers: BarrierPair,
    pub wall_time_secs: f64,
    /// Iterates after each outer step, when requested.
    pub snapshots: Vec<GridFunction>,
}

impl RunReport {
    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.residual)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.history.last().and_then(|r| r.error)
    }
}

/// Options that do not change the numerical result.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub keep_snapshots: bool,
    pub policy: StencilPolicy,
}

pub fn outer_iterate(problem: &ProblemSpec, grid: &Arc<Grid>, config: &SolverConfig) -> Result<RunReport> {
    outer_iterate_with(problem, grid, config, RunOptions::default())
}

pub fn outer_iterate_with(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    config: &SolverConfig,
    options: RunOptions,
) -> Result<RunReport> {
    let start = Instant::now();
    let h = grid.spacing();
    config.validate(h)?;
    let epsilon = config.epsilon.resolve(h);
    let rho = config.rho.resolve(h);

    let bounds = BarrierBounds::from_operators(&problem.f1, &problem.f2)?;
    let barriers = build_barriers(problem, grid, epsilon, bounds)?;
    let disc = Discretization::new(problem, grid, options.policy)?;

    let mut v = config.initial_guess.build(problem, grid)?;
    let initial_error = problem.exact.as_ref().map(|e| error_norm(&v, e));
    let mut u = v.clone();
    let mut history = Vec::with_capacity(config.n_max);
    let mut snapshots = Vec::new();
    let mut total_inner = 0;
    let mut gap = f64::INFINITY;

    for n in 1..=config.n_max {
        let scheme = RegularizedScheme::from_discretization(Arc::clone(&disc), epsilon, v.clone())?;
        let inner = inner_solve(&scheme, rho, config.m_max, config.inner_tol, &u)?;
        total_inner += inner.iterations;
        u = inner.solution;
        gap = u.sup_distance(&v);

        let consistent = scheme.refreeze(u.clone())?;
        let residual = consistent.max_interior_residual(u.values());
        let error = problem.exact.as_ref().map(|e| error_norm(&u, e));
        log::debug!(
            "outer {n}: inner steps {}, residual {residual:.3e}, gap {gap:.3e}, error {error:?}",
            inner.iterations
        );
        history.push(OuterRecord {
            n,
            residual,
            error,
            fixed_point_gap: gap,
            inner_iterations: inner.iterations,
            inner_residual: inner.residual,
        });
        if options.keep_snapshots {
            snapshots.push(u.clone());
        }
        v = u.clone();
        if config.outer_tol.is_some_and(|tol| gap <= tol) {
            break;
        }
    }

    if let Some((index, value)) = barriers.first_violation(&u, BARRIER_SLACK) {
        let (lower, upper) = barriers.band();
        return Err(Error::StabilityFailure {
            index,
            value,
            lower,
            upper,
        });
    }

    let blend_lipschitz = disc.max_operator_gap(u.values()) / (2.0 * epsilon);
    Ok(RunReport {
        parameters: RunParameters {
            problem: problem.name.clone(),
            n_per_axis: grid.n_per_axis(),
            h,
            epsilon,
            rho,
            n_max: config.n_max,
            m_max: config.m_max,
            inner_tol: config.inner_tol,
            outer_tol: config.outer_tol,
            initial_guess: config.initial_guess.label().into(),
        },
        history,
        final_solution: u,
        initial_error,
        fixed_point_gap: gap,
        blend_lipschitz,
        total_inner_iterations: total_inner,
        barriers,
        wall_time_secs: start.elapsed().as_secs_f64(),
        snapshots,
    })
}

/// Runs a strictly decreasing `ε` schedule, warm-starting each run from the
/// previous solution.
pub fn eps_continuation(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    schedule: &[f64],
    config: &SolverConfig,
) -> Result<Vec<RunReport>> {
    if schedule.is_empty() {
        return Err(Error::Config("empty epsilon schedule".into()));
    }
    if schedule.iter().any(|&e| !(e > 0.0)) || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!(
            "epsilon schedule must be positive and strictly decreasing, got {schedule:?}"
        )));
    }
    let mut reports: Vec<RunReport> = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let mut cfg = config.clone();
        cfg.epsilon = EpsilonRule::Fixed { value: eps };
        if let Some(prev) = reports.last() {
            cfg.initial_guess = InitialGuess::Custom(prev.final_solution.values().to_vec());
        }
        reports.push(outer_iterate(problem, grid, &cfg)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec};
    use crate::problems::{self, ExactSolution};
    use nalgebra::DMatrix;

    fn zero_problem() -> ProblemSpec {
        let (f1, f2) = problems::paper_operators(1);
        let zero = ExactSolution::new(|_| 0.0, |_| DMatrix::zeros(1, 1));
        ProblemSpec::manufactured("zero", DomainSpec::cube(1, -1.0, 1.0).unwrap(), f1, f2, zero).unwrap()
    }

    #[test]
    fn euler_step_from_zero_on_example_1d() {
        let p = problems::example_1d();
        let g = build_grid(&p.domain, 64).unwrap();
        let h = g.spacing();
        let rho = 0.05 * h * h;
        let s = RegularizedScheme::new(&p, &g, 1.2 * h, GridFunction::zeros(&g)).unwrap();
        let next = euler_step(&s, &GridFunction::zeros(&g), rho).unwrap();
        for &i in g.interior_indices() {
            let x = g.point(i)[0];
            let want = if x < 0.0 { 2.0 * rho } else { -2.0 * rho };
            assert!((next[i] - want).abs() < 1e-18);
        }
        assert_eq!(next[0], -0.5);
        assert_eq!(next[g.len() - 1], 0.5);
    }

    #[test]
    fn euler_step_fixed_point() {
        let p = zero_problem();
        let g = build_grid(&p.domain, 9).unwrap();
        let s = RegularizedScheme::new(&p, &g, 0.1, GridFunction::zeros(&g)).unwrap();
        let u = GridFunction::zeros(&g);
        assert_eq!(euler_step(&s, &u, 1e-3).unwrap().values(), u.values());
    }

    #[test]
    fn zero_problem_converges_to_zero() {
        let p = zero_problem();
        let g = build_grid(&p.domain, 17).unwrap();
        let s = RegularizedScheme::new(&p, &g, 0.1, GridFunction::constant(&g, 0.3)).unwrap();
        let warm = GridFunction::from_fn(&g, |x| 0.2 * (1.0 - x[0] * x[0]));
        let h = g.spacing();
        let res = inner_solve(&s, 0.05 * h * h, 1_000_000, Some(1e-12), &warm).unwrap();
        assert!(res.converged && res.residual <= 1e-12);
        assert!(res.solution.max_abs() < 1e-10);
    }

    #[test]
    fn warm_start_at_solution_exits_immediately() {
        let p = problems::example_1d();
        let g = build_grid(&p.domain, 33).unwrap();
        let h = g.spacing();
        let rho = 0.05 * h * h;
        let v = p.exact.as_ref().unwrap().sample(&g);
        let s = RegularizedScheme::new(&p, &g, 1.2 * h, v.clone()).unwrap();
        let solved = inner_solve(&s, rho, 2_000_000, Some(1e-10), &v).unwrap();
        assert!(solved.converged);
        let again = inner_solve(&s, rho, 10, Some(1e-10), &solved.solution).unwrap();
        assert!(again.iterations <= 1);
        assert_eq!(again.solution.values(), solved.solution.values());
    }

    #[test]
    fn oversized_rho_diverges() {
        let p = problems::example_1d();
        let g = build_grid(&p.domain, 64).unwrap();
        let s = RegularizedScheme::new(&p, &g, 0.05, GridFunction::zeros(&g)).unwrap();
        let err = inner_solve(&s, 10.0, 5000, Some(1e-8), &GridFunction::zeros(&g)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn boundary_extension_matches_data() {
        let p = problems::example_2d();
        let g = build_grid(&p.domain, 9).unwrap();
        let u = InitialGuess::BoundaryExtension.build(&p, &g).unwrap();
        for &b in g.boundary_indices() {
            assert_eq!(u[b], p.boundary_at(g.point(b)));
        }
        let p1 = problems::example_1d();
        let g1 = build_grid(&p1.domain, 5).unwrap();
        let u1 = InitialGuess::BoundaryExtension.build(&p1, &g1).unwrap();
        let xs: Vec<f64> = u1.values().to_vec();
        assert_eq!(xs, vec![-0.5, -0.25, 0.0, 0.25, 0.5]);
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        assert!(c.validate(0.1).is_ok());
        c.n_max = 0;
        assert!(c.validate(0.1).is_err());
        let c = SolverConfig {
            rho: RhoRule::Fixed { value: 0.0 },
            ..SolverConfig::default()
        };
        assert!(c.validate(0.1).is_err());
    }

    #[test]
    fn schedule_must_decrease() {
        let p = problems::example_1d();
        let g = build_grid(&p.domain, 9).unwrap();
        let c = SolverConfig::default();
        assert!(eps_continuation(&p, &g, &[0.1, 0.2], &c).is_err());
        assert!(eps_continuation(&p, &g, &[], &c).is_err());
        assert!(eps_continuation(&p, &g, &[0.1, -0.05], &c).is_err());
    }
}
