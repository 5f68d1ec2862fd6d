//! Executable checks of monotonicity, consistency order, contraction of the
//! Euler map and barrier membership.
//!
//! Every checker returns a [`PropertyReport`] instead of failing; a report
//! passes exactly when it carries no witnesses.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{build_grid, Grid, GridFunction};
use crate::problems::{ExactSolution, ProblemSpec};
use crate::scheme::{
    blended_operator, build_barriers_with, cutoff, BarrierBounds, BarrierPair, Discretization,
    RegularizedScheme,
};
use crate::solver::euler_step;
use crate::stencil::StencilPolicy;

/// Relative tolerance of the monotonicity inequality.
pub const MONOTONICITY_TOL: f64 = 1e-12;
/// Minimum accepted log-log slope of the consistency defect.
pub const CONSISTENCY_SLOPE: f64 = 1.9;
/// Defects at or below this are treated as exact.
pub const EXACT_DEFECT: f64 = 1e-12;

/// One failing sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    /// Linear lattice index, when the failure is local.
    pub point: Option<usize>,
    pub coords: Vec<f64>,
    /// Trial number or refinement level that produced the failure.
    pub sample: usize,
    pub values: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub samples: usize,
    pub passed: bool,
    pub violations: Vec<Witness>,
    pub statistics: BTreeMap<String, f64>,
}

impl PropertyReport {
    fn new(property: &str, samples: usize, violations: Vec<Witness>, statistics: BTreeMap<String, f64>) -> Self {
        PropertyReport {
            property: property.into(),
            samples,
            passed: violations.is_empty(),
            violations,
            statistics,
        }
    }

    pub fn statistic(&self, key: &str) -> Option<f64> {
        self.statistics.get(key).copied()
    }
}

/// Independent stream per trial so parallel runs match serial ones.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// `2 max(1, |g|, |f|)`: range of the random grid functions.
fn sample_amplitude(s: &RegularizedScheme) -> f64 {
    let disc = s.discretization();
    let m = disc
        .boundary()
        .iter()
        .chain(disc.source())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    2.0 * m
}

/// Random pairs `u <= w` agreeing at a random interior point `x`, checking
/// `G(w)(x) <= G(u)(x)`. Even trials perturb every point, odd trials only
/// the immediate neighbourhood of `x`; every 64th trial uses `w = u`.
pub fn check_monotonicity(s: &RegularizedScheme, trials: usize, seed: u64) -> PropertyReport {
    let grid = s.grid();
    let interior = grid.interior_indices();
    let amp = sample_amplitude(s);
    let offsets = neighbourhood(grid.dim());

    let outcomes: Vec<(f64, Option<Witness>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let x = interior[rng.gen_range(0..interior.len())];
            let u: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-amp..=amp)).collect();
            let mut w = u.clone();
            if t % 64 != 63 {
                if t % 2 == 0 {
                    for (p, wp) in w.iter_mut().enumerate() {
                        if p != x {
                            *wp += rng.gen_range(0.0..=amp);
                        }
                    }
                } else {
                    for off in &offsets {
                        if rng.gen_bool(0.5) {
                            let q = x.wrapping_add_signed(grid.offset_delta(off));
                            w[q] += rng.gen_range(0.0..=amp);
                        }
                    }
                }
            }
            let gu = s.residual_at(&u, x);
            let gw = s.residual_at(&w, x);
            let excess = gw - gu;
            let tol = MONOTONICITY_TOL * gu.abs().max(gw.abs()).max(1.0);
            let witness = (excess > tol).then(|| Witness {
                point: Some(x),
                coords: grid.point(x).to_vec(),
                sample: t,
                values: vec![gu, gw],
                detail: format!("G(w) - G(u) = {excess:e} with u <= w, u(x) = w(x)"),
            });
            (excess, witness)
        })
        .collect();

    let max_excess = outcomes.iter().fold(f64::NEG_INFINITY, |m, o| m.max(o.0));
    let violations: Vec<Witness> = outcomes.into_iter().filter_map(|o| o.1).collect();
    let mut stats = BTreeMap::new();
    stats.insert("max_excess".into(), max_excess);
    stats.insert("amplitude".into(), amp);
    PropertyReport::new("monotonicity", trials, violations, stats)
}

/// Non-zero offsets in `{-1, 0, 1}^d`.
fn neighbourhood(d: usize) -> Vec<Vec<i32>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|o| {
                (-1..=1).map(move |k| {
                    let mut n = o.clone();
                    n.push(k);
                    n
                })
            })
            .collect();
    }
    out.retain(|o| o.iter().any(|&k| k != 0));
    out
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Interior consistency defect at one resolution:
/// `max |G^φ_{ε,h}(φ)(x) - (ε φ + h F1(D²φ) + (1 - h) F2(D²φ) - f)(x)|`.
///
/// Both sides use the same pointwise cutoff of `φ`, so the ramp region
/// cancels and the defect measures the Hessian stencil alone.
pub fn consistency_defect(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    epsilon: f64,
    phi: &ExactSolution,
    policy: StencilPolicy,
) -> Result<f64> {
    let samples = phi.sample(grid);
    let s = RegularizedScheme::with_policy(problem, grid, epsilon, samples.clone(), policy)?;
    let disc = s.discretization();
    let mut defect = 0.0f64;
    for &p in grid.interior_indices() {
        let x = grid.point(p);
        let hess = phi.hessian_at(x);
        let exact = blended_operator(
            epsilon,
            samples[p],
            cutoff(samples[p], epsilon),
            problem.f1.eval(&hess)?,
            problem.f2.eval(&hess)?,
            disc.source()[p],
        );
        defect = defect.max((s.residual_at(samples.values(), p) - exact).abs());
    }
    Ok(defect)
}

/// Refinement study of [`consistency_defect`] over `n_list`. Passes when the
/// fitted slope is at least 1.9, or when every defect is at round-off level.
pub fn check_consistency(
    problem: &ProblemSpec,
    epsilon: f64,
    phi: &ExactSolution,
    n_list: &[usize],
    policy: StencilPolicy,
) -> Result<PropertyReport> {
    if n_list.is_empty() {
        return Err(Error::Config("empty resolution list".into()));
    }
    let mut hs = Vec::with_capacity(n_list.len());
    let mut defects = Vec::with_capacity(n_list.len());
    let mut stats = BTreeMap::new();
    for &n in n_list {
        let grid = build_grid(&problem.domain, n)?;
        let d = consistency_defect(problem, &grid, epsilon, phi, policy)?;
        stats.insert(format!("defect_n{n:04}"), d);
        hs.push(grid.spacing());
        defects.push(d);
    }
    let mut violations = Vec::new();
    if defects.iter().all(|&d| d <= EXACT_DEFECT) {
        stats.insert("exact".into(), 1.0);
    } else if defects.iter().any(|&d| d <= 0.0) || defects.len() < 2 {
        violations.push(Witness {
            point: None,
            coords: vec![],
            sample: 0,
            values: defects.clone(),
            detail: "slope undefined: defect vanishes on some levels only, or a single level".into(),
        });
    } else {
        let slope = loglog_slope(&hs, &defects);
        stats.insert("slope".into(), slope);
        if !(slope >= CONSISTENCY_SLOPE) {
            violations.push(Witness {
                point: None,
                coords: hs.clone(),
                sample: 0,
                values: defects.clone(),
                detail: format!("log-log slope {slope:.4} below {CONSISTENCY_SLOPE}"),
            });
        }
    }
    Ok(PropertyReport::new("consistency", n_list.len(), violations, stats))
}

/// Sampled Lipschitz factor of `S(u) = u - ρ G(u)`. Pairs share the
/// Dirichlet data, so boundary rows contribute nothing and `ρ = 0` gives
/// exactly 1. Passes when the factor is below 1.
pub fn check_contraction(s: &RegularizedScheme, rho: f64, trials: usize, seed: u64) -> PropertyReport {
    let grid = s.grid();
    let amp = sample_amplitude(s);
    let boundary = s.discretization().boundary();
    let random = |rng: &mut ChaCha8Rng| -> GridFunction {
        let values = (0..grid.len())
            .map(|p| if grid.is_interior(p) { rng.gen_range(-amp..=amp) } else { boundary[p] })
            .collect();
        GridFunction::new(grid, values).expect("finite samples")
    };

    let ratios: Vec<std::result::Result<f64, Witness>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let u = random(&mut rng);
            let w = random(&mut rng);
            let den = u.sup_distance(&w);
            match (euler_step(s, &u, rho), euler_step(s, &w, rho)) {
                (Ok(su), Ok(sw)) => Ok(su.sup_distance(&sw) / den),
                (Err(e), _) | (_, Err(e)) => Err(Witness {
                    point: None,
                    coords: vec![],
                    sample: t,
                    values: vec![den],
                    detail: format!("Euler step failed: {e}"),
                }),
            }
        })
        .collect();

    let mut factor = 0.0f64;
    let mut violations = Vec::new();
    for (t, r) in ratios.into_iter().enumerate() {
        match r {
            Ok(q) => {
                factor = factor.max(q);
                if !(q < 1.0) {
                    violations.push(Witness {
                        point: None,
                        coords: vec![],
                        sample: t,
                        values: vec![q],
                        detail: format!("|S(u) - S(w)| / |u - w| = {q:.6} at rho = {rho:e}"),
                    });
                }
            }
            Err(w) => {
                factor = f64::INFINITY;
                violations.push(w);
            }
        }
    }
    let mut stats = BTreeMap::new();
    stats.insert("factor".into(), factor);
    stats.insert("rho".into(), rho);
    PropertyReport::new("contraction", trials, violations, stats)
}

/// Pointwise membership `min w_lower - slack <= u <= max w_upper + slack`.
pub fn check_barriers(barriers: &BarrierPair, u: &GridFunction, slack: f64) -> PropertyReport {
    let (lo, hi) = barriers.band();
    let grid = u.grid();
    let violations: Vec<Witness> = u
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &x)| !(x >= lo - slack && x <= hi + slack))
        .map(|(p, &x)| Witness {
            point: Some(p),
            coords: grid.point(p).to_vec(),
            sample: 0,
            values: vec![x, lo, hi],
            detail: format!("u = {x} outside [{lo}, {hi}]"),
        })
        .collect();
    let mut stats = BTreeMap::new();
    stats.insert("band_lower".into(), lo);
    stats.insert("band_upper".into(), hi);
    stats.insert("c1".into(), barriers.c1);
    stats.insert("c2".into(), barriers.c2);
    stats.insert("lower_c1".into(), barriers.lower_c1);
    stats.insert("u_min".into(), u.min());
    stats.insert("u_max".into(), u.max());
    PropertyReport::new("barriers", u.values().len(), violations, stats)
}

/// Certifies the barrier construction itself, reporting a rejected `C2` as a
/// witness rather than an error.
pub fn certify_barriers(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    epsilon: f64,
    c2_override: Option<f64>,
) -> Result<(PropertyReport, Option<BarrierPair>)> {
    let bounds = BarrierBounds::from_operators(&problem.f1, &problem.f2)?;
    let mut stats = BTreeMap::new();
    stats.insert("upper_lambda".into(), bounds.upper_lambda);
    stats.insert("lower_lambda".into(), bounds.lower_lambda);
    match build_barriers_with(problem, grid, epsilon, bounds, c2_override) {
        Ok(pair) => {
            stats.insert("c1".into(), pair.c1);
            stats.insert("c2".into(), pair.c2);
            stats.insert("lower_c1".into(), pair.lower_c1);
            Ok((PropertyReport::new("barrier-certificate", grid.len(), vec![], stats), Some(pair)))
        }
        Err(Error::BarrierViolation { index, detail }) => {
            let w = Witness {
                point: Some(index),
                coords: grid.point(index).to_vec(),
                sample: 0,
                values: vec![],
                detail,
            };
            Ok((PropertyReport::new("barrier-certificate", grid.len(), vec![w], stats), None))
        }
        Err(e) => Err(e),
    }
}

/// Scheme on `problem` with `v` frozen at the exact solution (or zero).
pub fn reference_scheme(
    problem: &ProblemSpec,
    grid: &Arc<Grid>,
    epsilon: f64,
    policy: StencilPolicy,
) -> Result<RegularizedScheme> {
    let v = match &problem.exact {
        Some(e) => e.sample(grid),
        None => GridFunction::zeros(grid),
    };
    let disc = Discretization::new(problem, grid, policy)?;
    RegularizedScheme::from_discretization(disc, epsilon, v)
}
