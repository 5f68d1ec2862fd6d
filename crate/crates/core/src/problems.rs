//! Manufactured-solution problems.
//!
//! A problem couples a box domain with the two operators, a source, Dirichlet
//! data and (optionally) an exact solution carrying its analytic Hessian. The
//! source of a manufactured problem is obtained by applying `F1` where the
//! exact solution is positive and `F2` where it is negative.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainSpec, Grid, GridFunction};
use crate::operators::IsaacsOperator;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Exact solution with its analytic Hessian.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: ScalarFn,
    pub hessian: HessianFn,
}

impl ExactSolution {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        hessian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        ExactSolution {
            value: Arc::new(value),
            hessian: Arc::new(hessian),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn hessian_at(&self, x: &[f64]) -> DMatrix<f64> {
        (self.hessian)(x)
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> GridFunction {
        GridFunction::from_fn(grid, |x| self.eval(x))
    }
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExactSolution { .. }")
    }
}

/// Free transmission problem on a box.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: DomainSpec,
    pub f1: IsaacsOperator,
    pub f2: IsaacsOperator,
    pub source: ScalarFn,
    pub boundary: ScalarFn,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("f1", &self.f1)
            .field("f2", &self.f2)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    /// Checks operator structure and dimensions.
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let d = self.domain.dim();
        for (label, op) in [("F1", &self.f1), ("F2", &self.f2)] {
            if op.dim() != d {
                return Err(Error::Shape {
                    expected: format!("{label} of dimension {d}"),
                    found: format!("{}", op.dim()),
                });
            }
            let report = op.validate();
            if !report.passed {
                return Err(Error::InvalidOperator(format!("{label}: {}", report.summary())));
            }
        }
        Ok(())
    }

    /// Manufactured problem: source synthesised from `exact`, Dirichlet data
    /// equal to its trace.
    pub fn manufactured(
        name: impl Into<String>,
        domain: DomainSpec,
        f1: IsaacsOperator,
        f2: IsaacsOperator,
        exact: ExactSolution,
    ) -> Result<Self> {
        let source = manufactured_source(&exact, &f1, &f2)?;
        let value = Arc::clone(&exact.value);
        let problem = ProblemSpec {
            name: name.into(),
            domain,
            f1,
            f2,
            source,
            boundary: value,
            exact: Some(exact),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn source_at(&self, x: &[f64]) -> f64 {
        (self.source)(x)
    }

    pub fn boundary_at(&self, x: &[f64]) -> f64 {
        (self.boundary)(x)
    }
}

/// Pointwise rule `F1(D²u)` on `{u > 0}`, `F2(D²u)` on `{u < 0}`, branch
/// average on `{u = 0}`, using the analytic Hessian.
pub fn manufactured_source(
    exact: &ExactSolution,
    f1: &IsaacsOperator,
    f2: &IsaacsOperator,
) -> Result<ScalarFn> {
    if f1.dim() != f2.dim() {
        return Err(Error::Shape {
            expected: format!("F2 of dimension {}", f1.dim()),
            found: format!("{}", f2.dim()),
        });
    }
    let (exact, f1, f2) = (exact.clone(), f1.clone(), f2.clone());
    Ok(Arc::new(move |x: &[f64]| {
        let u = exact.eval(x);
        let hess = exact.hessian_at(x);
        let on_f1 = || f1.sup_inf(|a| crate::operators::trace_product(a, &hess));
        let on_f2 = || f2.sup_inf(|a| crate::operators::trace_product(a, &hess));
        if u > 0.0 {
            on_f1()
        } else if u < 0.0 {
            on_f2()
        } else {
            0.5 * (on_f1() + on_f2())
        }
    }))
}

/// Samples the manufactured source on `grid`.
pub fn synthesize_source(
    exact: &ExactSolution,
    f1: &IsaacsOperator,
    f2: &IsaacsOperator,
    grid: &Arc<Grid>,
) -> Result<GridFunction> {
    if f1.dim() != grid.dim() {
        return Err(Error::Shape {
            expected: format!("operators of dimension {}", grid.dim()),
            found: format!("{}", f1.dim()),
        });
    }
    let source = manufactured_source(exact, f1, f2)?;
    GridFunction::new(grid, grid.points().map(|x| source(x)).collect())
}

/// `max |u - exact|` over all lattice points.
pub fn error_norm(u: &GridFunction, exact: &ExactSolution) -> f64 {
    u.grid()
        .points()
        .zip(u.values())
        .fold(0.0, |m, (x, v)| m.max((v - exact.eval(x)).abs()))
}

/// `F1(M) = max(-3M, -2M)`, `F2(M) = max(-M, -2M)` in dimension `d`, acting
/// on the trace.
pub fn paper_operators(d: usize) -> (IsaacsOperator, IsaacsOperator) {
    let f1 = IsaacsOperator::identity_multiples(d, &[&[-3.0], &[-2.0]]).expect("static operator");
    let f2 = IsaacsOperator::identity_multiples(d, &[&[-1.0], &[-2.0]]).expect("static operator");
    (f1, f2)
}

/// One-dimensional example on `[-1, 1]` with exact solution `x|x|/2`.
pub fn example_1d() -> ProblemSpec {
    let (f1, f2) = paper_operators(1);
    // one-sided Hessians are -1 and +1; the zero at x = 0 makes the source take the branch average
    let exact = ExactSolution::new(
        |x| 0.5 * x[0] * x[0].abs(),
        |x| {
            let s = if x[0] > 0.0 {
                1.0
            } else if x[0] < 0.0 {
                -1.0
            } else {
                0.0
            };
            DMatrix::from_element(1, 1, s)
        },
    );
    let domain = DomainSpec::cube(1, -1.0, 1.0).expect("static domain");
    ProblemSpec::manufactured("paper-1d", domain, f1, f2, exact).expect("static problem")
}

/// Two-dimensional example on `[-1, 1]²` with exact solution `sin(πx) cos(πy)`.
pub fn example_2d() -> ProblemSpec {
    let (f1, f2) = paper_operators(2);
    let domain = DomainSpec::cube(2, -1.0, 1.0).expect("static domain");
    ProblemSpec::manufactured("paper-2d", domain, f1, f2, sin_cos_2d()).expect("static problem")
}

/// `sin(πx) cos(πy)` with its analytic Hessian.
pub fn sin_cos_2d() -> ExactSolution {
    ExactSolution::new(
        |x| (PI * x[0]).sin() * (PI * x[1]).cos(),
        |x| {
            let (sx, cx) = (PI * x[0]).sin_cos();
            let (sy, cy) = (PI * x[1]).sin_cos();
            let p2 = PI * PI;
            let off = -p2 * cx * sy;
            DMatrix::from_row_slice(2, 2, &[-p2 * sx * cy, off, off, -p2 * sx * cy])
        },
    )
}

/// `sin(πx)` in one dimension.
pub fn sin_1d() -> ExactSolution {
    ExactSolution::new(
        |x| (PI * x[0]).sin(),
        |x| DMatrix::from_element(1, 1, -PI * PI * (PI * x[0]).sin()),
    )
}

/// `½ xᵀQx` for symmetric `Q`.
pub fn quadratic(q: DMatrix<f64>) -> ExactSolution {
    let qv = q.clone();
    ExactSolution::new(
        move |x| {
            let d = x.len();
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += qv[(i, j)] * x[i] * x[j];
                }
            }
            0.5 * acc
        },
        move |_| q.clone(),
    )
}

/// Looks up a built-in problem by registry name.
pub fn by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "paper-1d" => Ok(example_1d()),
        "paper-2d" => Ok(example_2d()),
        other => Err(Error::Config(format!(
            "unknown problem '{other}' (expected paper-1d, paper-2d or custom)"
        ))),
    }
}

/// One factor of a separable term, acting on a single coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Factor {
    /// `x^power`
    Pow { power: i32 },
    /// `sin(freq * π * x)`
    Sin { freq: f64 },
    /// `cos(freq * π * x)`
    Cos { freq: f64 },
}

impl Factor {
    /// Value, first and second derivative at `x`.
    fn jet(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Factor::Pow { power } => {
                let p = power as f64;
                let d1 = if power == 0 { 0.0 } else { p * x.powi(power - 1) };
                let d2 = if power <= 1 { 0.0 } else { p * (p - 1.0) * x.powi(power - 2) };
                (x.powi(power), d1, d2)
            }
            Factor::Sin { freq } => {
                let k = freq * PI;
                let (s, c) = (k * x).sin_cos();
                (s, k * c, -k * k * s)
            }
            Factor::Cos { freq } => {
                let k = freq * PI;
                let (s, c) = (k * x).sin_cos();
                (c, -k * s, -k * k * c)
            }
        }
    }
}

/// `coeff * Π_k factors[k](x_k)`; missing factors are constant 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    #[serde(default)]
    pub factors: Vec<Factor>,
}

/// Sum of separable polynomial/trigonometric terms, described in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermField {
    pub terms: Vec<Term>,
}

impl TermField {
    fn jets(term: &Term, x: &[f64]) -> Vec<(f64, f64, f64)> {
        (0..x.len())
            .map(|k| term.factors.get(k).map_or((1.0, 0.0, 0.0), |f| f.jet(x[k])))
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * Self::jets(t, x).iter().map(|j| j.0).product::<f64>())
            .sum()
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut m = DMatrix::zeros(d, d);
        for t in &self.terms {
            let jets = Self::jets(t, x);
            for i in 0..d {
                for j in 0..d {
                    let mut p = t.coeff;
                    for (k, jet) in jets.iter().enumerate() {
                        p *= match (k == i, k == j) {
                            (true, true) => jet.2,
                            (true, false) | (false, true) => jet.1,
                            (false, false) => jet.0,
                        };
                    }
                    m[(i, j)] += p;
                }
            }
        }
        m
    }

    pub fn into_exact(self) -> ExactSolution {
        let field = Arc::new(self);
        let f2 = Arc::clone(&field);
        ExactSolution::new(move |x| field.value(x), move |x| f2.hessian(x))
    }
}

/// A manufactured problem assembled from config-level descriptions.
pub fn custom(
    domain: DomainSpec,
    f1: IsaacsOperator,
    f2: IsaacsOperator,
    exact: TermField,
) -> Result<ProblemSpec> {
    if exact.terms.iter().any(|t| t.factors.len() > domain.dim()) {
        return Err(Error::Config(format!(
            "exact-field term has more factors than the domain's {} axes",
            domain.dim()
        )));
    }
    ProblemSpec::manufactured("custom", domain, f1, f2, exact.into_exact())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn example_1d_values() {
        let p = example_1d();
        let e = p.exact.as_ref().unwrap();
        assert_eq!(e.eval(&[0.5]), 0.125);
        assert_eq!(e.eval(&[-0.5]), -0.125);
        assert_eq!(p.boundary_at(&[-1.0]), -0.5);
        assert_eq!(p.boundary_at(&[1.0]), 0.5);
        assert_eq!(p.source_at(&[0.3]), -2.0);
        assert_eq!(p.source_at(&[-0.3]), 2.0);
        assert_eq!(p.source_at(&[0.0]), 0.0);
    }

    #[test]
    fn example_1d_source_is_piecewise_constant() {
        let p = example_1d();
        let g = build_grid(&p.domain, 65).unwrap();
        let f = synthesize_source(p.exact.as_ref().unwrap(), &p.f1, &p.f2, &g).unwrap();
        for (x, v) in g.points().zip(f.values()) {
            let want = if x[0] < 0.0 { 2.0 } else if x[0] > 0.0 { -2.0 } else { 0.0 };
            assert_eq!(*v, want);
        }
        let again = synthesize_source(p.exact.as_ref().unwrap(), &p.f1, &p.f2, &g).unwrap();
        assert_eq!(f.values(), again.values());
    }

    #[test]
    fn zero_exact_gives_zero_source() {
        let (f1, f2) = paper_operators(2);
        let zero = ExactSolution::new(|_| 0.0, |_| DMatrix::zeros(2, 2));
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0).unwrap(), 5).unwrap();
        let f = synthesize_source(&zero, &f1, &f2, &g).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn example_2d_values() {
        let p = example_2d();
        let e = p.exact.as_ref().unwrap();
        assert!((e.eval(&[0.5, 0.0]) - 1.0).abs() < 1e-15);
        for x in [-0.7, -0.2, 0.3, 0.9] {
            assert!((p.boundary_at(&[x, 1.0]) + (PI * x).sin()).abs() < 1e-14);
        }
        assert!(e.eval(&[0.3, 0.1]) > 0.0 && e.eval(&[-0.3, 0.1]) < 0.0);
        // D²u(0.5, 0) = diag(-π², -π²), u > 0 -> F1 = max(6π², 4π²)
        let f = p.source_at(&[0.5, 0.0]);
        assert!((f - 6.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn error_norm_examples() {
        let p = example_1d();
        let e = p.exact.as_ref().unwrap();
        let g = build_grid(&p.domain, 33).unwrap();
        let u = e.sample(&g);
        assert_eq!(error_norm(&u, e), 0.0);
        let mut shifted = u.clone();
        shifted.values_mut().iter_mut().for_each(|v| *v += 0.25);
        assert!((error_norm(&shifted, e) - 0.25).abs() < 1e-15);
        assert_eq!(error_norm(&GridFunction::zeros(&g), e), 0.5);
    }

    #[test]
    fn term_field_hessian_matches_finite_differences() {
        let field = TermField {
            terms: vec![
                Term {
                    coeff: 1.5,
                    factors: vec![Factor::Sin { freq: 1.0 }, Factor::Cos { freq: 0.5 }],
                },
                Term {
                    coeff: -0.25,
                    factors: vec![Factor::Pow { power: 3 }, Factor::Pow { power: 2 }],
                },
            ],
        };
        let x = [0.3, -0.4];
        let h = 1e-4;
        let hess = field.hessian(&x);
        for i in 0..2 {
            for j in 0..2 {
                let at = |si: f64, sj: f64| {
                    let mut y = x;
                    y[i] += si * h;
                    y[j] += sj * h;
                    field.value(&y)
                };
                let fd = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
                assert!((fd - hess[(i, j)]).abs() < 1e-5, "({i},{j}) {fd} vs {}", hess[(i, j)]);
            }
        }
    }

    #[test]
    fn registry() {
        assert_eq!(by_name("paper-1d").unwrap().name, "paper-1d");
        assert_eq!(by_name("paper-2d").unwrap().domain.dim(), 2);
        assert!(by_name("nope").is_err());
    }

    #[test]
    fn custom_rejects_invalid_operator() {
        let d = DomainSpec::cube(2, -1.0, 1.0).unwrap();
        let bad = IsaacsOperator::from_row_major(2, &[vec![vec![-1.0, 2.0, 2.0, -1.0]]]).unwrap();
        let (f1, _) = paper_operators(2);
        let field = TermField { terms: vec![] };
        assert!(matches!(custom(d, f1, bad, field), Err(Error::InvalidOperator(_))));
    }
}
