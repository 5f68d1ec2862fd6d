//! Isaacs operators `F(M) = max_a min_b Tr(A_ab M)` over finite matrix families.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Eigenvalues above this count as positive when checking semi-definiteness.
pub const NSD_TOLERANCE: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Uniformly elliptic Isaacs operator.
///
/// `branches[a][b]` is the matrix `A_ab`; the operator takes the max over
/// branches of the min over each branch's list.
#[derive(Debug, Clone, PartialEq)]
pub struct IsaacsOperator {
    dim: usize,
    branches: Vec<Vec<DMatrix<f64>>>,
}

impl IsaacsOperator {
    pub fn new(branches: Vec<Vec<DMatrix<f64>>>) -> Result<Self> {
        let first = branches
            .first()
            .and_then(|b| b.first())
            .ok_or_else(|| Error::InvalidOperator("operator needs at least one matrix".into()))?;
        let dim = first.nrows();
        if dim == 0 {
            return Err(Error::InvalidOperator("zero-dimensional matrix".into()));
        }
        for (a, branch) in branches.iter().enumerate() {
            if branch.is_empty() {
                return Err(Error::InvalidOperator(format!("branch {a} is empty")));
            }
            for m in branch {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::Shape {
                        expected: format!("{dim}x{dim}"),
                        found: format!("{}x{}", m.nrows(), m.ncols()),
                    });
                }
            }
        }
        Ok(IsaacsOperator { dim, branches })
    }

    /// Build from row-major entries: `rows[a][b]` holds the `dim*dim` entries of `A_ab`.
    pub fn from_row_major(dim: usize, rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let branches = rows
            .iter()
            .map(|branch| {
                branch
                    .iter()
                    .map(|entries| {
                        if entries.len() != dim * dim {
                            return Err(Error::Shape {
                                expected: format!("{} entries", dim * dim),
                                found: format!("{}", entries.len()),
                            });
                        }
                        Ok(DMatrix::from_row_slice(dim, dim, entries))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(branches)
    }

    /// `max_a min_b Tr(c_ab * I * M)` for scalar multipliers `c_ab`.
    pub fn identity_multiples(dim: usize, coeffs: &[&[f64]]) -> Result<Self> {
        let branches = coeffs
            .iter()
            .map(|branch| {
                branch
                    .iter()
                    .map(|&c| DMatrix::identity(dim, dim) * c)
                    .collect()
            })
            .collect();
        Self::new(branches)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branches(&self) -> &[Vec<DMatrix<f64>>] {
        &self.branches
    }

    pub fn matrices(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.branches.iter().flatten()
    }

    /// Branch sizes, in order.
    pub fn shape(&self) -> Vec<usize> {
        self.branches.iter().map(Vec::len).collect()
    }

    /// Sup-inf of an arbitrary per-matrix value, visiting matrices in
    /// row-major `(a, b)` order.
    pub fn sup_inf(&self, mut value: impl FnMut(&DMatrix<f64>) -> f64) -> f64 {
        self.branches
            .iter()
            .map(|branch| {
                branch
                    .iter()
                    .map(&mut value)
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eval(&self, m: &DMatrix<f64>) -> Result<f64> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::Shape {
                expected: format!("{0}x{0}", self.dim),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        Ok(self.sup_inf(|a| trace_product(a, m)))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        for (alpha, branch) in self.branches.iter().enumerate() {
            for (beta, a) in branch.iter().enumerate() {
                checks.push(MatrixCheck::run(alpha, beta, a));
            }
        }
        let passed = checks.iter().all(MatrixCheck::passed);
        ValidationReport { checks, passed }
    }

    /// Conservative `(lambda, Lambda)` certificate from the eigenvalue
    /// magnitudes of the family.
    pub fn ellipticity_bounds(&self) -> Result<EllipticityBounds> {
        let report = self.validate();
        if !report.passed {
            return Err(Error::InvalidOperator(report.summary()));
        }
        let mut lambda = f64::INFINITY;
        let mut big_lambda: f64 = 0.0;
        for check in &report.checks {
            for e in &check.eigenvalues {
                lambda = lambda.min(e.abs());
                big_lambda = big_lambda.max(e.abs());
            }
        }
        if lambda <= NSD_TOLERANCE {
            return Err(Error::DegenerateEllipticity(format!(
                "smallest eigenvalue magnitude {lambda:e} is zero"
            )));
        }
        Ok(EllipticityBounds {
            lambda,
            big_lambda,
        })
    }
}

/// `Tr(A M)` for square matrices of equal size.
pub fn trace_product(a: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    a.iter().zip(m.transpose().iter()).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticityBounds {
    pub lambda: f64,
    pub big_lambda: f64,
}

impl EllipticityBounds {
    pub fn new(lambda: f64, big_lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= big_lambda) {
            return Err(Error::DegenerateEllipticity(format!(
                "need 0 < lambda <= Lambda, got ({lambda}, {big_lambda})"
            )));
        }
        Ok(EllipticityBounds { lambda, big_lambda })
    }

    /// Combined bounds for a pair of operators.
    pub fn union(self, other: EllipticityBounds) -> Self {
        EllipticityBounds {
            lambda: self.lambda.min(other.lambda),
            big_lambda: self.big_lambda.max(other.big_lambda),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixCheck {
    pub alpha: usize,
    pub beta: usize,
    pub symmetric: bool,
    pub negative_semidefinite: bool,
    pub diagonally_dominant: bool,
    pub eigenvalues: Vec<f64>,
}

impl MatrixCheck {
    fn run(alpha: usize, beta: usize, a: &DMatrix<f64>) -> Self {
        let d = a.nrows();
        let symmetric = (0..d)
            .all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= SYMMETRY_TOLERANCE));
        // symmetrise before the eigensolve so a slightly asymmetric input still reports spectra
        let sym = (a + a.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|x, y| x.total_cmp(y));
        let negative_semidefinite = eigenvalues.iter().all(|&e| e <= NSD_TOLERANCE);
        let diagonally_dominant = (0..d).all(|j| {
            let off: f64 = (0..d).filter(|&k| k != j).map(|k| a[(j, k)].abs()).sum();
            a[(j, j)].abs() + SYMMETRY_TOLERANCE >= off
        });
        MatrixCheck {
            alpha,
            beta,
            symmetric,
            negative_semidefinite,
            diagonally_dominant,
            eigenvalues,
        }
    }

    pub fn passed(&self) -> bool {
        self.symmetric && self.negative_semidefinite && self.diagonally_dominant
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<MatrixCheck>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        let failures: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| {
                let mut why = Vec::new();
                if !c.symmetric {
                    why.push("not symmetric");
                }
                if !c.negative_semidefinite {
                    why.push("not negative semi-definite");
                }
                if !c.diagonally_dominant {
                    why.push("not diagonally dominant");
                }
                format!("A[{}][{}]: {}", c.alpha, c.beta, why.join(", "))
            })
            .collect();
        if failures.is_empty() {
            "all matrices pass".into()
        } else {
            failures.join("; ")
        }
    }
}
