//! TOML run configuration.
//!
//! ```toml
//! problem = "paper-1d"
//! n_per_axis = 64
//! seed = 7
//!
//! [solver]
//! epsilon = { rule = "proportional", factor = 1.2 }
//! rho = { rule = "proportional", factor = 0.05 }
//! n_max = 55
//! initial_guess = "zero"
//!
//! [verify]
//! checks = ["monotonicity", "contraction"]
//!
//! [refine]
//! n_list = [33, 65, 129]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DomainSpec;
use crate::operators::IsaacsOperator;
use crate::problems::{self, ProblemSpec, TermField};
use crate::solver::{EpsilonRule, InitialGuess, RhoRule, SolverConfig};
use crate::stencil::StencilPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `paper-1d`, `paper-2d` or `custom`.
    pub problem: String,
    pub n_per_axis: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub custom: Option<CustomProblem>,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub refine: RefineSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessKind {
    #[default]
    Zero,
    BoundaryExtension,
    Exact,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub epsilon: EpsilonRule,
    pub rho: RhoRule,
    pub n_max: usize,
    pub m_max: usize,
    pub inner_tol: Option<f64>,
    pub outer_tol: Option<f64>,
    pub initial_guess: GuessKind,
    /// Lattice values for `initial_guess = "custom"`, row-major.
    pub initial_values: Option<Vec<f64>>,
    pub policy: StencilPolicy,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            epsilon: d.epsilon,
            rho: d.rho,
            n_max: d.n_max,
            m_max: d.m_max,
            inner_tol: d.inner_tol,
            outer_tol: d.outer_tol,
            initial_guess: GuessKind::Zero,
            initial_values: None,
            policy: StencilPolicy::Monotone,
        }
    }
}

impl SolverSection {
    pub fn to_solver_config(&self) -> Result<SolverConfig> {
        let initial_guess = match (self.initial_guess, &self.initial_values) {
            (GuessKind::Zero, None) => InitialGuess::Zero,
            (GuessKind::BoundaryExtension, None) => InitialGuess::BoundaryExtension,
            (GuessKind::Exact, None) => InitialGuess::Exact,
            (GuessKind::Custom, Some(v)) => InitialGuess::Custom(v.clone()),
            (GuessKind::Custom, None) => {
                return Err(Error::Config("initial_guess = \"custom\" needs initial_values".into()))
            }
            (_, Some(_)) => {
                return Err(Error::Config("initial_values requires initial_guess = \"custom\"".into()))
            }
        };
        Ok(SolverConfig {
            epsilon: self.epsilon,
            rho: self.rho,
            n_max: self.n_max,
            m_max: self.m_max,
            inner_tol: self.inner_tol,
            outer_tol: self.outer_tol,
            initial_guess,
        })
    }
}

/// Operators as `[branch][matrix][row-major entries]` plus a separable exact field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub f1: Vec<Vec<Vec<f64>>>,
    pub f2: Vec<Vec<Vec<f64>>>,
    pub exact: TermField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Monotonicity,
    Consistency,
    Contraction,
    Barriers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub checks: Vec<Check>,
    pub trials: usize,
    pub contraction_trials: usize,
    /// Resolutions of the consistency study.
    pub consistency_n: Vec<usize>,
    /// Test field of the consistency study; defaults to `sin(πx_1) Π cos(πx_k)`.
    pub phi: Option<TermField>,
    /// Overrides `C2` in the barrier certificate.
    pub c2: Option<f64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            checks: vec![Check::Monotonicity, Check::Consistency, Check::Contraction, Check::Barriers],
            trials: 10_000,
            contraction_trials: 200,
            consistency_n: vec![17, 33, 65, 129, 257],
            phi: None,
            c2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    pub n_list: Vec<usize>,
    /// Replaces the solver's `ε` rule for the study.
    pub epsilon: Option<EpsilonRule>,
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection {
            n_list: vec![33, 65, 129],
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub snapshots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            snapshots: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_axis < 3 {
            return Err(Error::NoInteriorPoints { n: self.n_per_axis });
        }
        if self.problem == "custom" && self.custom.is_none() {
            return Err(Error::Config("problem = \"custom\" needs a [custom] table".into()));
        }
        if self.problem != "custom" && self.custom.is_some() {
            return Err(Error::Config("[custom] table given for a built-in problem".into()));
        }
        if self.refine.n_list.iter().any(|&n| n < 3) {
            return Err(Error::Config("refine.n_list entries must be at least 3".into()));
        }
        self.solver.to_solver_config()?;
        Ok(())
    }

    pub fn build_problem(&self) -> Result<ProblemSpec> {
        match (&*self.problem, &self.custom) {
            ("custom", Some(c)) => {
                let domain = DomainSpec::new(c.lower.clone(), c.upper.clone())?;
                let d = domain.dim();
                let f1 = IsaacsOperator::from_row_major(d, &c.f1)?;
                let f2 = IsaacsOperator::from_row_major(d, &c.f2)?;
                problems::custom(domain, f1, f2, c.exact.clone())
            }
            (name, _) => problems::by_name(name),
        }
    }
}
