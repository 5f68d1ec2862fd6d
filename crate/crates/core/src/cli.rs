//! Command-line front end: `solve`, `verify` and `refine`.
//!
//! Every command reads one TOML config and writes CSV/JSON artifacts into the
//! output directory. Floats are written with 17 significant digits so that
//! reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{Check, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{build_grid, GridFunction};
use crate::problems::{sin_1d, sin_cos_2d, ExactSolution, ProblemSpec, Term, TermField, Factor};
use crate::solver::{outer_iterate_with, RunOptions, RunReport, BARRIER_SLACK};
use crate::verify::{
    certify_barriers, check_barriers, check_consistency, check_contraction, check_monotonicity,
    reference_scheme, PropertyReport, Witness,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_BARRIER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "freetrans", version, about = "Monotone solver for free transmission problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the two-level iteration and write solution, history and report.
    Solve(CommonArgs),
    /// Run the property checkers and write a JSON report.
    Verify(CommonArgs),
    /// Solve on each resolution of `refine.n_list` and tabulate errors.
    Refine(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write per-iteration solution snapshots.
    #[arg(long)]
    pub snapshots: bool,
}

/// Process exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } | Error::NonFinite { .. } => EXIT_DIVERGENCE,
        Error::BarrierViolation { .. } | Error::StabilityFailure { .. } => EXIT_BARRIER,
        _ => EXIT_CONFIG,
    }
}

fn status_label(e: &Error) -> &'static str {
    match exit_code(e) {
        EXIT_DIVERGENCE => "divergence",
        EXIT_BARRIER => "barrier-violation",
        _ => "config-error",
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn execute(cli: Cli) -> i32 {
    let (args, cmd): (&CommonArgs, fn(&RunConfig, &Path) -> Result<i32>) = match &cli.command {
        Command::Solve(a) => (a, cmd_solve),
        Command::Verify(a) => (a, cmd_verify),
        Command::Refine(a) => (a, cmd_refine),
    };
    let cfg = match load(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let out = cfg.output.dir.clone();
    match fs::create_dir_all(&out).map_err(Error::from).and_then(|_| cmd(&cfg, &out)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.output.snapshots |= args.snapshots;
    Ok(cfg)
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn coord_header(d: usize) -> Vec<String> {
    const NAMES: [&str; 3] = ["x", "y", "z"];
    (0..d)
        .map(|k| NAMES.get(k).map_or(format!("x{k}"), |s| s.to_string()))
        .collect()
}

/// `coords..., u[, exact]` per lattice point.
pub fn solution_csv(u: &GridFunction, exact: Option<&ExactSolution>) -> String {
    let grid = u.grid();
    let mut header = coord_header(grid.dim());
    header.push("u".into());
    if exact.is_some() {
        header.push("exact".into());
    }
    let mut s = header.join(",") + "\n";
    for (x, v) in grid.points().zip(u.values()) {
        let mut row: Vec<String> = x.iter().map(|&c| fmt_f(c)).collect();
        row.push(fmt_f(*v));
        if let Some(e) = exact {
            row.push(fmt_f(e.eval(x)));
        }
        s += &row.join(",");
        s.push('\n');
    }
    s
}

pub fn history_csv(report: &RunReport) -> String {
    let mut s = String::from("n,residual,error,fixed_point_gap,inner_iterations,inner_residual\n");
    for r in &report.history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.n,
            fmt_f(r.residual),
            fmt_opt(r.error),
            fmt_f(r.fixed_point_gap),
            r.inner_iterations,
            fmt_f(r.inner_residual)
        );
    }
    s
}

/// Pointwise `|u - exact|`.
pub fn error_csv(u: &GridFunction, exact: &ExactSolution) -> String {
    let grid = u.grid();
    let mut header = coord_header(grid.dim());
    header.push("abs_error".into());
    let mut s = header.join(",") + "\n";
    for (x, v) in grid.points().zip(u.values()) {
        let mut row: Vec<String> = x.iter().map(|&c| fmt_f(c)).collect();
        row.push(fmt_f((v - exact.eval(x)).abs()));
        s += &row.join(",");
        s.push('\n');
    }
    s
}

/// Long format: `n, coords..., u`.
pub fn snapshots_csv(snapshots: &[GridFunction]) -> String {
    let Some(first) = snapshots.first() else {
        return String::new();
    };
    let mut header = vec!["n".to_string()];
    header.extend(coord_header(first.grid().dim()));
    header.push("u".into());
    let mut s = header.join(",") + "\n";
    for (k, u) in snapshots.iter().enumerate() {
        for (x, v) in u.grid().points().zip(u.values()) {
            let mut row = vec![(k + 1).to_string()];
            row.extend(x.iter().map(|&c| fmt_f(c)));
            row.push(fmt_f(*v));
            s += &row.join(",");
            s.push('\n');
        }
    }
    s
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn failure_json(command: &str, e: &Error) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": status_label(e),
        "exit_code": exit_code(e),
        "message": e.to_string(),
    })
}

fn run_json(report: &RunReport) -> Value {
    let inner_tol = report.parameters.inner_tol.unwrap_or(0.0);
    let (lo, hi) = report.barriers.band();
    json!({
        "parameters": report.parameters,
        "history": report.history,
        "initial_error": report.initial_error,
        "final_error": report.final_error(),
        "final_residual": report.final_residual(),
        "fixed_point_gap": report.fixed_point_gap,
        "blend_lipschitz": report.blend_lipschitz,
        "self_consistency_bound": inner_tol.max(report.fixed_point_gap * report.blend_lipschitz),
        "total_inner_iterations": report.total_inner_iterations,
        "barriers": {
            "c1": report.barriers.c1,
            "c2": report.barriers.c2,
            "lower_c1": report.barriers.lower_c1,
            "band": [lo, hi],
        },
        "wall_time_secs": report.wall_time_secs,
    })
}

fn solve(cfg: &RunConfig, problem: &ProblemSpec, n: usize, keep_snapshots: bool) -> Result<RunReport> {
    let grid = build_grid(&problem.domain, n)?;
    let options = RunOptions {
        keep_snapshots,
        policy: cfg.solver.policy,
    };
    outer_iterate_with(problem, &grid, &cfg.solver.to_solver_config()?, options)
}

/// Writes `solution.csv`, `history.csv`, `report.json` and, when an exact
/// solution exists, `error.csv`.
pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let problem = cfg.build_problem()?;
    let report = match solve(cfg, &problem, cfg.n_per_axis, cfg.output.snapshots) {
        Ok(r) => r,
        Err(e) => {
            write_json(&out.join("report.json"), &failure_json("solve", &e))?;
            return Err(e);
        }
    };
    let exact = problem.exact.as_ref();
    fs::write(out.join("solution.csv"), solution_csv(&report.final_solution, exact))?;
    fs::write(out.join("history.csv"), history_csv(&report))?;
    if let Some(e) = exact {
        fs::write(out.join("error.csv"), error_csv(&report.final_solution, e))?;
    }
    if cfg.output.snapshots {
        fs::write(out.join("snapshots.csv"), snapshots_csv(&report.snapshots))?;
    }
    let mut body = run_json(&report);
    body["schema_version"] = json!(SCHEMA_VERSION);
    body["command"] = json!("solve");
    body["status"] = json!("ok");
    write_json(&out.join("report.json"), &body)?;
    log::info!(
        "solve finished: residual {:.3e}, gap {:.3e}, error {:?}",
        report.final_residual(),
        report.fixed_point_gap,
        report.final_error()
    );
    Ok(EXIT_OK)
}

/// `sin(πx_1) Π_{k>1} cos(πx_k)`.
fn default_phi(d: usize) -> ExactSolution {
    match d {
        1 => sin_1d(),
        2 => sin_cos_2d(),
        _ => {
            let mut factors = vec![Factor::Sin { freq: 1.0 }];
            factors.extend((1..d).map(|_| Factor::Cos { freq: 1.0 }));
            TermField {
                terms: vec![Term { coeff: 1.0, factors }],
            }
            .into_exact()
        }
    }
}

/// Runs the configured checkers; the report file is always written.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let result = run_checks(cfg);
    let reports = match result {
        Ok(r) => r,
        Err(e) => {
            write_json(&out.join("report.json"), &failure_json("verify", &e))?;
            return Err(e);
        }
    };
    let passed = reports.iter().all(|r| r.passed);
    for r in &reports {
        log::info!("{}: {} ({} samples)", r.property, if r.passed { "pass" } else { "FAIL" }, r.samples);
    }
    write_json(
        &out.join("report.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "verify",
            "status": if passed { "pass" } else { "fail" },
            "seed": cfg.seed,
            "passed": passed,
            "reports": reports,
        }),
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

pub fn run_checks(cfg: &RunConfig) -> Result<Vec<PropertyReport>> {
    let problem = cfg.build_problem()?;
    let grid = build_grid(&problem.domain, cfg.n_per_axis)?;
    let solver = cfg.solver.to_solver_config()?;
    let h = grid.spacing();
    solver.validate(h)?;
    let eps = solver.epsilon.resolve(h);
    let policy = cfg.solver.policy;
    let v = &cfg.verify;

    let mut checks = v.checks.clone();
    checks.sort();
    checks.dedup();
    let mut reports = Vec::with_capacity(checks.len());
    for check in checks {
        match check {
            Check::Monotonicity => {
                let s = reference_scheme(&problem, &grid, eps, policy)?;
                reports.push(check_monotonicity(&s, v.trials, cfg.seed));
            }
            Check::Consistency => {
                let phi = match &v.phi {
                    Some(f) => f.clone().into_exact(),
                    None => default_phi(grid.dim()),
                };
                reports.push(check_consistency(&problem, eps, &phi, &v.consistency_n, policy)?);
            }
            Check::Contraction => {
                let s = reference_scheme(&problem, &grid, eps, policy)?;
                reports.push(check_contraction(&s, solver.rho.resolve(h), v.contraction_trials, cfg.seed));
            }
            Check::Barriers => {
                let (cert, pair) = certify_barriers(&problem, &grid, eps, v.c2)?;
                reports.push(cert);
                if let Some(pair) = pair {
                    reports.push(barrier_membership(cfg, &problem, &pair)?);
                }
            }
        }
    }
    Ok(reports)
}

fn barrier_membership(
    cfg: &RunConfig,
    problem: &ProblemSpec,
    pair: &crate::scheme::BarrierPair,
) -> Result<PropertyReport> {
    match solve(cfg, problem, cfg.n_per_axis, false) {
        Ok(run) => Ok(check_barriers(pair, &run.final_solution, BARRIER_SLACK)),
        Err(e @ (Error::StabilityFailure { .. } | Error::Divergence { .. } | Error::NonFinite { .. })) => {
            let grid = pair.upper.grid();
            Ok(PropertyReport {
                property: "barriers".into(),
                samples: grid.len(),
                passed: false,
                violations: vec![Witness {
                    point: None,
                    coords: vec![],
                    sample: 0,
                    values: vec![],
                    detail: e.to_string(),
                }],
                statistics: Default::default(),
            })
        }
        Err(e) => Err(e),
    }
}

/// One row of the refinement table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RefineRow {
    pub n: usize,
    pub h: f64,
    pub epsilon: f64,
    pub error: f64,
    pub residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// `log2(e(h) / e(h/2))` against the previous row.
    pub order: Option<f64>,
}

pub fn refine_rows(cfg: &RunConfig) -> Result<Vec<RefineRow>> {
    let problem = cfg.build_problem()?;
    let exact = problem
        .exact
        .clone()
        .ok_or_else(|| Error::Config("refinement needs an exact solution".into()))?;
    let mut run_cfg = cfg.clone();
    if let Some(rule) = cfg.refine.epsilon {
        run_cfg.solver.epsilon = rule;
    }
    let mut rows: Vec<RefineRow> = Vec::with_capacity(cfg.refine.n_list.len());
    for &n in &cfg.refine.n_list {
        let report = solve(&run_cfg, &problem, n, false)?;
        let error = crate::problems::error_norm(&report.final_solution, &exact);
        let order = rows.last().map(|prev| (prev.error / error).log2() * (prev.h / report.parameters.h).log2().recip());
        rows.push(RefineRow {
            n,
            h: report.parameters.h,
            epsilon: report.parameters.epsilon,
            error,
            residual: report.final_residual(),
            outer_iterations: report.history.len(),
            inner_iterations: report.total_inner_iterations,
            order,
        });
    }
    Ok(rows)
}

pub fn refine_csv(rows: &[RefineRow]) -> String {
    let mut s = String::from("n,h,epsilon,error,residual,outer_iterations,inner_iterations,order\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.n,
            fmt_f(r.h),
            fmt_f(r.epsilon),
            fmt_f(r.error),
            fmt_f(r.residual),
            r.outer_iterations,
            r.inner_iterations,
            fmt_opt(r.order)
        );
    }
    s
}

/// Writes `refine.csv` and `report.json`.
pub fn cmd_refine(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let rows = match refine_rows(cfg) {
        Ok(r) => r,
        Err(e) => {
            write_json(&out.join("report.json"), &failure_json("refine", &e))?;
            return Err(e);
        }
    };
    fs::write(out.join("refine.csv"), refine_csv(&rows))?;
    write_json(
        &out.join("report.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "refine",
            "status": "ok",
            "rows": rows,
        }),
    )?;
    Ok(EXIT_OK)
}
