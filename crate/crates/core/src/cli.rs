//! Config parsing, subcommand runners and file output.
//!
//! Configs are flat `key = value` text, one entry per line, `#` starts a
//! comment and lists are comma separated. All outputs are written with fixed
//! formatting and fixed ordering, so repeated runs are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fiber::{project, Fiber};
use crate::grid::RadialGrid;
use crate::model::{check_a1, check_a2, check_a3, geometric_ladder, ModelParams, PotentialSpec};
use crate::solver::{initial_pair, solve, SolveOptions, SolveReport};
use crate::verify::run_suite;

pub const PROFILE_FILE: &str = "profile.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const FIBER_FILE: &str = "fiber.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

const REQUIRED: [&str; 8] = ["N", "alpha", "beta", "B", "potential", "A0", "r_max", "M"];
const OPTIONAL: [&str; 17] = [
    "Ainf",
    "max_outer",
    "descent_tol",
    "step0",
    "backtrack",
    "armijo",
    "seed_count",
    "positivity",
    "output_dir",
    "fiber_t_min",
    "fiber_t_max",
    "fiber_samples",
    "sweep_alpha",
    "sweep_beta",
    "slope_bound",
    "concavity_samples",
    "verify_trials",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dimension: usize,
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub potential: String,
    pub a0: f64,
    pub a_inf: f64,
    pub r_max: f64,
    pub node_count: usize,
    pub solver: SolveOptions,
    pub output_dir: PathBuf,
    pub fiber_t_min: f64,
    pub fiber_t_max: f64,
    pub fiber_samples: usize,
    /// Empty means "just `alpha`".
    pub sweep_alpha: Vec<f64>,
    pub sweep_beta: Vec<f64>,
    /// Bound on `sup |r A'(r)|` for the slope check.
    pub slope_bound: f64,
    pub concavity_samples: usize,
    pub verify_trials: usize,
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_value<T: std::str::FromStr>(key: &str, entry: &Entry) -> Result<T> {
    entry.value.parse().map_err(|_| Error::Config {
        line: entry.line,
        message: format!("invalid value {:?} for {key}", entry.value),
    })
}

fn parse_list(key: &str, entry: &Entry) -> Result<Vec<f64>> {
    if entry.value.is_empty() {
        return Ok(Vec::new());
    }
    entry
        .value
        .split(',')
        .map(|item| {
            item.trim().parse().map_err(|_| Error::Config {
                line: entry.line,
                message: format!("invalid list item {:?} for {key}", item.trim()),
            })
        })
        .collect()
}

struct Entries(Vec<(String, Entry)>);

impl Entries {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, e)| e)
    }

    fn req<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        parse_value(key, self.get(key).expect("required keys checked"))
    }
}

/// Parses and validates a config.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries: Vec<(String, Entry)> = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let key = key.trim();
        if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
            return Err(Error::Config { line, message: format!("unknown key \"{key}\"") });
        }
        if entries.iter().any(|(k, _)| k == key) {
            return Err(Error::Config { line, message: format!("duplicate key \"{key}\"") });
        }
        entries.push((key.to_string(), Entry { line, value: value.trim().to_string() }));
    }
    let entries = Entries(entries);
    for key in REQUIRED {
        if entries.get(key).is_none() {
            return Err(Error::ConfigValue(format!("missing required key \"{key}\"")));
        }
    }
    let get = |key: &str| entries.get(key);
    fn opt<T: std::str::FromStr>(entries: &Entries, key: &str, default: T) -> Result<T> {
        entries.get(key).map_or(Ok(default), |e| parse_value(key, e))
    }

    let defaults = SolveOptions::default();
    let a0: f64 = entries.req("A0")?;
    let potential: String = entries.req("potential")?;
    let a_inf = match get("Ainf") {
        Some(e) => Some(parse_value::<f64>("Ainf", e)?),
        None if potential == "constant" => Some(a0),
        None => None,
    };
    let config = RunConfig {
        dimension: entries.req("N")?,
        alpha: entries.req("alpha")?,
        beta: entries.req("beta")?,
        b: entries.req("B")?,
        a0,
        a_inf: a_inf.unwrap_or(f64::NAN),
        potential,
        r_max: entries.req("r_max")?,
        node_count: entries.req("M")?,
        solver: SolveOptions {
            max_outer: opt(&entries, "max_outer", defaults.max_outer)?,
            descent_tol: opt(&entries, "descent_tol", defaults.descent_tol)?,
            step0: opt(&entries, "step0", defaults.step0)?,
            backtrack: opt(&entries, "backtrack", defaults.backtrack)?,
            armijo: opt(&entries, "armijo", defaults.armijo)?,
            seed_count: opt(&entries, "seed_count", defaults.seed_count)?,
            positivity: opt(&entries, "positivity", defaults.positivity)?,
        },
        output_dir: opt(&entries, "output_dir", PathBuf::from("out"))?,
        fiber_t_min: opt(&entries, "fiber_t_min", 0.1)?,
        fiber_t_max: opt(&entries, "fiber_t_max", 10.0)?,
        fiber_samples: opt(&entries, "fiber_samples", 200)?,
        sweep_alpha: get("sweep_alpha").map_or(Ok(Vec::new()), |e| parse_list("sweep_alpha", e))?,
        sweep_beta: get("sweep_beta").map_or(Ok(Vec::new()), |e| parse_list("sweep_beta", e))?,
        slope_bound: opt(&entries, "slope_bound", f64::INFINITY)?,
        concavity_samples: opt(&entries, "concavity_samples", 64)?,
        verify_trials: opt(&entries, "verify_trials", 100)?,
    };
    if a_inf.is_none() {
        return Err(Error::ConfigValue(format!("potential {} needs Ainf", config.potential)));
    }
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Re-checks every invariant; called by [`parse_config`] and after
    /// command-line overrides.
    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.potential_spec()?;
        self.grid()?;
        self.solver.validate()?;
        if !(self.fiber_t_min > 0.0 && self.fiber_t_max > self.fiber_t_min && self.fiber_t_max.is_finite()) {
            return Err(Error::ConfigValue("fiber t-range must satisfy 0 < fiber_t_min < fiber_t_max".into()));
        }
        if self.fiber_samples < 3 {
            return Err(Error::ConfigValue("fiber_samples must be at least 3".into()));
        }
        if self.concavity_samples < 16 {
            return Err(Error::ConfigValue("concavity_samples must be at least 16".into()));
        }
        if self.verify_trials == 0 {
            return Err(Error::ConfigValue("verify_trials must be positive".into()));
        }
        if !(self.slope_bound >= 0.0) {
            return Err(Error::ConfigValue("slope_bound must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelParams> {
        ModelParams::new(self.dimension, self.alpha, self.beta, self.b)
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        PotentialSpec::from_name(&self.potential, self.a0, Some(self.a_inf))
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid>> {
        RadialGrid::new(self.dimension, self.r_max, self.node_count).map(Arc::new)
    }

    /// The full effective configuration in config grammar.
    pub fn echo(&self) -> String {
        let list = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let s = &self.solver;
        let rows: Vec<(&str, String)> = vec![
            ("N", self.dimension.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("B", self.b.to_string()),
            ("potential", self.potential.clone()),
            ("A0", self.a0.to_string()),
            ("Ainf", self.a_inf.to_string()),
            ("r_max", self.r_max.to_string()),
            ("M", self.node_count.to_string()),
            ("max_outer", s.max_outer.to_string()),
            ("descent_tol", s.descent_tol.to_string()),
            ("step0", s.step0.to_string()),
            ("backtrack", s.backtrack.to_string()),
            ("armijo", s.armijo.to_string()),
            ("seed_count", s.seed_count.to_string()),
            ("positivity", s.positivity.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("fiber_t_min", self.fiber_t_min.to_string()),
            ("fiber_t_max", self.fiber_t_max.to_string()),
            ("fiber_samples", self.fiber_samples.to_string()),
            ("sweep_alpha", list(&self.sweep_alpha)),
            ("sweep_beta", list(&self.sweep_beta)),
            ("slope_bound", self.slope_bound.to_string()),
            ("concavity_samples", self.concavity_samples.to_string()),
            ("verify_trials", self.verify_trials.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// `r,u,v` rows, one per node.
pub fn render_profile(report: &SolveReport) -> String {
    let grid = report.pair.grid();
    let mut out = String::from("r,u,v\n");
    for ((r, u), v) in grid.nodes().iter().zip(report.pair.u.samples()).zip(report.pair.v.samples()) {
        writeln!(out, "{},{},{}", sci(*r), sci(*u), sci(*v)).unwrap();
    }
    out
}

pub fn render_summary(config: &RunConfig, report: &SolveReport) -> String {
    let mut out = String::from("[config]\n");
    out.push_str(&config.echo());
    out.push_str("\n[energy]\n");
    for (key, value) in report.breakdown.entries() {
        writeln!(out, "{key} = {}", sci(value)).unwrap();
    }
    out.push_str("\n[residuals]\n");
    writeln!(out, "g = {}", sci(report.g_residual)).unwrap();
    writeln!(out, "p = {}", sci(report.p_residual)).unwrap();
    writeln!(out, "el = {}", sci(report.el_norm)).unwrap();
    out.push_str("\n[result]\n");
    writeln!(out, "m = {}", sci(report.m_value)).unwrap();
    writeln!(out, "iterations = {}", report.iterations).unwrap();
    writeln!(out, "converged = {}", report.converged).unwrap();
    writeln!(out, "seed_index = {}", report.seed_index).unwrap();
    for note in &report.notes {
        writeln!(out, "# {note}").unwrap();
    }
    out
}

/// Solves the configured problem and writes the profile and the summary.
/// Succeeds when the solver converged.
pub fn run_solve(config: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let report = solve(&config.model()?, &config.potential_spec()?, &config.grid()?, &config.solver)?;
    write_file(&config.output_dir, PROFILE_FILE, &render_profile(&report))?;
    write_file(&config.output_dir, SUMMARY_FILE, &render_summary(config, &report))?;
    let _ = writeln!(
        out,
        "m = {}  converged = {}  iterations = {}  el = {:.3e}  g = {:.3e}",
        sci(report.m_value),
        report.converged,
        report.iterations,
        report.el_norm,
        report.g_residual
    );
    Ok(report.converged)
}

/// Projects the canonical Gaussian seed and writes `t,h,h_prime` rows over
/// the configured geometric `t` ladder. Succeeds when `h'` changes sign once.
pub fn run_fiber_dump(config: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let (model, pot, grid) = (config.model()?, config.potential_spec()?, config.grid()?);
    let pair = project(&initial_pair(&grid, 0), &model, &pot)?;
    let ladder = geometric_ladder(config.fiber_t_min, config.fiber_t_max, config.fiber_samples);
    let curve = Fiber::new(&pair, &model, &pot).curve(&ladder)?;
    let mut text = String::from("t,h,h_prime\n");
    for ((t, h), d) in curve.t_values.iter().zip(&curve.h_values).zip(&curve.h_prime_values) {
        writeln!(text, "{},{},{}", sci(*t), sci(*h), sci(*d)).unwrap();
    }
    write_file(&config.output_dir, FIBER_FILE, &text)?;
    let changes = curve.sign_changes();
    let _ = writeln!(out, "t_bar = {}  sign_changes = {changes}", sci(curve.t_bar));
    Ok(changes == 1)
}

/// Prints one verdict line per potential hypothesis.
pub fn run_check_potential(config: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let (model, pot, grid) = (config.model()?, config.potential_spec()?, config.grid()?);
    let verdict = |pass: bool| if pass { "PASS" } else { "FAIL" };
    let a1 = check_a1(&pot, &grid)?;
    let a2 = check_a2(&pot, &grid, config.slope_bound)?;
    let a3 = check_a3(&pot, &model, &grid, config.concavity_samples)?;
    let _ = writeln!(
        out,
        "A1 {}  bounds A0 <= A(r) <= Ainf: worst violation {:.3e} at r = {}",
        verdict(a1.pass),
        a1.worst_violation,
        a1.worst_radius
    );
    let _ = writeln!(
        out,
        "A2 {}  sup |r A'(r)| = {:.6e} at r = {} (bound {})",
        verdict(a2.pass),
        a2.sup,
        a2.argmax,
        config.slope_bound
    );
    let _ = writeln!(
        out,
        "A3 {}  concavity defect {:.3e} at r = {}, s = {:.3e}; {} evaluations clamped to Ainf",
        verdict(a3.pass),
        a3.worst_second_difference,
        a3.worst_radius,
        a3.worst_s,
        a3.clamped_evaluations
    );
    Ok(a1.pass && a2.pass && a3.pass)
}

/// Runs the verification suite and prints the report.
pub fn run_verify(config: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let report = run_suite(
        &config.model()?,
        &config.potential_spec()?,
        &config.grid()?,
        &config.solver,
        config.verify_trials,
    )?;
    let _ = write!(out, "{}", report.render());
    for failure in report.failures() {
        let _ = writeln!(out, "FAILED {failure}");
    }
    Ok(report.passed())
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub m: Option<f64>,
    pub converged: bool,
    /// Empty for converged points.
    pub reason: String,
    /// Inadmissible points are skipped, not failed.
    pub skipped: bool,
}

fn sweep_point(config: &RunConfig, alpha: f64, beta: f64) -> SweepRow {
    let row = |m, converged, reason: String, skipped| SweepRow { alpha, beta, m, converged, reason, skipped };
    let model = match ModelParams::new(config.dimension, alpha, beta, config.b) {
        Ok(model) => model,
        Err(err) => return row(None, false, format!("skipped: {err}"), true),
    };
    let result = config
        .potential_spec()
        .and_then(|pot| config.grid().and_then(|grid| solve(&model, &pot, &grid, &config.solver)));
    match result {
        Ok(report) if report.converged => row(Some(report.m_value), true, String::new(), false),
        Ok(report) => row(Some(report.m_value), false, "not converged".into(), false),
        Err(err) => row(None, false, format!("error: {err}"), false),
    }
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,beta,m,converged,reason\n");
    for r in rows {
        let m = r.m.map(sci).unwrap_or_default();
        let reason = r.reason.replace([',', '\n'], ";");
        writeln!(out, "{},{},{m},{},{reason}", r.alpha, r.beta, r.converged).unwrap();
    }
    out
}

/// One solve per `(alpha, beta)` in the product of the sweep lists.
/// Succeeds when every admissible point converged.
pub fn run_sweep(config: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let alphas = if config.sweep_alpha.is_empty() { vec![config.alpha] } else { config.sweep_alpha.clone() };
    let betas = if config.sweep_beta.is_empty() { vec![config.beta] } else { config.sweep_beta.clone() };
    let points: Vec<(f64, f64)> = alphas.iter().flat_map(|&a| betas.iter().map(move |&b| (a, b))).collect();
    let rows: Vec<SweepRow> = points.par_iter().map(|&(a, b)| sweep_point(config, a, b)).collect();
    write_file(&config.output_dir, SWEEP_FILE, &render_sweep(&rows))?;
    for r in &rows {
        let m = r.m.map(sci).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "alpha = {}  beta = {}  m = {m}  {}", r.alpha, r.beta, r.reason);
    }
    Ok(rows.iter().all(|r| r.skipped || r.converged))
}
