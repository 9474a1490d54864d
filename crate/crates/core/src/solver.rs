//! Minimization of the energy over `{G = 0}` by projected, preconditioned
//! descent on the reduced functional `J(u,v) = max_t I(u_t, v_t)`.
//!
//! Each outer iteration takes the nodal Euler–Lagrange residual, smooths it
//! with `(-Δ_r + 1)^{-1}`, steps along it with Armijo backtracking on `J`,
//! folds the result to `(|u|, |v|)` and projects back along the fiber.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fiber::{project_tracked, Fiber};
use crate::field::FieldPair;
use crate::functionals::{breakdown, el_residual, pair_norm, EnergyBreakdown};
use crate::grid::RadialGrid;
use crate::model::{check_a1, check_a2, check_a3, ModelParams, PotentialSpec};

const STEP_FLOOR: f64 = 1e-12;
const COLLAPSE_RATIO: f64 = 1e-14;
/// Trial pairs whose fiber maximizer is this close to 1 are kept as they are;
/// resampling them would only add interpolation noise. `|G|` stays of order
/// `REPROJECT_TOL` times its scale.
const REPROJECT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_outer: usize,
    /// Stop when `el_norm ≤ descent_tol · pair_norm`.
    pub descent_tol: f64,
    pub step0: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub seed_count: usize,
    pub positivity: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_outer: 2000,
            descent_tol: 1e-6,
            step0: 0.5,
            backtrack: 0.5,
            armijo: 1e-4,
            seed_count: 3,
            positivity: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::ConfigValue(what.to_string()));
        if self.max_outer == 0 {
            return bad("max_outer must be positive");
        }
        if !(self.descent_tol > 0.0) {
            return bad("descent_tol must be positive");
        }
        if !(self.step0 > 0.0) {
            return bad("step0 must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo must lie in (0, 1)");
        }
        if self.seed_count == 0 {
            return bad("seed_count must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub pair: FieldPair,
    pub m_value: f64,
    pub breakdown: EnergyBreakdown,
    pub g_residual: f64,
    pub p_residual: f64,
    /// Sum of the absolute values of the terms of `G`.
    pub scale: f64,
    pub el_norm: f64,
    pub pair_norm: f64,
    pub iterations: usize,
    pub t_bar_history: Vec<f64>,
    /// Reduced functional after every accepted step.
    pub value_history: Vec<f64>,
    pub converged: bool,
    pub seed_index: usize,
    /// `m` of every seed that converged, by seed index.
    pub seed_values: Vec<Option<f64>>,
    pub notes: Vec<String>,
}

impl SolveReport {
    pub fn positive_interior(&self) -> bool {
        let m = self.pair.grid().node_count();
        self.pair.u.samples()[..m - 1].iter().all(|&x| x > 0.0)
            && self.pair.v.samples()[..m - 1].iter().all(|&x| x > 0.0)
    }
}

/// Canonical Gaussian start for seed 0, seeded random amplitudes and widths
/// in `[0.5, 2]` otherwise.
pub fn initial_pair(grid: &Arc<RadialGrid>, seed: u64) -> FieldPair {
    let (cu, su, cv, sv) = seed_parameters(seed);
    FieldPair::from_fns(
        grid.clone(),
        |r| cu * (-r * r / (2.0 * su * su)).exp(),
        |r| cv * (-r * r / (2.0 * sv * sv)).exp(),
    )
    .expect("gaussian samples are finite")
}

/// `(c_u, σ_u, c_v, σ_v)` of [`initial_pair`].
pub fn seed_parameters(seed: u64) -> (f64, f64, f64, f64) {
    if seed == 0 {
        return (1.0, 1.0, 1.0, 1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || rng.random_range(0.5..=2.0);
    (draw(), draw(), draw(), draw())
}

/// `max_t I(u_t, v_t)`.
pub fn reduced_value(pair: &FieldPair, model: &ModelParams, pot: &PotentialSpec) -> Result<f64> {
    Fiber::new(pair, model, pot).max_value().map(|(_, v)| v)
}

#[derive(Debug, Clone)]
pub struct Step {
    /// The new iterate, already projected onto `{G = 0}`.
    pub pair: FieldPair,
    pub step: f64,
    /// Reduced functional of the new iterate.
    pub value: f64,
    /// Dilation applied by the projection.
    pub t_bar: f64,
}

/// One projected descent step from a pair on the constraint set. Returns
/// `Ok(None)` when backtracking underflows (stall).
pub fn descent_step(
    pair: &FieldPair,
    model: &ModelParams,
    pot: &PotentialSpec,
    options: &SolveOptions,
) -> Result<Option<Step>> {
    let value = reduced_value(pair, model, pot)?;
    let residual = el_residual(pair, model, pot);
    step_from(pair, value, &residual.r_u, &residual.r_v, model, pot, options)
}

fn step_from(
    pair: &FieldPair,
    value: f64,
    r_u: &[f64],
    r_v: &[f64],
    model: &ModelParams,
    pot: &PotentialSpec,
    options: &SolveOptions,
) -> Result<Option<Step>> {
    let grid = pair.grid();
    let coefficient = |samples: &[f64]| -> Vec<f64> {
        grid.interp().apply(samples).iter().map(|x| 1.0 + x * x).collect()
    };
    let d_u = grid.solve_shifted_operator(r_u, 1.0, &coefficient(pair.u.samples()));
    let d_v = grid.solve_shifted_operator(r_v, 1.0, &coefficient(pair.v.samples()));
    let weighted = |r: &[f64], d: &[f64]| -> f64 {
        grid.weights().iter().zip(r.iter().zip(d)).map(|(w, (a, b))| w * a * b).sum()
    };
    let slope = weighted(r_u, &d_u) + weighted(r_v, &d_v);
    if !(slope > 0.0) {
        return Ok(None);
    }
    let direction = FieldPair::from_samples(grid.clone(), d_u, d_v)?;
    let mut step = options.step0;
    while step >= STEP_FLOOR {
        let mut trial = pair.axpy(-step, &direction)?;
        if options.positivity {
            trial = trial.abs();
        }
        let fiber = Fiber::new(&trial, model, pot);
        if fiber.coupling() > 0.0 {
            let (t_bar, trial_value) = fiber.max_value()?;
            if trial_value <= value - options.armijo * step * slope {
                if (t_bar - 1.0).abs() <= REPROJECT_TOL {
                    return Ok(Some(Step { pair: trial, step, value: trial_value, t_bar }));
                }
                match project_tracked(&trial, model, pot) {
                    Ok((projected, t_bar)) => {
                        let value = reduced_value(&projected, model, pot)?;
                        return Ok(Some(Step { pair: projected, step, value, t_bar }));
                    }
                    // a shorter step keeps the trial closer to the constraint
                    Err(Error::Projection { .. }) => {}
                    Err(other) => return Err(other),
                }
            }
        }
        step *= options.backtrack;
    }
    Ok(None)
}

/// Outcome of one start.
#[derive(Debug, Clone)]
pub struct Run {
    pub pair: FieldPair,
    pub value: f64,
    pub el_norm: f64,
    pub pair_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub t_bar_history: Vec<f64>,
    pub value_history: Vec<f64>,
}

/// Runs the projected descent from `start`.
pub fn run_from(
    start: &FieldPair,
    model: &ModelParams,
    pot: &PotentialSpec,
    options: &SolveOptions,
) -> Result<Run> {
    let (mut pair, t0) = project_tracked(start, model, pot)?;
    let initial_coupling = breakdown(&pair, model, pot).coupling;
    let mut value = reduced_value(&pair, model, pot)?;
    let mut t_bar_history = vec![t0];
    let mut value_history = vec![value];
    let mut iterations = 0;
    let mut stalled = false;
    loop {
        let residual = el_residual(&pair, model, pot);
        let norm = pair_norm(&pair);
        let converged = residual.norm <= options.descent_tol * norm;
        if converged || iterations >= options.max_outer || stalled {
            return Ok(Run {
                pair,
                value,
                el_norm: residual.norm,
                pair_norm: norm,
                iterations,
                converged,
                stalled,
                t_bar_history,
                value_history,
            });
        }
        match step_from(&pair, value, &residual.r_u, &residual.r_v, model, pot, options)? {
            Some(step) => {
                pair = step.pair;
                value = step.value;
                t_bar_history.push(step.t_bar);
                value_history.push(value);
                iterations += 1;
                let coupling = breakdown(&pair, model, pot).coupling;
                if coupling < COLLAPSE_RATIO * initial_coupling {
                    return Err(Error::Degenerate);
                }
            }
            None => stalled = true,
        }
    }
}

/// Multi-start minimization; returns the lowest converged level.
pub fn solve(
    model: &ModelParams,
    pot: &PotentialSpec,
    grid: &Arc<RadialGrid>,
    options: &SolveOptions,
) -> Result<SolveReport> {
    options.validate()?;
    let mut notes = Vec::new();
    let a1 = check_a1(pot, grid)?;
    if !a1.pass {
        notes.push(format!("A1 check failed near r = {}", a1.worst_radius));
    }
    let a2 = check_a2(pot, grid, f64::INFINITY)?;
    notes.push(format!("sup |r A'(r)| = {:e}", a2.sup));
    let a3 = check_a3(pot, model, grid, 64)?;
    if !a3.pass {
        notes.push(format!(
            "A3 concavity scan failed: defect {:e} at r = {}, s = {}",
            a3.worst_second_difference, a3.worst_radius, a3.worst_s
        ));
    }

    let runs: Vec<Result<Run>> = (0..options.seed_count as u64)
        .into_par_iter()
        .map(|seed| run_from(&initial_pair(grid, seed), model, pot, options))
        .collect();

    let mut best: Option<(usize, Run)> = None;
    let mut fallback: Option<(usize, Run)> = None;
    let mut seed_values = Vec::with_capacity(runs.len());
    let mut first_error = None;
    for (index, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                seed_values.push(run.converged.then_some(run.value));
                if run.stalled {
                    notes.push(format!("seed {index} stalled after {} iterations", run.iterations));
                }
                let slot = if run.converged { &mut best } else { &mut fallback };
                if slot.as_ref().is_none_or(|(_, b)| run.value < b.value) {
                    *slot = Some((index, run));
                }
            }
            Err(err) => {
                seed_values.push(None);
                notes.push(format!("seed {index} failed: {err}"));
                first_error.get_or_insert(err);
            }
        }
    }
    let (seed_index, run) = match best.or(fallback) {
        Some(found) => found,
        None => return Err(first_error.expect("at least one seed ran")),
    };
    let converged_values: Vec<f64> = seed_values.iter().flatten().copied().collect();
    if let (Some(lo), Some(hi)) = (
        converged_values.iter().copied().reduce(f64::min),
        converged_values.iter().copied().reduce(f64::max),
    ) {
        if (hi - lo) > 1e-4 * lo.abs() {
            notes.push(format!("seeds disagree on m: spread {:e}", hi - lo));
        }
    }

    let b = breakdown(&run.pair, model, pot);
    let m_value = b.energy(model);
    if !run.converged {
        notes.push(format!(
            "not converged: el/pair_norm = {:e}, |P|/scale = {:e}; the discrete Pohozaev defect sets a floor for the residual on {{G = 0}}, a finer grid lowers it",
            run.el_norm / run.pair_norm,
            b.pohozaev(model).abs() / b.constraint_scale(model)
        ));
    }
    if run.converged && !(m_value > 0.0 && b.is_finite()) {
        notes.push(format!("nonpositive level m = {m_value}"));
    }
    Ok(SolveReport {
        m_value,
        breakdown: b,
        g_residual: b.constraint(model),
        p_residual: b.pohozaev(model),
        scale: b.constraint_scale(model),
        el_norm: run.el_norm,
        pair_norm: run.pair_norm,
        iterations: run.iterations,
        t_bar_history: run.t_bar_history,
        value_history: run.value_history,
        converged: run.converged,
        seed_index,
        seed_values,
        notes,
        pair: run.pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_seed() {
        assert_eq!(seed_parameters(0), (1.0, 1.0, 1.0, 1.0));
        let a = seed_parameters(1);
        let b = seed_parameters(2);
        assert_ne!(a, b);
        for x in [a.0, a.1, a.2, a.3, b.0, b.1, b.2, b.3] {
            assert!((0.5..=2.0).contains(&x));
        }
        assert_eq!(seed_parameters(7), seed_parameters(7));
    }

    #[test]
    fn initial_pairs_have_coupling() {
        let grid = Arc::new(RadialGrid::new(3, 10.0, 64).unwrap());
        let model = ModelParams::new(3, 2.0, 2.0, 1.0).unwrap();
        let pot = PotentialSpec::constant(1.0).unwrap();
        for seed in 0..5 {
            let pair = initial_pair(&grid, seed);
            assert!(breakdown(&pair, &model, &pot).coupling > 0.0);
        }
    }

    #[test]
    fn options_validation() {
        assert!(SolveOptions::default().validate().is_ok());
        let bad = SolveOptions { backtrack: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions { armijo: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions { seed_count: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reduced_value_dominates_energy() {
        let grid = Arc::new(RadialGrid::new(3, 12.0, 128).unwrap());
        let model = ModelParams::new(3, 2.0, 2.0, 1.0).unwrap();
        let pot = PotentialSpec::gauss_well(1.0, 2.0).unwrap();
        for seed in 0..4 {
            let pair = initial_pair(&grid, seed);
            let j = reduced_value(&pair, &model, &pot).unwrap();
            assert!(j >= crate::functionals::energy(&pair, &model, &pot));
            let flipped = pair.scaled(-1.0);
            assert_eq!(j, reduced_value(&flipped.abs(), &model, &pot).unwrap());
        }
    }

    #[test]
    fn semitrivial_start_is_rejected() {
        let grid = Arc::new(RadialGrid::new(3, 10.0, 64).unwrap());
        let model = ModelParams::new(3, 2.0, 2.0, 1.0).unwrap();
        let pot = PotentialSpec::constant(1.0).unwrap();
        let start = FieldPair::from_fns(grid, |r| (-r * r).exp(), |_| 0.0).unwrap();
        let err = run_from(&start, &model, &pot, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoFiberMaximizer));
    }
}
