//! Independent checks: the identity `G = P + ⟨I'(u,v),(u,v)⟩`, a damped
//! Newton solve of the discrete Euler–Lagrange system, the Hölder/Young chain
//! bounding the coupling, and the comparison with a constant potential.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Field, FieldPair};
use crate::functionals::{breakdown, el_residual, pairing};
use crate::grid::RadialGrid;
use crate::interp::MonotoneCubic;
use crate::model::{check_a1, ModelParams, PotentialSpec};
use crate::solver::{solve, SolveOptions};

/// Largest grid the dense Newton oracle accepts.
pub const ORACLE_MAX_NODES: usize = 128;
pub const ORACLE_TOL: f64 = 1e-8;
const ORACLE_MAX_ITER: usize = 50;

/// Smooth positive pair built from three Gaussians per component, with
/// amplitudes, centers and widths drawn from `seed`.
pub fn gaussian_mixture_pair(grid: &Arc<RadialGrid>, seed: u64) -> FieldPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = grid.r_max() / 4.0;
    let mut bumps = || -> Vec<(f64, f64, f64)> {
        (0..3)
            .map(|_| (rng.random_range(0.2..1.5), rng.random_range(0.0..reach), rng.random_range(0.5..2.5)))
            .collect()
    };
    let (bu, bv) = (bumps(), bumps());
    let eval = |bumps: &[(f64, f64, f64)], r: f64| -> f64 {
        bumps.iter().map(|&(a, c, s)| a * (-(r - c) * (r - c) / (2.0 * s * s)).exp()).sum()
    };
    FieldPair::from_fns(grid.clone(), |r| eval(&bu, r), |r| eval(&bv, r)).expect("gaussian sums are finite")
}

/// `|G - P - ⟨I'(u,v),(u,v)⟩| / (|G| + |P| + |⟨I'(u,v),(u,v)⟩| + 1e-30)`.
pub fn identity_error(pair: &FieldPair, model: &ModelParams, pot: &PotentialSpec) -> Result<f64> {
    let b = breakdown(pair, model, pot);
    let g = b.constraint(model);
    let p = b.pohozaev(model);
    let nehari = pairing(pair, pair, model, pot)?;
    Ok((g - p - nehari).abs() / (g.abs() + p.abs() + nehari.abs() + 1e-30))
}

/// Worst [`identity_error`] over `trials` seeded pairs.
pub fn identity_check(
    trials: usize,
    grid: &Arc<RadialGrid>,
    model: &ModelParams,
    pot: &PotentialSpec,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::ConfigValue("identity check needs at least one trial".into()));
    }
    let mut worst = 0.0f64;
    for seed in 0..trials as u64 {
        worst = worst.max(identity_error(&gaussian_mixture_pair(grid, seed), model, pot)?);
    }
    Ok(worst)
}

/// Outcome of [`newton_oracle`].
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub pair: FieldPair,
    pub el_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn unknowns(pair: &FieldPair) -> DVector<f64> {
    let m = pair.grid().node_count() - 1;
    DVector::from_iterator(2 * m, pair.u.samples()[..m].iter().chain(&pair.v.samples()[..m]).copied())
}

fn assemble(grid: &Arc<RadialGrid>, x: &DVector<f64>) -> Result<FieldPair> {
    let m = grid.node_count() - 1;
    let mut u: Vec<f64> = x.as_slice()[..m].to_vec();
    let mut v: Vec<f64> = x.as_slice()[m..].to_vec();
    u.push(0.0);
    v.push(0.0);
    FieldPair::from_samples(grid.clone(), u, v)
}

fn residual_vector(
    grid: &Arc<RadialGrid>,
    x: &DVector<f64>,
    model: &ModelParams,
    pot: &PotentialSpec,
) -> Result<(DVector<f64>, f64)> {
    let m = grid.node_count() - 1;
    let res = el_residual(&assemble(grid, x)?, model, pot);
    let values = res.r_u[..m].iter().chain(&res.r_v[..m]).copied();
    Ok((DVector::from_iterator(2 * m, values), res.norm))
}

/// Damped Newton iteration on the nodal residual `R = W^{-1}∇I` with a
/// central-difference Jacobian. Stops at `el_norm ≤ 1e-8`.
pub fn newton_oracle(
    grid: &Arc<RadialGrid>,
    model: &ModelParams,
    pot: &PotentialSpec,
    start: &FieldPair,
) -> Result<OracleResult> {
    if grid.node_count() > ORACLE_MAX_NODES {
        return Err(Error::InvalidGrid(format!(
            "Newton oracle needs at most {ORACLE_MAX_NODES} nodes, got {}",
            grid.node_count()
        )));
    }
    if start.grid().as_ref() != grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    if !(breakdown(start, model, pot).coupling > 0.0) {
        return Err(Error::NoFiberMaximizer);
    }
    let mut x = unknowns(start);
    let (mut r, mut norm) = residual_vector(grid, &x, model, pot)?;
    let mut iterations = 0;
    while norm > ORACLE_TOL && iterations < ORACLE_MAX_ITER {
        let jacobian = fd_jacobian(grid, &x, model, pot)?;
        let delta = match jacobian.clone().lu().solve(&r) {
            Some(d) => d,
            None => {
                let n = jacobian.nrows();
                let shifted = jacobian + DMatrix::identity(n, n) * 1e-10;
                shifted.lu().solve(&r).ok_or(Error::SingularJacobian)?
            }
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-6 {
            let trial = &x - &delta * lambda;
            let (r_trial, n_trial) = residual_vector(grid, &trial, model, pot)?;
            if n_trial < norm {
                x = trial;
                r = r_trial;
                norm = n_trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    Ok(OracleResult { pair: assemble(grid, &x)?, el_norm: norm, iterations, converged: norm <= ORACLE_TOL })
}

fn fd_jacobian(
    grid: &Arc<RadialGrid>,
    x: &DVector<f64>,
    model: &ModelParams,
    pot: &PotentialSpec,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let scale = x.amax().max(f64::MIN_POSITIVE);
    let mut jacobian = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for j in 0..n {
        let h = 1e-7 * scale.max(x[j].abs());
        probe[j] = x[j] + h;
        let (plus, _) = residual_vector(grid, &probe, model, pot)?;
        probe[j] = x[j] - h;
        let (minus, _) = residual_vector(grid, &probe, model, pot)?;
        probe[j] = x[j];
        jacobian.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(jacobian)
}

/// Monotone cubic resampling of `pair` onto `grid`; zero beyond the source
/// radius.
pub fn resample(pair: &FieldPair, grid: &Arc<RadialGrid>) -> Result<FieldPair> {
    let resample_field = |field: &Field| -> Result<Field> {
        let source = field.grid();
        let x: Vec<f64> = std::iter::once(0.0).chain(source.nodes().iter().copied()).collect();
        let y: Vec<f64> = std::iter::once(source.origin_value(field.samples()))
            .chain(field.samples().iter().copied())
            .collect();
        let spline = MonotoneCubic::new(x, y, true);
        let samples = grid
            .nodes()
            .iter()
            .map(|&r| if r >= source.r_max() { 0.0 } else { spline.eval(r) })
            .collect();
        Field::new(grid.clone(), samples)
    };
    FieldPair::new(resample_field(&pair.u)?, resample_field(&pair.v)?)
}

/// Hölder and Young margins of one pair, with the scale they are measured
/// against: `(holder, young, scale)`.
pub fn holder_margins(pair: &FieldPair, model: &ModelParams) -> Result<(f64, f64, f64)> {
    let grid = pair.grid();
    let (alpha, beta, p) = (model.alpha(), model.beta(), model.p());
    let (u, v) = (pair.u.samples(), pair.v.samples());
    let lp = |f: &[f64]| grid.integrate(&f.iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>());
    let lu = lp(u)?;
    let lv = lp(v)?;
    let coupling = breakdown(pair, model, &PotentialSpec::constant(1.0)?).coupling;
    let product = lu.powf(alpha / p) * lv.powf(beta / p);
    let young = alpha / p * lu + beta / p * lv;
    let scale = coupling.max(product).max(young).max(f64::MIN_POSITIVE);
    Ok((product - coupling, young - product, scale))
}

/// Most negative Hölder or Young margin, relative to its scale, over the
/// equality cases `u = v` and `∫|u|^p = ∫|v|^p` followed by `trials` seeded
/// pairs.
pub fn holder_chain_check(trials: usize, grid: &Arc<RadialGrid>, model: &ModelParams) -> Result<f64> {
    if trials == 0 {
        return Err(Error::ConfigValue("inequality check needs at least one trial".into()));
    }
    let base = gaussian_mixture_pair(grid, 0);
    let equal = FieldPair::new(base.u.clone(), base.u.clone())?;
    let p = model.p();
    let norm_p = |f: &Field| -> Result<f64> {
        grid.integrate(&f.samples().iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>())
    };
    let ratio = (norm_p(&base.u)? / norm_p(&base.v)?).powf(1.0 / p);
    let balanced = FieldPair::new(base.u.clone(), base.v.map(|x| ratio * x))?;

    let mut worst = f64::INFINITY;
    let pairs = [equal, balanced].into_iter().map(Ok).chain(
        (0..trials as u64).map(|seed| Ok::<_, Error>(gaussian_mixture_pair(grid, seed + 1))),
    );
    for pair in pairs {
        let (holder, young, scale) = holder_margins(&pair?, model)?;
        worst = worst.min(holder / scale).min(young / scale);
    }
    Ok(worst)
}

/// Outcome of [`constant_comparison`].
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub m_constant: f64,
    pub m_variable: f64,
    /// `m_constant - m_variable`.
    pub margin: f64,
    /// Set when either solve failed to converge.
    pub inconclusive: bool,
}

/// Ground-state levels for the constant potential `A0` and for `pot`.
pub fn constant_comparison(
    model: &ModelParams,
    pot: &PotentialSpec,
    grid: &Arc<RadialGrid>,
    options: &SolveOptions,
) -> Result<Comparison> {
    let bounds = check_a1(pot, grid)?;
    if !bounds.pass {
        return Err(Error::InvalidPotential(format!(
            "{} violates the bounds A0 <= A <= Ainf near r = {}",
            pot.name(),
            bounds.worst_radius
        )));
    }
    let floor = PotentialSpec::constant(pot.a0())?;
    let constant = solve(model, &floor, grid, options)?;
    let variable = solve(model, pot, grid, options)?;
    Ok(Comparison {
        m_constant: constant.m_value,
        m_variable: variable.m_value,
        margin: constant.m_value - variable.m_value,
        inconclusive: !(constant.converged && variable.converged),
    })
}

/// Tolerances of [`VerifyReport::failures`].
pub const IDENTITY_TOL: f64 = 1e-10;
pub const HOLDER_TOL: f64 = 1e-12;
pub const COMPARISON_TOL: f64 = 1e-4;
pub const ORACLE_ENERGY_TOL: f64 = 1e-2;
pub const ORACLE_G_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub identity_max_rel_err: f64,
    pub holder_worst_slack: f64,
    pub oracle_energy: f64,
    pub oracle_el_norm: f64,
    /// Level of the manifold solver on the oracle grid.
    pub oracle_solver_energy: f64,
    /// `|G|/scale` at the oracle pair.
    pub oracle_rel_constraint: f64,
    pub oracle_converged: bool,
    /// `m_constant - m_variable`.
    pub comparison_margin: f64,
    pub comparison_inconclusive: bool,
    pub notes: Vec<String>,
}

impl VerifyReport {
    /// Names of the checks that did not pass.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.identity_max_rel_err <= IDENTITY_TOL) {
            out.push("identity");
        }
        if !(self.holder_worst_slack >= -HOLDER_TOL) {
            out.push("holder");
        }
        let energy_gap = (self.oracle_energy - self.oracle_solver_energy).abs() / self.oracle_solver_energy.abs();
        if !(self.oracle_converged && energy_gap <= ORACLE_ENERGY_TOL && self.oracle_rel_constraint <= ORACLE_G_TOL) {
            out.push("oracle");
        }
        if self.comparison_inconclusive || !(self.comparison_margin <= COMPARISON_TOL) {
            out.push("comparison");
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    /// Aligned `key = value` lines.
    pub fn render(&self) -> String {
        let rows: [(&str, String); 10] = [
            ("identity_max_rel_err", format!("{:.6e}", self.identity_max_rel_err)),
            ("holder_worst_slack", format!("{:.6e}", self.holder_worst_slack)),
            ("oracle_energy", format!("{:.12e}", self.oracle_energy)),
            ("oracle_solver_energy", format!("{:.12e}", self.oracle_solver_energy)),
            ("oracle_el_norm", format!("{:.6e}", self.oracle_el_norm)),
            ("oracle_rel_constraint", format!("{:.6e}", self.oracle_rel_constraint)),
            ("oracle_converged", self.oracle_converged.to_string()),
            ("comparison_margin", format!("{:.6e}", self.comparison_margin)),
            ("comparison_inconclusive", self.comparison_inconclusive.to_string()),
            ("passed", self.passed().to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (key, value) in rows {
            out.push_str(&format!("{key:<width$} = {value}\n"));
        }
        for note in &self.notes {
            out.push_str(&format!("# {note}\n"));
        }
        out
    }
}

/// Radius of the oracle grid: the configured radius, capped where a 96-node
/// grid still resolves the profile.
pub const ORACLE_RADIUS: f64 = 12.0;
pub const ORACLE_NODES: usize = 96;

/// Newton oracle on a 96-node grid, started from `pair` resampled onto it,
/// together with the manifold solver's level on the same grid:
/// `(oracle, solver level)`.
pub fn oracle_comparison(
    pair: &FieldPair,
    model: &ModelParams,
    pot: &PotentialSpec,
    options: &SolveOptions,
) -> Result<(OracleResult, f64)> {
    let radius = pair.grid().r_max().min(ORACLE_RADIUS);
    let small = Arc::new(RadialGrid::new(pair.grid().dimension(), radius, ORACLE_NODES)?);
    let oracle = newton_oracle(&small, model, pot, &resample(pair, &small)?)?;
    let level = solve(model, pot, &small, options)?.m_value;
    Ok((oracle, level))
}

/// Runs every check for one configuration.
pub fn run_suite(
    model: &ModelParams,
    pot: &PotentialSpec,
    grid: &Arc<RadialGrid>,
    options: &SolveOptions,
    trials: usize,
) -> Result<VerifyReport> {
    let mut notes = Vec::new();
    let identity_max_rel_err = identity_check(trials, grid, model, pot)?;
    let holder_worst_slack = holder_chain_check(trials, grid, model)?;

    let solved = solve(model, pot, grid, options)?;
    if !solved.converged {
        notes.push("manifold solver did not converge on the configured grid".into());
    }
    let (oracle, oracle_solver_energy) = oracle_comparison(&solved.pair, model, pot, options)?;
    let ob = breakdown(&oracle.pair, model, pot);
    let oracle_rel_constraint = ob.constraint(model).abs() / ob.constraint_scale(model);
    if !(ob.energy(model) > 0.0) {
        notes.push("oracle pair has nonpositive energy".into());
    }

    let (comparison_margin, comparison_inconclusive) = if pot.is_constant() {
        notes.push("potential is constant; comparison is the identity case".into());
        (0.0, false)
    } else {
        let c = constant_comparison(model, pot, grid, options)?;
        (c.margin, c.inconclusive)
    };
    Ok(VerifyReport {
        identity_max_rel_err,
        holder_worst_slack,
        oracle_energy: ob.energy(model),
        oracle_el_norm: oracle.el_norm,
        oracle_solver_energy,
        oracle_rel_constraint,
        oracle_converged: oracle.converged,
        comparison_margin,
        comparison_inconclusive,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Arc<RadialGrid>, ModelParams, PotentialSpec) {
        (
            Arc::new(RadialGrid::new(3, 12.0, 256).unwrap()),
            ModelParams::new(3, 2.0, 2.0, 1.0).unwrap(),
            PotentialSpec::gauss_well(1.0, 2.0).unwrap(),
        )
    }

    #[test]
    fn mixtures_are_seeded() {
        let (g, _, _) = setup();
        let a = gaussian_mixture_pair(&g, 3);
        assert_eq!(a, gaussian_mixture_pair(&g, 3));
        assert_ne!(a, gaussian_mixture_pair(&g, 4));
    }

    #[test]
    fn identity_on_zero_pair() {
        let (g, model, pot) = setup();
        assert_eq!(identity_error(&FieldPair::zeros(g), &model, &pot).unwrap(), 0.0);
    }

    #[test]
    fn identity_small_sample() {
        let (g, model, pot) = setup();
        assert!(identity_check(10, &g, &model, &pot).unwrap() <= 1e-10);
        assert!(identity_check(0, &g, &model, &pot).is_err());
    }

    #[test]
    fn holder_equality_cases() {
        let (g, model, _) = setup();
        let model = ModelParams::new(3, 1.5, 2.5, model.b()).unwrap();
        let base = gaussian_mixture_pair(&g, 5);
        let (h, _, scale) = holder_margins(&FieldPair::new(base.u.clone(), base.u.clone()).unwrap(), &model).unwrap();
        assert!(h.abs() <= 1e-13 * scale);
        assert!(holder_chain_check(5, &g, &model).unwrap() >= -1e-12);
    }

    #[test]
    fn resample_reproduces_smooth_profiles() {
        let fine = Arc::new(RadialGrid::new(3, 20.0, 800).unwrap());
        let coarse = Arc::new(RadialGrid::new(3, 12.0, 96).unwrap());
        let pair = FieldPair::from_fns(fine, |r| (-r * r / 2.0).exp(), |r| (-r).exp()).unwrap();
        let out = resample(&pair, &coarse).unwrap();
        for (r, u) in coarse.nodes().iter().zip(out.u.samples()).take(95) {
            assert!((u - (-r * r / 2.0).exp()).abs() < 1e-4);
        }
    }

    #[test]
    fn newton_rejects_large_grids_and_semitrivial_starts() {
        let (g, model, pot) = setup();
        let pair = gaussian_mixture_pair(&g, 1);
        assert!(matches!(newton_oracle(&g, &model, &pot, &pair), Err(Error::InvalidGrid(_))));
        let small = Arc::new(RadialGrid::new(3, 10.0, 48).unwrap());
        let semi = FieldPair::from_fns(small.clone(), |r| (-r * r).exp(), |_| 0.0).unwrap();
        assert!(matches!(newton_oracle(&small, &model, &pot, &semi), Err(Error::NoFiberMaximizer)));
    }
}
