//! The dilation `u_t(x) = t·u(x/t)`, the fibering map `h(t) = I(u_t, v_t)`,
//! its unique maximizer, and projection onto `{G = 0}`.
//!
//! `h` and `h'` are evaluated from the dilation-invariant integrals of the
//! base pair plus a fresh quadrature of `A(t·r)`; the pair itself is only
//! resampled (by monotone cubic interpolation) when a projected pair is
//! actually produced.

use crate::error::{Error, Result};
use crate::field::{Field, FieldPair};
use crate::functionals::breakdown;
use crate::interp::MonotoneCubic;
use crate::model::{chord_defects, geometric_ladder, ModelParams, PotentialSpec};

const BISECTION_REL_TOL: f64 = 1e-12;
const MAX_BRACKET_DOUBLINGS: usize = 200;
const MAX_PROJECTIONS: usize = 60;

/// Precomputed fibering map of one pair.
#[derive(Debug, Clone)]
pub struct Fiber<'a> {
    model: &'a ModelParams,
    pot: &'a PotentialSpec,
    r_max: f64,
    kin: f64,
    quasi: f64,
    pot_b: f64,
    coupling: f64,
    /// `(r_i, w_i u_i²)` for the nodes where `u` is nonzero.
    mass_u: Vec<(f64, f64)>,
}

impl<'a> Fiber<'a> {
    pub fn new(pair: &FieldPair, model: &'a ModelParams, pot: &'a PotentialSpec) -> Self {
        let b = breakdown(pair, model, pot);
        let grid = pair.grid();
        let mass_u = grid
            .nodes()
            .iter()
            .zip(grid.weights())
            .zip(pair.u.samples())
            .filter(|(_, u)| **u != 0.0)
            .map(|((&r, &w), &u)| (r, w * u * u))
            .collect();
        Self {
            model,
            pot,
            r_max: grid.r_max(),
            kin: b.kin,
            quasi: b.quasi,
            pot_b: b.pot_b,
            coupling: b.coupling,
            mass_u,
        }
    }

    /// A fiber given directly by its integrals: `kin`, the `t^{N+2}` block
    /// `rest` (which must already contain `∫A u²` for a constant potential),
    /// and `coupling`. Only meaningful for constant potentials.
    pub fn from_integrals(
        model: &'a ModelParams,
        pot: &'a PotentialSpec,
        kin: f64,
        rest: f64,
        coupling: f64,
    ) -> Self {
        Self { model, pot, r_max: f64::INFINITY, kin, quasi: rest, pot_b: 0.0, coupling, mass_u: Vec::new() }
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    fn scaled_potential(&self, t: f64) -> (f64, f64) {
        let mut value = 0.0;
        let mut virial = 0.0;
        for &(r, m) in &self.mass_u {
            let tr = t * r;
            value += self.pot.value_clamped(tr, self.r_max) * m;
            virial += tr * self.pot.slope_clamped(tr, self.r_max) * m;
        }
        (value, virial)
    }

    /// `h(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_scale(t)?;
        let n = self.model.dimension() as f64;
        let p = self.model.p();
        let (pot_a, _) = self.scaled_potential(t);
        Ok(0.5 * t.powf(n) * self.kin + 0.5 * t.powf(n + 2.0) * (self.quasi + self.pot_b + pot_a)
            - 2.0 * t.powf(n + p) / p * self.coupling)
    }

    /// `h'(t)`.
    pub fn prime(&self, t: f64) -> Result<f64> {
        check_scale(t)?;
        let n = self.model.dimension() as f64;
        let p = self.model.p();
        let (pot_a, virial) = self.scaled_potential(t);
        Ok(0.5 * n * t.powf(n - 1.0) * self.kin
            + 0.5 * (n + 2.0) * t.powf(n + 1.0) * (self.quasi + self.pot_b + pot_a)
            + 0.5 * t.powf(n + 1.0) * virial
            - 2.0 * (n + p) / p * t.powf(n + p - 1.0) * self.coupling)
    }

    /// The unique root of `h'` on `(0, ∞)`.
    pub fn maximize(&self) -> Result<f64> {
        if !(self.coupling > 0.0) {
            return Err(Error::NoFiberMaximizer);
        }
        if ![self.kin, self.quasi, self.pot_b, self.coupling].iter().all(|x| x.is_finite()) {
            return Err(Error::FiberBracket("non-finite fiber coefficients".into()));
        }
        let mut lo = 1.0;
        let mut hi = 1.0;
        let mut steps = 0;
        while self.prime(lo)? <= 0.0 {
            lo *= 0.5;
            hi = lo * 2.0;
            steps += 1;
            if steps > MAX_BRACKET_DOUBLINGS {
                return Err(Error::FiberBracket(format!("h' not positive down to t = {lo:e}")));
            }
        }
        while self.prime(hi)? >= 0.0 {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > MAX_BRACKET_DOUBLINGS {
                return Err(Error::FiberBracket(format!("h' not negative up to t = {hi:e}")));
            }
        }
        while hi - lo > BISECTION_REL_TOL * hi {
            let mid = 0.5 * (lo + hi);
            let d = self.prime(mid)?;
            if d > 0.0 {
                lo = mid;
            } else if d < 0.0 {
                hi = mid;
            } else {
                return Ok(mid);
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `max_t h(t)`, the reduced functional.
    pub fn max_value(&self) -> Result<(f64, f64)> {
        let t = self.maximize()?;
        Ok((t, self.eval(t)?))
    }

    pub fn curve(&self, t_values: &[f64]) -> Result<FiberCurve> {
        let t_bar = self.maximize()?;
        let mut h_values = Vec::with_capacity(t_values.len());
        let mut h_prime_values = Vec::with_capacity(t_values.len());
        for &t in t_values {
            h_values.push(self.eval(t)?);
            h_prime_values.push(self.prime(t)?);
        }
        Ok(FiberCurve {
            t_values: t_values.to_vec(),
            h_values,
            h_prime_values,
            t_bar,
            s_exponent: self.model.fiber_exponent(),
        })
    }

    /// Largest chord defect of `g(s) = h(s^{1/(N+p)})` on a geometric ladder
    /// in `[s_lo, s_hi]`, relative to `max |g|`. Nonpositive when concave.
    pub fn concavity_defect(&self, s_lo: f64, s_hi: f64, count: usize) -> Result<f64> {
        let s = geometric_ladder(s_lo, s_hi, count);
        let exponent = 1.0 / self.model.fiber_exponent();
        let g = s.iter().map(|x| self.eval(x.powf(exponent))).collect::<Result<Vec<_>>>()?;
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Ok(chord_defects(&s, &g).into_iter().fold(f64::NEG_INFINITY, f64::max) / scale)
    }
}

/// A sampled fibering map.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberCurve {
    pub t_values: Vec<f64>,
    pub h_values: Vec<f64>,
    pub h_prime_values: Vec<f64>,
    pub t_bar: f64,
    pub s_exponent: f64,
}

impl FiberCurve {
    pub fn sign_changes(&self) -> usize {
        self.h_prime_values.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count()
    }
}

fn check_scale(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveScale(t))
    }
}

fn scale_field(field: &Field, t: f64) -> Result<Field> {
    let grid = field.grid();
    let x: Vec<f64> = std::iter::once(0.0).chain(grid.nodes().iter().copied()).collect();
    let y: Vec<f64> = std::iter::once(grid.origin_value(field.samples()))
        .chain(field.samples().iter().copied())
        .collect();
    let spline = MonotoneCubic::new(x, y, true);
    let r_max = grid.r_max();
    let samples = grid
        .nodes()
        .iter()
        .map(|&r| {
            let s = r / t;
            if s >= r_max {
                0.0
            } else {
                t * spline.eval(s)
            }
        })
        .collect();
    Field::new(grid.clone(), samples)
}

/// `(u_t, v_t)` resampled on the same grid; values from beyond `r_max` are zero.
pub fn scale_pair(pair: &FieldPair, t: f64) -> Result<FieldPair> {
    check_scale(t)?;
    if t == 1.0 {
        return Ok(pair.clone());
    }
    FieldPair::new(scale_field(&pair.u, t)?, scale_field(&pair.v, t)?)
}

pub fn fiber_eval(pair: &FieldPair, model: &ModelParams, pot: &PotentialSpec, t: f64) -> Result<f64> {
    Fiber::new(pair, model, pot).eval(t)
}

pub fn fiber_prime(pair: &FieldPair, model: &ModelParams, pot: &PotentialSpec, t: f64) -> Result<f64> {
    Fiber::new(pair, model, pot).prime(t)
}

pub fn fiber_max(pair: &FieldPair, model: &ModelParams, pot: &PotentialSpec) -> Result<f64> {
    Fiber::new(pair, model, pot).maximize()
}

/// Projection onto `{G = 0}` along the fiber. The dilation is repeated on
/// the resampled pair until the maximizer is 1 to bisection accuracy, which
/// removes the interpolation error from the constraint.
pub fn project(pair: &FieldPair, model: &ModelParams, pot: &PotentialSpec) -> Result<FieldPair> {
    project_tracked(pair, model, pot).map(|(p, _)| p)
}

/// [`project`], also returning the accumulated dilation factor.
pub fn project_tracked(
    pair: &FieldPair,
    model: &ModelParams,
    pot: &PotentialSpec,
) -> Result<(FieldPair, f64)> {
    let mut current = pair.clone();
    let mut total = 1.0;
    let mut last_gap = f64::INFINITY;
    for _ in 0..MAX_PROJECTIONS {
        let t = fiber_max(&current, model, pot)?;
        let gap = (t - 1.0).abs();
        if gap <= 4.0 * BISECTION_REL_TOL {
            break;
        }
        // each resampling should leave a much smaller dilation; when it does
        // not, the dilated pair no longer fits inside r_max
        if gap > 0.5 * last_gap {
            return Err(Error::Projection { t_bar: total * t, r_max: pair.grid().r_max() });
        }
        last_gap = gap;
        current = scale_pair(&current, t)?;
        total *= t;
    }
    Ok((current, total))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::functionals::{constraint_g, energy};
    use crate::grid::RadialGrid;

    fn setup() -> (Arc<RadialGrid>, ModelParams, PotentialSpec) {
        (
            Arc::new(RadialGrid::new(3, 16.0, 1024).unwrap()),
            ModelParams::new(3, 2.0, 2.0, 1.0).unwrap(),
            PotentialSpec::constant(1.0).unwrap(),
        )
    }

    fn gaussian(g: &Arc<RadialGrid>) -> FieldPair {
        FieldPair::from_fns(g.clone(), |r| (-r * r / 2.0).exp(), |r| (-r * r / 2.0).exp()).unwrap()
    }

    #[test]
    fn unit_scale_is_identity() {
        let (g, model, pot) = setup();
        let pair = gaussian(&g);
        let same = scale_pair(&pair, 1.0).unwrap();
        assert_eq!(same.u.samples(), pair.u.samples());
        let (h1, e) = (fiber_eval(&pair, &model, &pot, 1.0).unwrap(), energy(&pair, &model, &pot));
        assert!((h1 - e).abs() <= 1e-14 * e.abs());
        assert!(scale_pair(&pair, 0.0).is_err());
        assert!(scale_pair(&pair, -1.0).is_err());
        assert!(fiber_eval(&pair, &model, &pot, 0.0).is_err());
    }

    #[test]
    fn scaled_gaussian_matches_closed_form() {
        let (g, _, _) = setup();
        let pair = gaussian(&g);
        let scaled = scale_pair(&pair, 2.0).unwrap();
        for (r, u) in g.nodes().iter().zip(scaled.u.samples()).take(1000) {
            assert!((u - 2.0 * (-r * r / 8.0).exp()).abs() < 1e-4, "r = {r}");
        }
    }

    #[test]
    fn gradient_energy_scales_like_t_to_the_n() {
        let (g, model, pot) = setup();
        let pair = gaussian(&g);
        let base = breakdown(&pair, &model, &pot).kin;
        for t in [0.5f64, 1.5, 2.0] {
            let scaled = breakdown(&scale_pair(&pair, t).unwrap(), &model, &pot).kin;
            assert!((scaled / base - t.powi(3)).abs() / t.powi(3) < 1e-3, "t = {t}");
        }
    }

    #[test]
    fn constant_potential_closed_form() {
        let (g, model, pot) = setup();
        let pair = FieldPair::from_fns(g, |r| 1.2 * (-r * r / 2.0).exp(), |r| 0.7 * (-r * r / 3.0).exp()).unwrap();
        let b = breakdown(&pair, &model, &pot);
        let (a, q, d) = (b.kin, b.pot_a + b.pot_b + b.quasi, b.coupling);
        for t in [0.3f64, 0.9, 1.7, 3.0] {
            let closed = 0.5 * a * t.powi(3) + 0.5 * q * t.powi(5) - 0.5 * d * t.powi(7);
            let h = fiber_eval(&pair, &model, &pot, t).unwrap();
            assert!((h - closed).abs() <= 1e-12 * closed.abs().max(1.0));
        }
    }

    #[test]
    fn prime_at_one_is_the_constraint() {
        let (g, model, _) = setup();
        let pot = PotentialSpec::gauss_well(1.0, 2.0).unwrap();
        let pair = FieldPair::from_fns(g, |r| (-r * r / 2.0).exp(), |r| 0.5 * (-r * r / 4.0).exp()).unwrap();
        let g1 = fiber_prime(&pair, &model, &pot, 1.0).unwrap();
        let gg = constraint_g(&pair, &model, &pot);
        assert!((g1 - gg).abs() <= 1e-10 * gg.abs());
    }

    #[test]
    fn maximizer_matches_scalar_bisection() {
        // a = q = d = 1, N = 3, p = 4: h'(t) = (3/2)t² + (5/2)t⁴ - (7/2)t⁶
        let scalar = |t: f64| 1.5 * t * t + 2.5 * t.powi(4) - 3.5 * t.powi(6);
        let (mut lo, mut hi) = (0.5, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if scalar(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let oracle = 0.5 * (lo + hi);
        let (_, model, pot) = setup();
        let fiber = Fiber::from_integrals(&model, &pot, 1.0, 1.0, 1.0);
        assert!((fiber.maximize().unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn semitrivial_pair_has_no_maximizer() {
        let (g, model, pot) = setup();
        let pair = FieldPair::from_fns(g, |r| (-r * r).exp(), |_| 0.0).unwrap();
        assert!(matches!(fiber_max(&pair, &model, &pot), Err(Error::NoFiberMaximizer)));
        assert!(project(&pair, &model, &pot).is_err());
    }

    #[test]
    fn projection_lands_on_manifold_and_is_idempotent() {
        let (g, model, pot) = setup();
        let pair = gaussian(&g);
        let projected = project(&pair, &model, &pot).unwrap();
        let b = breakdown(&projected, &model, &pot);
        assert!(b.constraint(&model).abs() <= 1e-6 * b.constraint_scale(&model));
        let t = fiber_max(&projected, &model, &pot).unwrap();
        assert!((t - 1.0).abs() < 1e-6);

        let fiber = Fiber::new(&projected, &model, &pot);
        let peak = fiber.eval(1.0).unwrap();
        for k in 1..40 {
            let t = 0.05 * k as f64;
            let h = fiber.eval(t).unwrap();
            assert!(h <= peak);
            if t <= 1.0 {
                assert!(h > 0.0);
            }
        }
    }

    #[test]
    fn fiber_limits() {
        let (g, model, pot) = setup();
        let fiber = Fiber::new(&gaussian(&g), &model, &pot);
        let small = fiber.eval(1e-3).unwrap();
        assert!(small > 0.0 && small < 1e-6);
        assert!(fiber.eval(1e3).unwrap() < -1e10);
    }

    #[test]
    fn projection_that_leaves_the_grid_is_reported() {
        let g = Arc::new(RadialGrid::new(3, 8.0, 128).unwrap());
        let model = ModelParams::new(3, 1.2, 1.2, 1.0).unwrap();
        let pot = PotentialSpec::constant(1.0).unwrap();
        let wide = FieldPair::from_fns(g, |r| (-r * r / 8.0).exp(), |r| (-r * r / 8.0).exp()).unwrap();
        assert!(fiber_max(&wide, &model, &pot).unwrap() > 2.0);
        assert!(matches!(project(&wide, &model, &pot), Err(Error::Projection { .. })));
    }
}
