//! Problem data: the exponents, the constant `B`, and the radial potential
//! `A`, together with numerical checks of the hypotheses placed on `A`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    dimension: usize,
    alpha: f64,
    beta: f64,
    b: f64,
}

impl ModelParams {
    pub fn new(dimension: usize, alpha: f64, beta: f64, b: f64) -> Result<Self> {
        if dimension < 3 {
            return Err(Error::InvalidModel(format!("N must be at least 3, got {dimension}")));
        }
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(Error::InvalidModel(format!("alpha must be > 1, got {alpha}")));
        }
        if !(beta.is_finite() && beta > 1.0) {
            return Err(Error::InvalidModel(format!("beta must be > 1, got {beta}")));
        }
        let p = alpha + beta;
        let critical = critical_exponent(dimension);
        if !(p > 2.0 && p < critical) {
            return Err(Error::InvalidModel(format!(
                "alpha + beta must lie strictly inside (2, {critical}), got {p}"
            )));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::InvalidModel(format!("B must be > 0, got {b}")));
        }
        Ok(Self { dimension, alpha, beta, b })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `p = α + β`.
    pub fn p(&self) -> f64 {
        self.alpha + self.beta
    }

    /// Exponent `N + p` of the fiber parametrization `s = t^{N+p}`.
    pub fn fiber_exponent(&self) -> f64 {
        self.dimension as f64 + self.p()
    }
}

/// `4N/(N-2)`, the upper end of the admissible range for `α + β`.
pub fn critical_exponent(dimension: usize) -> f64 {
    4.0 * dimension as f64 / (dimension as f64 - 2.0)
}

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Profile {
    Constant,
    GaussWell,
    RationalWell,
    Custom { value: RadialFn, slope: RadialFn },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Constant,
    RadialProfile,
}

/// A radial potential `A(r)` with declared bounds `A0 ≤ A ≤ Ainf`.
#[derive(Clone)]
pub struct PotentialSpec {
    name: String,
    a0: f64,
    a_inf: f64,
    profile: Profile,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("name", &self.name)
            .field("a0", &self.a0)
            .field("a_inf", &self.a_inf)
            .finish()
    }
}

/// Names accepted by [`PotentialSpec::from_name`].
pub const REGISTERED_POTENTIALS: [&str; 3] = ["constant", "gauss-well", "rational-well"];

impl PotentialSpec {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidPotential(format!("constant must be > 0, got {value}")));
        }
        Ok(Self { name: "constant".into(), a0: value, a_inf: value, profile: Profile::Constant })
    }

    /// `A(r) = Ainf - (Ainf - A0) e^{-r²}`.
    pub fn gauss_well(a0: f64, a_inf: f64) -> Result<Self> {
        check_bounds(a0, a_inf)?;
        Ok(Self { name: "gauss-well".into(), a0, a_inf, profile: Profile::GaussWell })
    }

    /// `A(r) = Ainf - (Ainf - A0)/(1 + r²)`.
    pub fn rational_well(a0: f64, a_inf: f64) -> Result<Self> {
        check_bounds(a0, a_inf)?;
        Ok(Self { name: "rational-well".into(), a0, a_inf, profile: Profile::RationalWell })
    }

    /// An arbitrary radial profile with its exact derivative. The declared
    /// bounds are not enforced here; [`check_a1`] tests them.
    pub fn custom(
        name: impl Into<String>,
        a0: f64,
        a_inf: f64,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        slope: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            a0,
            a_inf,
            profile: Profile::Custom { value: Arc::new(value), slope: Arc::new(slope) },
        }
    }

    pub fn from_name(name: &str, a0: f64, a_inf: Option<f64>) -> Result<Self> {
        match name {
            "constant" => {
                if let Some(a_inf) = a_inf {
                    if a_inf != a0 {
                        return Err(Error::InvalidPotential(format!(
                            "constant potential needs Ainf = A0, got A0 = {a0}, Ainf = {a_inf}"
                        )));
                    }
                }
                Self::constant(a0)
            }
            "gauss-well" | "rational-well" => {
                let a_inf = a_inf.ok_or_else(|| {
                    Error::InvalidPotential(format!("potential {name} needs Ainf"))
                })?;
                if name == "gauss-well" {
                    Self::gauss_well(a0, a_inf)
                } else {
                    Self::rational_well(a0, a_inf)
                }
            }
            other => Err(Error::InvalidPotential(format!(
                "unknown potential {other:?}; expected one of {}",
                REGISTERED_POTENTIALS.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> PotentialKind {
        match self.profile {
            Profile::Constant => PotentialKind::Constant,
            _ => PotentialKind::RadialProfile,
        }
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn a_inf(&self) -> f64 {
        self.a_inf
    }

    pub fn value_at(&self, r: f64) -> f64 {
        let depth = self.a_inf - self.a0;
        match &self.profile {
            Profile::Constant => self.a0,
            Profile::GaussWell => self.a_inf - depth * (-r * r).exp(),
            Profile::RationalWell => self.a_inf - depth / (1.0 + r * r),
            Profile::Custom { value, .. } => value(r),
        }
    }

    /// `dA/dr`, so that `∇A(x)·x = r·A'(r)`.
    pub fn slope_at(&self, r: f64) -> f64 {
        let depth = self.a_inf - self.a0;
        match &self.profile {
            Profile::Constant => 0.0,
            Profile::GaussWell => 2.0 * depth * r * (-r * r).exp(),
            Profile::RationalWell => {
                let q = 1.0 + r * r;
                2.0 * depth * r / (q * q)
            }
            Profile::Custom { slope, .. } => slope(r),
        }
    }

    /// `A(r)` with radii beyond `r_max` clamped to `Ainf`.
    pub fn value_clamped(&self, r: f64, r_max: f64) -> f64 {
        if r > r_max {
            self.a_inf
        } else {
            self.value_at(r)
        }
    }

    /// `dA/dr` consistent with [`value_clamped`](Self::value_clamped).
    pub fn slope_clamped(&self, r: f64, r_max: f64) -> f64 {
        if r > r_max {
            0.0
        } else {
            self.slope_at(r)
        }
    }

    pub fn is_constant(&self) -> bool {
        self.kind() == PotentialKind::Constant
    }
}

fn check_bounds(a0: f64, a_inf: f64) -> Result<()> {
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(Error::InvalidPotential(format!("A0 must be > 0, got {a0}")));
    }
    if !(a_inf.is_finite() && a_inf >= a0) {
        return Err(Error::InvalidPotential(format!("Ainf must be ≥ A0, got {a_inf}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsCheck {
    pub pass: bool,
    /// Radius of the largest bound violation (or of the extreme value when passing).
    pub worst_radius: f64,
    pub worst_value: f64,
    /// Amount by which the worst sample leaves `[A0, Ainf]`; negative when inside.
    pub worst_violation: f64,
    /// `|A(r_max) - Ainf|`, informational.
    pub tail_gap: f64,
}

/// Lower/upper bound check `A0 ≤ A(r) ≤ Ainf` at `r = 0` and every node.
pub fn check_a1(pot: &PotentialSpec, grid: &RadialGrid) -> Result<BoundsCheck> {
    let eps = 1e-12 * pot.a_inf().abs();
    let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
    let radii = std::iter::once(0.0).chain(grid.nodes().iter().copied());
    for (index, r) in radii.enumerate() {
        let value = pot.value_at(r);
        if !value.is_finite() {
            return Err(Error::NonFinite { index, value });
        }
        let violation = (pot.a0() - value).max(value - pot.a_inf());
        if violation > worst.0 {
            worst = (violation, r, value);
        }
    }
    Ok(BoundsCheck {
        pass: worst.0 <= eps,
        worst_radius: worst.1,
        worst_value: worst.2,
        worst_violation: worst.0,
        tail_gap: (pot.value_at(grid.r_max()) - pot.a_inf()).abs(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeCheck {
    pub pass: bool,
    /// `max_i |r_i A'(r_i)|`.
    pub sup: f64,
    pub argmax: f64,
}

/// Boundedness of `∇A(x)·x = r A'(r)` over the grid.
pub fn check_a2(pot: &PotentialSpec, grid: &RadialGrid, bound: f64) -> Result<SlopeCheck> {
    let mut sup = 0.0;
    let mut argmax = 0.0;
    for (index, &r) in grid.nodes().iter().enumerate() {
        let slope = pot.slope_at(r);
        if !slope.is_finite() {
            return Err(Error::NonFinite { index, value: slope });
        }
        let x = (r * slope).abs();
        if x > sup {
            sup = x;
            argmax = r;
        }
    }
    Ok(SlopeCheck { pass: sup <= bound, sup, argmax })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityCheck {
    pub pass: bool,
    /// Most positive chord defect, relative to `max_s |φ_r(s)|`.
    pub worst_second_difference: f64,
    pub worst_radius: f64,
    pub worst_s: f64,
    /// Evaluations that fell beyond `r_max` and used `Ainf`.
    pub clamped_evaluations: usize,
}

/// Geometric ladder of `count` points on `[lo, hi]`.
pub fn geometric_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let step = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|k| lo * (step * k as f64).exp()).collect()
}

/// Chord defects of `f` sampled at increasing abscissae `s`:
/// `interp_k - f_k` where `interp_k` is the linear interpolant of the two
/// neighbours. Nonpositive everywhere iff the samples are concave.
pub fn chord_defects(s: &[f64], f: &[f64]) -> Vec<f64> {
    (1..s.len() - 1)
        .map(|k| {
            let (a, b) = (s[k] - s[k - 1], s[k + 1] - s[k]);
            (b * f[k - 1] + a * f[k + 1]) / (a + b) - f[k]
        })
        .collect()
}

/// Concavity of `s ↦ s^{(N+2)/(N+p)} A(s^{1/(N+p)} r)` on `s ∈ [1e-3, 1e3]`
/// at every node `r`.
pub fn check_a3(
    pot: &PotentialSpec,
    params: &ModelParams,
    grid: &RadialGrid,
    s_samples: usize,
) -> Result<ConcavityCheck> {
    if s_samples < 16 {
        return Err(Error::InvalidPotential(format!(
            "concavity scan needs at least 16 s samples, got {s_samples}"
        )));
    }
    let n = params.dimension() as f64;
    let exponent = params.fiber_exponent();
    let theta = (n + 2.0) / exponent;
    let kappa = 1.0 / exponent;
    let ladder = geometric_ladder(1e-3, 1e3, s_samples);
    let mut clamped = 0;
    let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut phi = vec![0.0; s_samples];
    for (index, &r) in grid.nodes().iter().enumerate() {
        for (slot, &s) in phi.iter_mut().zip(&ladder) {
            let radius = s.powf(kappa) * r;
            if radius > grid.r_max() {
                clamped += 1;
            }
            let value = pot.value_clamped(radius, grid.r_max());
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
            *slot = s.powf(theta) * value;
        }
        let scale = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (k, d) in chord_defects(&ladder, &phi).into_iter().enumerate() {
            let rel = if scale > 0.0 { d / scale } else { d };
            if rel > worst.0 {
                worst = (rel, r, ladder[k + 1]);
            }
        }
    }
    Ok(ConcavityCheck {
        pass: worst.0 <= 1e-10,
        worst_second_difference: worst.0,
        worst_radius: worst.1,
        worst_s: worst.2,
        clamped_evaluations: clamped,
    })
}
