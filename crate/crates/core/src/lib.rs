//! Positive ground states of the coupled quasilinear Schrödinger system
//!
//! ```text
//! -Δu + A(x)u - ½Δ(u²)u = (2α/(α+β)) |u|^{α-2}u |v|^β
//! -Δv + B v   - ½Δ(v²)v = (2β/(α+β)) |u|^α |v|^{β-2}v
//! ```
//!
//! in `R^N`, computed by minimizing the energy over the set where the
//! combined Nehari–Pohožaev functional `G` vanishes, for radial data.

pub mod cli;
pub mod error;
pub mod fiber;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod interp;
pub mod model;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use fiber::{fiber_eval, fiber_max, fiber_prime, project, scale_pair, Fiber, FiberCurve};
pub use field::{Field, FieldPair};
pub use functionals::{
    breakdown, constraint_g, el_residual, energy, pair_norm, pairing, pohozaev_p, EnergyBreakdown,
};
pub use grid::RadialGrid;
pub use model::{check_a1, check_a2, check_a3, ModelParams, PotentialSpec};
pub use solver::{initial_pair, reduced_value, solve, SolveOptions, SolveReport};
