use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// Samples of a radial profile on a [`RadialGrid`].
///
/// The last sample (at `r_max`) is the Dirichlet truncation value and is
/// always stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<RadialGrid>,
    samples: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<RadialGrid>, mut samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.node_count() {
            return Err(Error::LengthMismatch { expected: grid.node_count(), got: samples.len() });
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        *samples.last_mut().unwrap() = 0.0;
        Ok(Self { grid, samples })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, samples)
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let samples = vec![0.0; grid.node_count()];
        Self { grid, samples }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut samples: Vec<f64> = self.samples.iter().map(|&x| f(x)).collect();
        *samples.last_mut().unwrap() = 0.0;
        Self { grid: self.grid.clone(), samples }
    }

    pub fn radial_derivative(&self) -> Vec<f64> {
        self.grid.radial_derivative(&self.samples).expect("field samples are finite")
    }
}

/// The unknown `(u, v)`, both components on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub u: Field,
    pub v: Field,
}

impl FieldPair {
    pub fn new(u: Field, v: Field) -> Result<Self> {
        if !same_grid(u.grid(), v.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { u, v })
    }

    pub fn from_samples(grid: Arc<RadialGrid>, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Ok(Self { u: Field::new(grid.clone(), u)?, v: Field::new(grid, v)? })
    }

    pub fn from_fns(
        grid: Arc<RadialGrid>,
        u: impl Fn(f64) -> f64,
        v: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        Ok(Self { u: Field::from_fn(grid.clone(), u)?, v: Field::from_fn(grid, v)? })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        Self { u: Field::zeros(grid.clone()), v: Field::zeros(grid) }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.u.grid()
    }

    pub fn abs(&self) -> Self {
        Self { u: self.u.map(f64::abs), v: self.v.map(f64::abs) }
    }

    pub fn swapped(&self) -> Self {
        Self { u: self.v.clone(), v: self.u.clone() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { u: self.u.map(|x| c * x), v: self.v.map(|x| c * x) }
    }

    /// `self + step·other`, componentwise.
    pub fn axpy(&self, step: f64, other: &FieldPair) -> Result<Self> {
        if !same_grid(self.grid(), other.grid()) {
            return Err(Error::GridMismatch);
        }
        let add = |a: &Field, b: &Field| {
            let samples = a.samples().iter().zip(b.samples()).map(|(x, y)| x + step * y).collect();
            Field::new(a.grid().clone(), samples)
        };
        Ok(Self { u: add(&self.u, &other.u)?, v: add(&self.v, &other.v)? })
    }

    pub(crate) fn check_compatible(&self, other: &FieldPair) -> Result<()> {
        if same_grid(self.grid(), other.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub(crate) fn same_grid(a: &Arc<RadialGrid>, b: &Arc<RadialGrid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}
