//! Radial discretization of `R^N`.
//!
//! A radial function `u(x) = u(|x|)` is sampled on the uniform nodes
//! `r_i = i·Δr`, `i = 1..=M`, with `r_M = r_max` carrying the homogeneous
//! Dirichlet value. Volume integrals reduce to `Σ w_i f(r_i)` with
//! `w_i = |S^{N-1}| r_i^{N-1} Δr`.
//!
//! Gradient terms are evaluated on the staggered cell midpoints
//! `r_{j+1/2} = (j + 1/2)·Δr`, `j = 0..M`, through an eighth-order staggered
//! difference and a matching midpoint interpolant. Both act on the lattice
//! `{…, -r_1, 0, r_1, …}` extended by even reflection, with the missing value
//! at `r = 0` reconstructed from an even polynomial through the first nodes.
//! Because every staggered stencil sees odd-even oscillations, the discrete
//! energies built on them have no spurious null modes.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Half-width of the staggered stencils (order `2·HALF_WIDTH`).
pub const HALF_WIDTH: usize = 4;

/// Finite-difference weights for derivatives `0..=order` at `z` from the
/// abscissae `x` (Fornberg's recursion). Returns `c[node][derivative]`.
pub fn fd_weights(z: f64, x: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

/// Surface measure of the unit sphere in `R^N`, `2π^{N/2}/Γ(N/2)`.
pub fn sphere_area(dimension: usize) -> f64 {
    // Γ(N/2) by the half-integer recursion.
    let mut gamma = if dimension.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut x = if dimension.is_multiple_of(2) { 1.0 } else { 0.5 };
    let target = dimension as f64 / 2.0;
    while x < target {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(target) / gamma
}

/// Sparse linear map from node samples to midpoint values.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    rows: Vec<Vec<(usize, f64)>>,
    cols: usize,
}

impl Stencil {
    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn apply(&self, samples: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, c)| c * samples[k]).sum())
            .collect()
    }

    /// Adjoint action: `out_k = Σ_j c_{jk} y_j`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &yj) in self.rows.iter().zip(y) {
            for &(k, c) in row {
                out[k] += c * yj;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dimension: usize,
    r_max: f64,
    node_count: usize,
    spacing: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    midpoints: Vec<f64>,
    mid_weights: Vec<f64>,
    diff: Stencil,
    interp: Stencil,
    origin: Vec<f64>,
}

impl RadialGrid {
    pub fn new(dimension: usize, r_max: f64, node_count: usize) -> Result<Self> {
        if dimension < 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be at least 3, got {dimension}"
            )));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidGrid(format!("r_max must be positive, got {r_max}")));
        }
        if node_count < 8 {
            return Err(Error::InvalidGrid(format!(
                "node count must be at least 8, got {node_count}"
            )));
        }
        let m = node_count;
        let h = r_max / m as f64;
        let area = sphere_area(dimension);
        let power = (dimension - 1) as i32;
        let mut nodes: Vec<f64> = (1..=m).map(|i| i as f64 * h).collect();
        nodes[m - 1] = r_max;
        let weights = nodes.iter().map(|r| area * r.powi(power) * h).collect();
        let midpoints: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) * h).collect();
        let mid_weights = midpoints.iter().map(|r| area * r.powi(power) * h).collect();

        // Value at r = 0 from the even polynomial in r² through u_1..u_K.
        let k = HALF_WIDTH;
        let origin: Vec<f64> = (1..=k)
            .map(|i| {
                let xi = (i * i) as f64;
                (1..=k)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let xj = (j * j) as f64;
                        -xj / (xi - xj)
                    })
                    .product()
            })
            .collect();

        let offsets: Vec<f64> = (0..2 * k).map(|l| l as f64 - (k as f64 - 1.0)).collect();
        let w = fd_weights(0.5, &offsets, 1);
        let mut diff_rows = Vec::with_capacity(m);
        let mut interp_rows = Vec::with_capacity(m);
        for j in 0..m as i64 {
            let mut drow = Vec::new();
            let mut irow = Vec::new();
            for (l, wl) in w.iter().enumerate() {
                let lattice = j - (k as i64 - 1) + l as i64;
                expand(lattice, wl[1] / h, m, &origin, &mut drow);
                expand(lattice, wl[0], m, &origin, &mut irow);
            }
            diff_rows.push(merge(drow));
            interp_rows.push(merge(irow));
        }

        Ok(Self {
            dimension,
            r_max,
            node_count,
            spacing: h,
            nodes,
            weights,
            midpoints,
            mid_weights,
            diff: Stencil { rows: diff_rows, cols: m },
            interp: Stencil { rows: interp_rows, cols: m },
            origin,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn mid_weights(&self) -> &[f64] {
        &self.mid_weights
    }

    /// Staggered first derivative, nodes → midpoints.
    pub fn diff(&self) -> &Stencil {
        &self.diff
    }

    /// Staggered interpolation, nodes → midpoints.
    pub fn interp(&self) -> &Stencil {
        &self.interp
    }

    /// Reconstructed value at `r = 0` from the leading samples.
    pub fn origin_value(&self, samples: &[f64]) -> f64 {
        self.origin.iter().zip(samples).map(|(c, u)| c * u).sum()
    }

    /// `Σ_i w_i f_i`, summed left to right.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        self.check_samples(samples)?;
        Ok(self.weights.iter().zip(samples).map(|(w, f)| w * f).sum())
    }

    /// Midpoint-rule counterpart of [`integrate`](Self::integrate).
    pub fn integrate_midpoints(&self, samples: &[f64]) -> f64 {
        self.mid_weights.iter().zip(samples).map(|(w, f)| w * f).sum()
    }

    /// Cell-averaged samples of the indicator of the ball `|x| ≤ radius`:
    /// each node carries the fraction of its cell `[r_i - Δr/2, r_i + Δr/2]`
    /// inside the ball.
    pub fn ball_indicator(&self, radius: f64) -> Vec<f64> {
        let h = self.spacing;
        self.nodes
            .iter()
            .map(|&r| ((radius - (r - 0.5 * h)) / h).clamp(0.0, 1.0))
            .collect()
    }

    pub fn ball_volume(&self, radius: f64) -> f64 {
        sphere_area(self.dimension) * radius.powi(self.dimension as i32) / self.dimension as f64
    }

    /// Nodal `∂u/∂r`: central differences inside, the even reconstruction at
    /// `r = 0` feeding the first node, and a one-sided second-order formula
    /// at `r_max`.
    pub fn radial_derivative(&self, samples: &[f64]) -> Result<Vec<f64>> {
        self.check_samples(samples)?;
        let m = self.node_count;
        let h = self.spacing;
        let u0 = (4.0 * samples[0] - samples[1]) / 3.0;
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let d = if i == m - 1 {
                (3.0 * samples[i] - 4.0 * samples[i - 1] + samples[i - 2]) / (2.0 * h)
            } else {
                let left = if i == 0 { u0 } else { samples[i - 1] };
                (samples[i + 1] - left) / (2.0 * h)
            };
            out.push(d);
        }
        Ok(out)
    }

    /// Nodal radial Laplacian `f'' + (N-1) f'/r` by central differences,
    /// with the same inner reconstruction as [`radial_derivative`](Self::radial_derivative).
    /// The value at `r_max` is left at zero.
    pub fn radial_laplacian(&self, samples: &[f64]) -> Result<Vec<f64>> {
        self.check_samples(samples)?;
        let m = self.node_count;
        let h = self.spacing;
        let n1 = (self.dimension - 1) as f64;
        let u0 = (4.0 * samples[0] - samples[1]) / 3.0;
        let mut out = vec![0.0; m];
        for i in 0..m - 1 {
            let left = if i == 0 { u0 } else { samples[i - 1] };
            let right = samples[i + 1];
            let second = (right - 2.0 * samples[i] + left) / (h * h);
            let first = (right - left) / (2.0 * h);
            out[i] = second + n1 * first / self.nodes[i];
        }
        Ok(out)
    }

    /// Solves `(-Δ_r + shift) d = rhs` with `d(r_max) = 0` and zero flux at
    /// the origin, using the conservative three-point radial Laplacian.
    pub fn solve_shifted_laplacian(&self, rhs: &[f64], shift: f64) -> Vec<f64> {
        self.solve_shifted_operator(rhs, shift, &vec![1.0; self.node_count])
    }

    /// Solves `(-r^{1-N}(r^{N-1} c d')' + shift) d = rhs` with the diffusion
    /// coefficient `c` given at the midpoints, same boundary conditions as
    /// [`Self::solve_shifted_laplacian`].
    pub fn solve_shifted_operator(&self, rhs: &[f64], shift: f64, coefficient: &[f64]) -> Vec<f64> {
        let m = self.node_count;
        let h = self.spacing;
        let power = (self.dimension - 1) as i32;
        let n = m - 1;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let r = self.nodes[i];
            let area = r.powi(power) * h * h;
            let right = coefficient[i + 1] * self.midpoints[i + 1].powi(power) / area;
            let left = if i == 0 { 0.0 } else { coefficient[i] * self.midpoints[i].powi(power) / area };
            diag[i] = left + right + shift;
            if i > 0 {
                lower[i] = -left;
            }
            if i + 1 < n {
                upper[i] = -right;
            }
        }
        let mut d = thomas(&lower, &diag, &upper, &rhs[..n]);
        d.push(0.0);
        d
    }

    fn check_samples(&self, samples: &[f64]) -> Result<()> {
        if samples.len() != self.node_count {
            return Err(Error::LengthMismatch { expected: self.node_count, got: samples.len() });
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(())
    }
}

fn expand(lattice: i64, coeff: f64, m: usize, origin: &[f64], row: &mut Vec<(usize, f64)>) {
    if lattice > m as i64 {
        return;
    }
    if lattice < 0 {
        return expand(-lattice, coeff, m, origin, row);
    }
    if lattice == 0 {
        for (i, c) in origin.iter().enumerate() {
            row.push((i, coeff * c));
        }
        return;
    }
    row.push((lattice as usize - 1, coeff));
}

fn merge(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|&(k, _)| k);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (k, c) in row {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += c,
            _ => out.push((k, c)),
        }
    }
    out
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn grid_layout_matches_definition() {
        let g = RadialGrid::new(3, 10.0, 100).unwrap();
        assert!((g.nodes()[0] - 0.1).abs() < 1e-15);
        assert_eq!(g.nodes()[99], 10.0);
        for (r, w) in g.nodes().iter().zip(g.weights()) {
            assert!(rel(*w, 4.0 * PI * r * r * 0.1) < 1e-13);
            assert!(*w > 0.0);
        }
        assert!(g.nodes().windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(RadialGrid::new(2, 10.0, 100), Err(Error::InvalidGrid(_))));
        assert!(RadialGrid::new(3, 0.0, 100).is_err());
        assert!(RadialGrid::new(3, -1.0, 100).is_err());
        assert!(RadialGrid::new(3, 10.0, 7).is_err());
    }

    #[test]
    fn sphere_areas() {
        assert!(rel(sphere_area(3), 4.0 * PI) < 1e-14);
        assert!(rel(sphere_area(4), 2.0 * PI * PI) < 1e-14);
        assert!(rel(sphere_area(5), 8.0 * PI * PI / 3.0) < 1e-14);
    }

    #[test]
    fn ball_volume_from_indicator() {
        let g = RadialGrid::new(3, 10.0, 1000).unwrap();
        let vol = g.integrate(&g.ball_indicator(5.0)).unwrap();
        assert!(rel(vol, 4.0 / 3.0 * PI * 125.0) < 1e-3);
        for radius in [1.0, 2.37, 4.9] {
            let vol = g.integrate(&g.ball_indicator(radius)).unwrap();
            assert!(rel(vol, g.ball_volume(radius)) < 1e-3, "R = {radius}");
        }
    }

    #[test]
    fn integrate_edge_cases() {
        let g = RadialGrid::new(3, 12.0, 2048).unwrap();
        assert_eq!(g.integrate(&vec![0.0; 2048]).unwrap(), 0.0);
        let gauss: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        assert!(rel(g.integrate(&gauss).unwrap(), PI.powf(1.5)) < 1e-3);

        let mut bad = gauss.clone();
        bad[17] = f64::NAN;
        match g.integrate(&bad) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 17),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(g.integrate(&gauss[1..]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn quadrature_converges_at_second_order_or_better() {
        // N = 4 makes the trapezoidal error visible (odd integrand at r = 0).
        let err = |m: usize| {
            let g = RadialGrid::new(4, 8.0, m).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
            (g.integrate(&f).unwrap() - PI * PI).abs()
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e1 > 1e-12);
        assert!(e1 / e2 >= 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn derivative_of_constant_and_linear() {
        let g = RadialGrid::new(3, 5.0, 50).unwrap();
        let d = g.radial_derivative(&[2.5; 50]).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-12));
        let d = g.radial_derivative(g.nodes()).unwrap();
        for x in &d[1..49] {
            assert!((x - 1.0).abs() < 1e-12);
        }
        let quad: Vec<f64> = g.nodes().iter().map(|r| 1.0 + 2.0 * r + 3.0 * r * r).collect();
        let d = g.radial_derivative(&quad).unwrap();
        for (x, r) in d[1..49].iter().zip(&g.nodes()[1..49]) {
            assert!((x - (2.0 + 6.0 * r)).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_of_gaussian_is_second_order() {
        let max_err = |m: usize| {
            let g = RadialGrid::new(3, 8.0, m).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 2.0).exp()).collect();
            let d = g.radial_derivative(&f).unwrap();
            d.iter()
                .zip(g.nodes())
                .map(|(x, r)| (x + r * (-r * r / 2.0).exp()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (max_err(100), max_err(200));
        assert!(e1 < 0.01 * 0.08f64.powi(2) * 100.0);
        assert!(e1 / e2 > 3.5);
    }

    #[test]
    fn staggered_operators_are_high_order() {
        let g = RadialGrid::new(3, 10.0, 200).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 2.0).exp()).collect();
        let d = g.diff().apply(&f);
        let v = g.interp().apply(&f);
        for ((x, y), r) in d.iter().zip(&v).zip(g.midpoints()) {
            let exact = (-r * r / 2.0).exp();
            assert!((x + r * exact).abs() < 1e-8, "derivative at {r}");
            assert!((y - exact).abs() < 1e-8, "value at {r}");
        }
        assert!((g.origin_value(&f) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn staggered_difference_sees_checkerboard() {
        let g = RadialGrid::new(3, 10.0, 64).unwrap();
        let f: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d = g.diff().apply(&f);
        assert!(d[10..50].iter().all(|x| x.abs() > 1.0 / g.spacing()));
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = RadialGrid::new(3, 4.0, 32).unwrap();
        let u: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..32).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = g.diff().apply(&u).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.diff().apply_transpose(&y).iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn shifted_laplacian_solve_inverts_operator() {
        let g = RadialGrid::new(3, 10.0, 200).unwrap();
        let d: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        // Manufactured right-hand side from the analytic operator.
        let rhs: Vec<f64> = g
            .nodes()
            .iter()
            .map(|r| {
                let e = (-r * r).exp();
                -(4.0 * r * r - 6.0) * e + e
            })
            .collect();
        let x = g.solve_shifted_laplacian(&rhs, 1.0);
        let err = x.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3, "err {err}");
        assert_eq!(x[199], 0.0);
    }
}
