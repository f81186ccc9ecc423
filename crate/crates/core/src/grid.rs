//! Rectangular cell-centered grid with a staggered (MAC) velocity layout.
//!
//! Scalars (phi, mu, pressure, the kernel mass field `a`) live at cell
//! centers. The x-velocity lives on x-faces, `(nx+1) x ny` of them, and the
//! y-velocity on y-faces, `nx x (ny+1)`. Faces on the boundary carry the
//! normal velocity and are identically zero (no-slip).
//!
//! Storage is row-major with `i` (the x index) running fastest.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
}

impl GridSpec {
    /// Builds a grid on `[0, lx] x [0, ly]` with `nx x ny` cells.
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive and finite (got {lx} x {ly})"
            )));
        }
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 8 {
                return Err(Error::InvalidGrid(format!("{name} = {n} is below the minimum of 8")));
            }
            if n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} = {n} is odd; cell counts must be even")));
            }
        }
        Ok(Self { lx, ly, nx, ny })
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Cell-center coordinates of cell `(i, j)`.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    #[inline]
    pub(crate) fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub(crate) fn u_idx(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    #[inline]
    pub(crate) fn v_idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    pub fn u_len(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    pub fn v_len(&self) -> usize {
        self.nx * (self.ny + 1)
    }
}

/// Cell-centered scalar samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![c; grid.cells()],
        }
    }

    /// Samples `f(x, y)` at every cell center.
    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid: *grid, values }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.cells(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample {bad}")));
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Self) -> Result<()> {
        self.check_grid(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub(crate) fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Midpoint-rule integral over the domain.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Domain average `(1/|Omega|) * integral`.
    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.area()
    }

    /// Zero-mean part `f - mean(f)`.
    pub fn project_zero_mean(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }

    /// Quadrature-weighted L2 inner product.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_area())
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn l4_norm(&self) -> f64 {
        (self.values.iter().map(|v| (v * v) * (v * v)).sum::<f64>() * self.grid.cell_area())
            .powf(0.25)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_area()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `||grad f||` using face differences; boundary faces carry the
    /// homogeneous Neumann value (zero flux).
    pub fn h1_seminorm(&self) -> f64 {
        let g = &self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let mut s = 0.0;
        for j in 0..g.ny {
            for i in 1..g.nx {
                let d = (self.get(i, j) - self.get(i - 1, j)) / hx;
                s += d * d;
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                let d = (self.get(i, j) - self.get(i, j - 1)) / hy;
                s += d * d;
            }
        }
        (s * g.cell_area()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Norms of a staggered velocity field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorNorms {
    pub l2: f64,
    pub linf: f64,
    pub h1_seminorm: f64,
}

/// Face-centered velocity on the MAC layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            u: vec![0.0; grid.u_len()],
            v: vec![0.0; grid.v_len()],
        }
    }

    /// Samples `(fu, fv)` at the x- and y-face midpoints. Boundary-normal
    /// faces are set to zero regardless of the functions.
    pub fn from_fn(grid: &GridSpec, fu: impl Fn(f64, f64) -> f64, fv: impl Fn(f64, f64) -> f64) -> Self {
        let mut w = Self::zeros(grid);
        let (hx, hy) = (grid.hx(), grid.hy());
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                let k = grid.u_idx(i, j);
                w.u[k] = fu(i as f64 * hx, (j as f64 + 0.5) * hy);
            }
        }
        for j in 1..grid.ny {
            for i in 0..grid.nx {
                let k = grid.v_idx(i, j);
                w.v[k] = fv((i as f64 + 0.5) * hx, j as f64 * hy);
            }
        }
        w
    }

    /// Builds from raw component arrays; boundary-normal entries must be zero.
    pub fn from_components(grid: &GridSpec, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != grid.u_len() || v.len() != grid.v_len() {
            return Err(Error::InvalidArgument(format!(
                "component lengths ({}, {}) do not match grid ({}, {})",
                u.len(),
                v.len(),
                grid.u_len(),
                grid.v_len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite velocity sample".into()));
        }
        let w = Self { grid: *grid, u, v };
        if !w.is_no_slip() {
            return Err(Error::InvalidArgument("boundary-normal velocity must be zero".into()));
        }
        Ok(w)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    pub fn v(&self) -> &[f64] {
        &self.v
    }
    pub fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }
    pub fn v_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    #[inline]
    pub fn u_at(&self, i: usize, j: usize) -> f64 {
        self.u[self.grid.u_idx(i, j)]
    }
    #[inline]
    pub fn v_at(&self, i: usize, j: usize) -> f64 {
        self.v[self.grid.v_idx(i, j)]
    }

    pub(crate) fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn is_no_slip(&self) -> bool {
        let g = &self.grid;
        (0..g.ny).all(|j| self.u_at(0, j) == 0.0 && self.u_at(g.nx, j) == 0.0)
            && (0..g.nx).all(|i| self.v_at(i, 0) == 0.0 && self.v_at(i, g.ny) == 0.0)
    }

    /// Zeroes the boundary-normal faces.
    pub fn enforce_no_slip(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.u[g.u_idx(0, j)] = 0.0;
            self.u[g.u_idx(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.v[g.v_idx(i, 0)] = 0.0;
            self.v[g.v_idx(i, g.ny)] = 0.0;
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            u: self.u.iter().map(|x| c * x).collect(),
            v: self.v.iter().map(|x| c * x).collect(),
        }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Self) -> Result<()> {
        self.check_grid(other)?;
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += c * b;
        }
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_grid(other)?;
        let s: f64 = self.u.iter().zip(&other.u).map(|(a, b)| a * b).sum::<f64>()
            + self.v.iter().zip(&other.v).map(|(a, b)| a * b).sum::<f64>();
        Ok(s * self.grid.cell_area())
    }

    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.u.iter().chain(&self.v).map(|x| x * x).sum();
        (s * self.grid.cell_area()).sqrt()
    }

    /// Pointwise speed bound: per cell, combine the larger adjacent face value
    /// of each component. Never smaller than the true face maximum.
    pub fn linf_norm(&self) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let uu = self.u_at(i, j).abs().max(self.u_at(i + 1, j).abs());
                let vv = self.v_at(i, j).abs().max(self.v_at(i, j + 1).abs());
                m = m.max(uu.hypot(vv));
            }
        }
        m
    }

    /// `||grad w||`, consistent with the no-slip vector Laplacian: walls
    /// parallel to a component use the one-sided difference to the wall
    /// value 0 over a half cell.
    pub fn h1_seminorm(&self) -> f64 {
        let g = &self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let mut s = 0.0;
        // x-velocity
        for j in 0..g.ny {
            for i in 0..g.nx {
                let d = (self.u_at(i + 1, j) - self.u_at(i, j)) / hx;
                s += d * d;
            }
        }
        for i in 1..g.nx {
            for j in 1..g.ny {
                let d = (self.u_at(i, j) - self.u_at(i, j - 1)) / hy;
                s += d * d;
            }
            let d0 = 2.0 * self.u_at(i, 0) / hy;
            let d1 = 2.0 * self.u_at(i, g.ny - 1) / hy;
            s += 0.5 * (d0 * d0 + d1 * d1);
        }
        // y-velocity
        for j in 0..g.ny {
            for i in 0..g.nx {
                let d = (self.v_at(i, j + 1) - self.v_at(i, j)) / hy;
                s += d * d;
            }
        }
        for j in 1..g.ny {
            for i in 1..g.nx {
                let d = (self.v_at(i, j) - self.v_at(i - 1, j)) / hx;
                s += d * d;
            }
            let d0 = 2.0 * self.v_at(0, j) / hx;
            let d1 = 2.0 * self.v_at(g.nx - 1, j) / hx;
            s += 0.5 * (d0 * d0 + d1 * d1);
        }
        (s * g.cell_area()).sqrt()
    }

    pub fn norms(&self) -> VectorNorms {
        VectorNorms {
            l2: self.l2_norm(),
            linf: self.linf_norm(),
            h1_seminorm: self.h1_seminorm(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit(n: usize) -> GridSpec {
        GridSpec::new(1.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn spacings() {
        let g = unit(16);
        assert_eq!(g.hx(), 1.0 / 16.0);
        assert_eq!(g.hy(), 1.0 / 16.0);
        let g = GridSpec::new(2.0, 1.0, 32, 16).unwrap();
        assert_eq!(g.hx(), 1.0 / 16.0);
        assert_eq!(g.hy(), 1.0 / 16.0);
        assert_eq!(g.area(), 2.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(GridSpec::new(1.0, 1.0, 7, 16), Err(Error::InvalidGrid(_))));
        assert!(GridSpec::new(1.0, 1.0, 6, 16).is_err());
        assert!(GridSpec::new(0.0, 1.0, 16, 16).is_err());
        assert!(GridSpec::new(1.0, -1.0, 16, 16).is_err());
        assert!(GridSpec::new(f64::NAN, 1.0, 16, 16).is_err());
    }

    #[test]
    fn mean_of_constant_and_cosine() {
        let g = GridSpec::new(2.0, 1.0, 32, 16).unwrap();
        assert!((ScalarField::constant(&g, 3.25).mean() - 3.25).abs() < 1e-15);
        let f = ScalarField::from_fn(&g, |x, _| (2.0 * PI * x / 2.0).cos());
        assert!(f.mean().abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let g = unit(16);
        let z = ScalarField::constant(&g, 5.0).project_zero_mean();
        assert!(z.linf_norm() < 1e-14);
        let c = ScalarField::from_fn(&g, |x, y| (PI * x).cos() * (2.0 * PI * y).cos());
        let p = c.project_zero_mean();
        assert!(p.sub(&c).unwrap().linf_norm() < 1e-15);
        let shifted = c.map(|v| v + 1.0).project_zero_mean();
        assert!(shifted.sub(&c).unwrap().linf_norm() < 1e-14);
    }

    #[test]
    fn constant_norms() {
        let g = unit(16);
        let f = ScalarField::constant(&g, 1.0);
        assert!((f.l2_norm() - 1.0).abs() < 1e-14);
        assert!((f.l4_norm() - 1.0).abs() < 1e-14);
        assert_eq!(f.linf_norm(), 1.0);
        assert_eq!(f.h1_seminorm(), 0.0);
    }

    #[test]
    fn single_cell_l2() {
        let g = unit(16);
        let mut f = ScalarField::zeros(&g);
        f.set(5, 9, 1.0);
        assert!((f.l2_norm() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_gradient_norm_is_second_order() {
        // ||grad cos(pi x / Lx)|| = (pi/Lx) sqrt(|Omega|/2)
        let err = |n: usize| {
            let g = GridSpec::new(2.0, 1.0, 2 * n, n).unwrap();
            let f = ScalarField::from_fn(&g, |x, _| (PI * x / 2.0).cos());
            let exact = PI / 2.0 * (g.area() / 2.0).sqrt();
            (f.h1_seminorm() - exact).abs()
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e1 < 1e-2);
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn vector_norms_basic() {
        let g = unit(16);
        let z = VectorField::zeros(&g).norms();
        assert_eq!((z.l2, z.linf, z.h1_seminorm), (0.0, 0.0, 0.0));
        let mut w = VectorField::zeros(&g);
        let k = g.u_idx(4, 7);
        w.u_mut()[k] = 1.0;
        assert!((w.l2_norm() - g.cell_area().sqrt()).abs() < 1e-15);
        assert_eq!(w.linf_norm(), 1.0);
    }

    #[test]
    fn poiseuille_like_gradient_norm() {
        // u = (x(1-x) y(1-y), 0) on the unit square: ||grad u||^2 = 1/45.
        let exact = (1.0f64 / 45.0).sqrt();
        let err = |n: usize| {
            let g = unit(n);
            let w = VectorField::from_fn(&g, |x, y| x * (1.0 - x) * y * (1.0 - y), |_, _| 0.0);
            (w.h1_seminorm() - exact).abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 < 5e-3, "{e1}");
        assert!(e2 < e1 * 0.6, "{e1} {e2}");
    }

    #[test]
    fn from_components_rejects_wall_flux() {
        let g = unit(8);
        let mut u = vec![0.0; g.u_len()];
        u[g.u_idx(0, 3)] = 1.0;
        assert!(VectorField::from_components(&g, u, vec![0.0; g.v_len()]).is_err());
    }
}
