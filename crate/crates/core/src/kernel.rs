//! Interaction kernel `J`, its induced mass field `a(x) = int_Omega J(x - y) dy`
//! and domain-restricted convolutions.
//!
//! The kernel is sampled on the full offset lattice `(2nx-1) x (2ny-1)`, so a
//! convolution over the domain is a linear (zero-extended) convolution. It is
//! evaluated with a zero-padded FFT of size `2nx x 2ny`, which is exact for
//! this lattice.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

/// `E_1(1)`, the exponential integral at one.
const EXPINT_E1_ONE: f64 = 0.219_383_934_395_520_27;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `exp(-r^2 / (2 w^2))`
    Gaussian,
    /// Smooth mollifier `exp(-1 / (1 - (r/w)^2))` supported on `r < w`.
    CompactBump,
    /// Wendland C2 function `(1 - r/w)^4 (1 + 4 r/w)` supported on `r < w`.
    Wendland,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::CompactBump => "compact-bump",
            KernelFamily::Wendland => "wendland",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian" => Some(KernelFamily::Gaussian),
            "compact-bump" => Some(KernelFamily::CompactBump),
            "wendland" => Some(KernelFamily::Wendland),
            _ => None,
        }
    }

    /// Integral of the unnormalized profile over the plane, in units of `w^2`.
    fn unit_mass(&self) -> f64 {
        match self {
            KernelFamily::Gaussian => 2.0 * PI,
            KernelFamily::CompactBump => PI * ((-1.0f64).exp() - EXPINT_E1_ONE),
            KernelFamily::Wendland => PI / 7.0,
        }
    }

    /// Unnormalized profile and its radial derivative at `rho = r / w`.
    fn profile(&self, rho: f64) -> (f64, f64) {
        match self {
            KernelFamily::Gaussian => {
                let e = (-0.5 * rho * rho).exp();
                (e, -rho * e)
            }
            KernelFamily::CompactBump => {
                if rho >= 1.0 {
                    return (0.0, 0.0);
                }
                let t = 1.0 - rho * rho;
                let e = (-1.0 / t).exp();
                (e, -2.0 * rho / (t * t) * e)
            }
            KernelFamily::Wendland => {
                if rho >= 1.0 {
                    return (0.0, 0.0);
                }
                let s = 1.0 - rho;
                (s.powi(4) * (1.0 + 4.0 * rho), -20.0 * rho * s.powi(3))
            }
        }
    }
}

/// Radially symmetric, nonnegative kernel. `amplitude` is the total mass of
/// the kernel on the whole plane, so `||J||_L1 ~= amplitude` whenever the
/// support fits inside the offset lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub amplitude: f64,
    pub width: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, amplitude: f64, width: f64) -> Self {
        Self {
            family,
            amplitude,
            width,
        }
    }

    /// `J(x, y)` and its analytic gradient.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let w = self.width;
        let r = x.hypot(y);
        let c = self.amplitude / (self.family.unit_mass() * w * w);
        let (p, dp) = self.family.profile(r / w);
        if r == 0.0 {
            return (c * p, 0.0, 0.0);
        }
        let radial = c * dp / w;
        (c * p, radial * x / r, radial * y / r)
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::InvalidKernel(format!("amplitude must be >= 0, got {}", self.amplitude)));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::InvalidKernel(format!("width must be > 0, got {}", self.width)));
        }
        let min_width = 2.0 * grid.hx().max(grid.hy());
        if self.width < min_width {
            return Err(Error::UnderResolvedKernel {
                width: self.width,
                min_width,
            });
        }
        Ok(())
    }
}

struct Plans {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (fx, fy) = if inverse { (&self.inv_x, &self.inv_y) } else { (&self.fwd_x, &self.fwd_y) };
        for row in data.chunks_exact_mut(self.nx) {
            fx.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); self.ny];
        for i in 0..self.nx {
            for j in 0..self.ny {
                col[j] = data[j * self.nx + i];
            }
            fy.process(&mut col);
            for j in 0..self.ny {
                data[j * self.nx + i] = col[j];
            }
        }
    }
}

/// A kernel sampled for one grid, with its convolution spectra precomputed.
#[derive(Clone)]
pub struct Kernel {
    spec: Option<KernelSpec>,
    grid: GridSpec,
    samples: Vec<f64>,
    grad_x: Vec<f64>,
    grad_y: Vec<f64>,
    a: ScalarField,
    norm_j_l1: f64,
    norm_grad_j_l1: f64,
    plans: Arc<Plans>,
    j_hat: Vec<Complex64>,
    gx_hat: Vec<Complex64>,
    gy_hat: Vec<Complex64>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("spec", &self.spec)
            .field("grid", &self.grid)
            .field("norm_j_l1", &self.norm_j_l1)
            .field("norm_grad_j_l1", &self.norm_grad_j_l1)
            .finish_non_exhaustive()
    }
}

impl Kernel {
    /// Samples `spec` on the offset lattice of `grid`.
    pub fn build(spec: &KernelSpec, grid: &GridSpec) -> Result<Self> {
        spec.validate(grid)?;
        let (lx, ly) = lattice_dims(grid);
        let (ox, oy) = (grid.nx() as isize - 1, grid.ny() as isize - 1);
        let mut samples = vec![0.0; lx * ly];
        let mut gx = vec![0.0; lx * ly];
        let mut gy = vec![0.0; lx * ly];
        for l in 0..ly {
            for k in 0..lx {
                let dx = (k as isize - ox) as f64 * grid.hx();
                let dy = (l as isize - oy) as f64 * grid.hy();
                let (j, jx, jy) = spec.eval(dx, dy);
                samples[l * lx + k] = j;
                gx[l * lx + k] = jx;
                gy[l * lx + k] = jy;
            }
        }
        Ok(Self::assemble(Some(*spec), grid, samples, gx, gy))
    }

    /// Builds a kernel directly from lattice samples of `J` and `grad J`
    /// (row-major over offsets `-(n-1)..=(n-1)`). `J` must be even and the
    /// gradient odd under `x -> -x`; `J` must be nonnegative.
    pub fn from_lattice(grid: &GridSpec, samples: Vec<f64>, grad_x: Vec<f64>, grad_y: Vec<f64>) -> Result<Self> {
        let (lx, ly) = lattice_dims(grid);
        let n = lx * ly;
        if samples.len() != n || grad_x.len() != n || grad_y.len() != n {
            return Err(Error::InvalidKernel(format!("lattice arrays must have {n} entries")));
        }
        for k in 0..n {
            let m = n - 1 - k;
            if samples[k] != samples[m] || grad_x[k] != -grad_x[m] || grad_y[k] != -grad_y[m] {
                return Err(Error::InvalidKernel("lattice samples violate J(x) = J(-x)".into()));
            }
            if !(samples[k] >= 0.0) || !grad_x[k].is_finite() || !grad_y[k].is_finite() {
                return Err(Error::InvalidKernel("samples must be finite and nonnegative".into()));
            }
        }
        Ok(Self::assemble(None, grid, samples, grad_x, grad_y))
    }

    fn assemble(spec: Option<KernelSpec>, grid: &GridSpec, samples: Vec<f64>, grad_x: Vec<f64>, grad_y: Vec<f64>) -> Self {
        let plans = Arc::new(Plans::new(2 * grid.nx(), 2 * grid.ny()));
        let j_hat = spectrum(grid, &plans, &samples);
        let gx_hat = spectrum(grid, &plans, &grad_x);
        let gy_hat = spectrum(grid, &plans, &grad_y);
        let area = grid.cell_area();
        let norm_j_l1 = samples.iter().map(|v| v.abs()).sum::<f64>() * area;
        let norm_grad_j_l1 = grad_x.iter().zip(&grad_y).map(|(x, y)| x.hypot(*y)).sum::<f64>() * area;
        let mut k = Self {
            spec,
            grid: *grid,
            samples,
            grad_x,
            grad_y,
            a: ScalarField::zeros(grid),
            norm_j_l1,
            norm_grad_j_l1,
            plans,
            j_hat,
            gx_hat,
            gy_hat,
        };
        let a = k.apply(&ScalarField::constant(grid, 1.0), Which::J);
        k.a = a;
        k
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        self.spec.as_ref()
    }
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    /// `a(x) = sum_y J(x - y) hx hy` over the domain.
    pub fn a(&self) -> &ScalarField {
        &self.a
    }
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
    pub fn grad_samples(&self) -> (&[f64], &[f64]) {
        (&self.grad_x, &self.grad_y)
    }

    /// Lattice sample `J(dx * hx, dy * hy)`.
    pub fn sample(&self, dx: isize, dy: isize) -> f64 {
        self.samples[self.lattice_index(dx, dy)]
    }

    /// Lattice sample of `grad J`.
    pub fn grad_sample(&self, dx: isize, dy: isize) -> (f64, f64) {
        let k = self.lattice_index(dx, dy);
        (self.grad_x[k], self.grad_y[k])
    }

    fn lattice_index(&self, dx: isize, dy: isize) -> usize {
        let (lx, _) = lattice_dims(&self.grid);
        let ox = self.grid.nx() as isize - 1;
        let oy = self.grid.ny() as isize - 1;
        ((dy + oy) as usize) * lx + (dx + ox) as usize
    }

    /// `(||J||_L1, ||grad J||_L1)` by lattice quadrature.
    pub fn norms(&self) -> (f64, f64) {
        (self.norm_j_l1, self.norm_grad_j_l1)
    }
    pub fn norm_j_l1(&self) -> f64 {
        self.norm_j_l1
    }
    pub fn norm_grad_j_l1(&self) -> f64 {
        self.norm_grad_j_l1
    }

    /// `min_x a(x)`, the constant of the lower bound on `a`.
    pub fn beta(&self) -> f64 {
        self.a.min()
    }

    /// `(J * f)(x) = sum_y J(x - y) f(y) hx hy`, restricted to the domain.
    pub fn convolve(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check(f)?;
        Ok(self.apply(f, Which::J))
    }

    /// `(grad J * f)(x)` as its two Cartesian components at cell centers.
    pub fn grad_convolve(&self, f: &ScalarField) -> Result<(ScalarField, ScalarField)> {
        self.check(f)?;
        Ok((self.apply(f, Which::Gx), self.apply(f, Which::Gy)))
    }

    fn check(&self, f: &ScalarField) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn apply(&self, f: &ScalarField, which: Which) -> ScalarField {
        let hat = match which {
            Which::J => &self.j_hat,
            Which::Gx => &self.gx_hat,
            Which::Gy => &self.gy_hat,
        };
        let g = &self.grid;
        let (px, py) = (self.plans.nx, self.plans.ny);
        let mut buf = vec![Complex64::new(0.0, 0.0); px * py];
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                buf[j * px + i] = Complex64::new(f.get(i, j), 0.0);
            }
        }
        self.plans.transform(&mut buf, false);
        for (b, k) in buf.iter_mut().zip(hat) {
            *b *= k;
        }
        self.plans.transform(&mut buf, true);
        let scale = g.cell_area() / (px * py) as f64;
        let mut out = ScalarField::zeros(g);
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                out.set(i, j, buf[j * px + i].re * scale);
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Which {
    J,
    Gx,
    Gy,
}

fn lattice_dims(grid: &GridSpec) -> (usize, usize) {
    (2 * grid.nx() - 1, 2 * grid.ny() - 1)
}

/// Spectrum of a lattice array wrapped onto the padded periodic grid.
fn spectrum(grid: &GridSpec, plans: &Plans, lattice: &[f64]) -> Vec<Complex64> {
    let (lx, ly) = lattice_dims(grid);
    let (ox, oy) = (grid.nx() as isize - 1, grid.ny() as isize - 1);
    let (px, py) = (plans.nx as isize, plans.ny as isize);
    let mut buf = vec![Complex64::new(0.0, 0.0); (px * py) as usize];
    for l in 0..ly {
        for k in 0..lx {
            let dx = (k as isize - ox).rem_euclid(px);
            let dy = (l as isize - oy).rem_euclid(py);
            buf[(dy * px + dx) as usize] = Complex64::new(lattice[l * lx + k], 0.0);
        }
    }
    plans.transform(&mut buf, false);
    buf
}
