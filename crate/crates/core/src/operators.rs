//! Chemical potential, zero-mean Neumann inverse and its dual norm, the
//! Helmholtz projection, the constrained Stokes solve, the skew trilinear
//! form and the spectral constants of the rectangle.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::kernel::Kernel;
use crate::potential::Potential;
use crate::spectral::{NeumannSolver, VectorHelmholtzSolver};
use crate::stencil::{advect, curl_of, div, grad, vector_laplacian};

/// Largest admissible `|mean(f)|` for the Neumann problem.
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// `mu = a phi - J * phi + F'(phi)`.
pub fn chemical_potential(phi: &ScalarField, kernel: &Kernel, potential: &Potential) -> Result<ScalarField> {
    let conv = kernel.convolve(phi)?;
    let a = kernel.a();
    let mut mu = ScalarField::zeros(phi.grid());
    for (k, m) in mu.values_mut().iter_mut().enumerate() {
        let p = phi.values()[k];
        *m = a.values()[k] * p - conv.values()[k] + potential.f_prime(p);
    }
    Ok(mu)
}

/// Skew-symmetrized trilinear form
/// `b(u, v, w) = ((u . grad) v, w) / 2 - ((u . grad) w, v) / 2`.
pub fn trilinear(u: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64> {
    u.check_grid(v)?;
    u.check_grid(w)?;
    Ok(0.5 * (advect(u, v).inner(w)? - advect(u, w).inner(v)?))
}

/// `C_Omega = 1 / sqrt(pi^2 min(1/Lx^2, 1/Ly^2))`.
pub fn poincare_constant(grid: &GridSpec) -> f64 {
    let mu1 = PI * PI * (1.0 / (grid.lx() * grid.lx())).min(1.0 / (grid.ly() * grid.ly()));
    1.0 / mu1.sqrt()
}

/// Dirichlet-Laplacian bound `pi^2 (1/Lx^2 + 1/Ly^2)` on the first Stokes eigenvalue.
pub fn stokes_lambda1_lower_bound(grid: &GridSpec) -> f64 {
    PI * PI * (1.0 / (grid.lx() * grid.lx()) + 1.0 / (grid.ly() * grid.ly()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesEigen {
    /// Smallest eigenvalue of the discrete Stokes operator.
    pub lambda1: f64,
    pub lambda1_lower_bound: f64,
    pub iterations: usize,
}

impl StokesEigen {
    /// The smaller of the computed value and the analytic bound.
    pub fn conservative(&self) -> f64 {
        self.lambda1.min(self.lambda1_lower_bound)
    }
}

/// Fast solvers bound to one grid.
#[derive(Clone)]
pub struct Operators {
    grid: GridSpec,
    neumann: NeumannSolver,
    helmholtz: VectorHelmholtzSolver,
}

impl std::fmt::Debug for Operators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Operators").field("grid", &self.grid).finish_non_exhaustive()
    }
}

impl Operators {
    pub fn new(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            neumann: NeumannSolver::new(grid),
            helmholtz: VectorHelmholtzSolver::new(grid),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn neumann(&self) -> &NeumannSolver {
        &self.neumann
    }

    /// Zero-mean solution of `-Delta u = f` with homogeneous Neumann data.
    pub fn neumann_solve(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check_scalar(f)?;
        let mean = f.mean();
        if mean.abs() > MEAN_TOLERANCE {
            return Err(Error::NonZeroMean { mean });
        }
        Ok(self.neumann.solve(f, 0.0, 1.0))
    }

    /// `sqrt((f, B^{-1} f))`.
    pub fn dual_norm_v0(&self, f: &ScalarField) -> Result<f64> {
        let u = self.neumann_solve(f)?;
        Ok(f.inner(&u)?.max(0.0).sqrt())
    }

    /// `w - grad p` with `Delta p = div w`.
    pub fn helmholtz_project(&self, w: &VectorField) -> Result<VectorField> {
        self.check_vector(w)?;
        let d = div(w);
        let p = self.neumann.solve(&d.scaled(-1.0), 0.0, 1.0);
        w.sub(&grad(&p))
    }

    fn project(&self, w: &VectorField) -> VectorField {
        let d = div(w);
        let p = self.neumann.solve(&d.scaled(-1.0), 0.0, 1.0);
        let mut out = w.clone();
        out.axpy(-1.0, &grad(&p)).expect("same grid");
        out
    }

    /// Solves `P (alpha - beta Delta) u = P f` for divergence-free no-slip
    /// `u`, by conjugate gradients on the solenoidal subspace preconditioned
    /// with `P (alpha - beta Delta)^{-1} P`. The tolerance is relative to
    /// `||f||`, since `P f` may be far below the round-off level of `f`.
    /// Returns `u` and the iteration count.
    pub fn stokes_solve(&self, f: &VectorField, alpha: f64, beta: f64, rel_tol: f64, max_iter: usize) -> Result<(VectorField, usize)> {
        self.check_vector(f)?;
        let apply = |x: &VectorField| {
            let mut y = x.scaled(alpha);
            y.axpy(-beta, &vector_laplacian(x)).expect("same grid");
            self.project(&y)
        };
        let precond = |r: &VectorField| self.project(&self.helmholtz.solve(r, alpha, beta));

        let b = self.project(f);
        let bnorm = f.l2_norm();
        let mut x = VectorField::zeros(&self.grid);
        if b.l2_norm() <= rel_tol * bnorm {
            return Ok((x, 0));
        }
        let mut r = b;
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for it in 1..=max_iter {
            let ap = apply(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                if r.l2_norm() <= 1e3 * rel_tol * bnorm {
                    return Ok((self.project(&x), it));
                }
                return Err(Error::NoConvergence {
                    what: "constrained Stokes solve",
                    iterations: it,
                    residual: r.l2_norm() / bnorm,
                });
            }
            let step = rz / pap;
            x.axpy(step, &p)?;
            r.axpy(-step, &ap)?;
            let res = r.l2_norm() / bnorm;
            if res <= rel_tol {
                // remove the round-off divergence accumulated by the updates
                return Ok((self.project(&x), it));
            }
            z = precond(&r);
            let rz_new = dot(&r, &z);
            let gamma = rz_new / rz;
            rz = rz_new;
            let mut np = z.clone();
            np.axpy(gamma, &p)?;
            p = np;
        }
        Err(Error::NoConvergence {
            what: "constrained Stokes solve",
            iterations: max_iter,
            residual: r.l2_norm() / bnorm,
        })
    }

    /// First eigenvalue of the discrete Stokes operator by inverse iteration
    /// with Rayleigh quotients, to `1e-8` relative change.
    pub fn stokes_lambda1(&self) -> Result<StokesEigen> {
        Ok(self.stokes_eigenpair()?.0)
    }

    /// `stokes_lambda1` together with the unit-norm eigenfunction.
    pub fn stokes_eigenpair(&self) -> Result<(StokesEigen, VectorField)> {
        let g = self.grid;
        let (lx, ly) = (g.lx(), g.ly());
        let mut x = curl_of(&g, |px, py| (PI * px / lx).sin().powi(2) * (PI * py / ly).sin().powi(2));
        x = x.scaled(1.0 / x.l2_norm());
        let rayleigh = |x: &VectorField| x.h1_seminorm().powi(2) / x.l2_norm().powi(2);
        let mut lambda = rayleigh(&x);
        let max_iter = 10_000;
        for it in 1..=max_iter {
            let (y, _) = self.stokes_solve(&x, 0.0, 1.0, 1e-13, 1000)?;
            x = y.scaled(1.0 / y.l2_norm());
            let next = rayleigh(&x);
            let change = (next - lambda).abs() / next;
            lambda = next;
            if change < 1e-8 && it > 1 {
                let e = StokesEigen {
                    lambda1: lambda,
                    lambda1_lower_bound: stokes_lambda1_lower_bound(&g),
                    iterations: it,
                };
                return Ok((e, x));
            }
        }
        Err(Error::NoConvergence {
            what: "Stokes inverse iteration",
            iterations: max_iter,
            residual: lambda,
        })
    }

    fn check_scalar(&self, f: &ScalarField) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn check_vector(&self, w: &VectorField) -> Result<()> {
        if *w.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

fn dot(a: &VectorField, b: &VectorField) -> f64 {
    a.inner(b).expect("same grid")
}
