//! Semi-implicit time stepping of the coupled system, energy diagnostics and
//! trajectories.
//!
//! One step first advances `phi` with the convex part of the potential and
//! the local term `a phi` implicit, the concave and nonlocal parts explicit,
//! and the advective flux lagged. The implicit relation is solved for `mu`
//! by Newton's method; `phi` is then recovered from the conservative flux
//! form so that its mass is preserved to round-off. The velocity follows
//! from an implicit Stokes solve on divergence-free fields with explicit
//! skew-symmetric advection and the capillary force `mu grad(phi)`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficient::Coefficient;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::kernel::Kernel;
use crate::operators::{chemical_potential, Operators};
use crate::potential::{Potential, SplitPotential};
use crate::stencil::{capillary_force, face_average, flux_divergence, grad, skew_advection, strain_dissipation, stress_divergence, vector_laplacian, weighted_laplacian};

pub const CSV_HEADER: &str = "t,u_l2sq,phi_dist_sq,energy,mass,clamps,energy_residual";

const NEWTON_MAX_ITER: usize = 60;
const STOKES_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct SimParams {
    pub viscosity: Coefficient,
    pub mobility: Coefficient,
    pub dt: f64,
    pub forcing: VectorField,
    pub t_end: f64,
}

impl SimParams {
    pub fn new(grid: &GridSpec, viscosity: f64, mobility: f64, dt: f64, t_end: f64) -> Self {
        Self {
            viscosity: Coefficient::Constant(viscosity),
            mobility: Coefficient::Constant(mobility),
            dt,
            forcing: VectorField::zeros(grid),
            t_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: VectorField,
    pub phi: ScalarField,
}

impl State {
    pub fn new(u: VectorField, phi: ScalarField) -> Self {
        Self { t: 0.0, u, phi }
    }

    /// Resting fluid with uniform `phi = k`.
    pub fn constant(grid: &GridSpec, k: f64) -> Self {
        Self::new(VectorField::zeros(grid), ScalarField::constant(grid, k))
    }

    /// Resting fluid with `phi = k + p`, where `p` is i.i.d. uniform in
    /// `[-amplitude, amplitude]` with its mean removed.
    pub fn perturbed(grid: &GridSpec, k: f64, amplitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ScalarField::zeros(grid).map(|_| if amplitude > 0.0 { rng.random_range(-amplitude..=amplitude) } else { 0.0 });
        let phi = p.project_zero_mean().map(|x| x + k);
        Self::new(VectorField::zeros(grid), phi)
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: State,
    /// Chemical potential of the implicit relation.
    pub mu: ScalarField,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub u_l2sq: f64,
    pub phi_dist_sq: f64,
    pub energy: f64,
    pub mass: f64,
    pub clamps: u64,
    pub energy_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub final_state: State,
    pub steps: usize,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", s.t, s.u_l2sq, s.phi_dist_sq, s.energy, s.mass, s.clamps, s.energy_residual);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// `(t, ||u - u_ref||^2 + ||phi - phi_ref||^2)` for every sample.
    pub fn distance_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.u_l2sq + s.phi_dist_sq)).collect()
    }
}

/// Reference state for distance tracking.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub u: &'a VectorField,
    pub phi: &'a ScalarField,
}

/// A configured model: kernel, potential, coefficients and fast solvers.
#[derive(Debug, Clone)]
pub struct Simulator {
    grid: GridSpec,
    kernel: Kernel,
    potential: Potential,
    split: SplitPotential,
    params: SimParams,
    ops: Operators,
}

impl Simulator {
    pub fn new(kernel: Kernel, potential: Potential, params: SimParams) -> Result<Self> {
        let grid = *kernel.grid();
        if *params.forcing.grid() != grid {
            return Err(Error::GridMismatch);
        }
        params.viscosity.validate("viscosity")?;
        params.mobility.validate("mobility")?;
        if !(params.dt.is_finite() && params.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", params.dt)));
        }
        if !(params.t_end.is_finite() && params.t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!("T_end must be >= 0, got {}", params.t_end)));
        }
        if !params.forcing.is_no_slip() || !params.forcing.is_finite() {
            return Err(Error::InvalidArgument("forcing must be finite with zero wall-normal components".into()));
        }
        let split = potential.convex_split();
        Ok(Self {
            grid,
            ops: Operators::new(&grid),
            kernel,
            potential,
            split,
            params,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
    pub fn potential(&self) -> &Potential {
        &self.potential
    }
    pub fn params(&self) -> &SimParams {
        &self.params
    }
    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    /// Returns a copy with a different time step.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        let mut p = self.params.clone();
        p.dt = dt;
        Self::new(self.kernel.clone(), self.potential.clone(), p)
    }

    pub fn chemical_potential(&self, phi: &ScalarField) -> Result<ScalarField> {
        chemical_potential(phi, &self.kernel, &self.potential)
    }

    /// Largest admissible `dt` for velocity `u`.
    pub fn dt_limit(&self, u: &VectorField) -> f64 {
        0.5 * self.grid.hx().min(self.grid.hy()) / u.linf_norm().max(1.0)
    }

    fn check_state(&self, s: &State) -> Result<()> {
        if *s.u.grid() != self.grid || *s.phi.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if !s.u.is_finite() || !s.phi.is_finite() {
            return Err(Error::InvalidArgument("state contains non-finite values".into()));
        }
        if !s.u.is_no_slip() {
            return Err(Error::InvalidArgument("velocity violates the no-slip condition".into()));
        }
        if s.phi.linf_norm() >= 1.0 {
            return Err(Error::InvalidArgument("phi must lie strictly inside (-1, 1)".into()));
        }
        Ok(())
    }

    pub fn step(&self, s: &State) -> Result<StepOutput> {
        self.check_state(s)?;
        let dt = self.params.dt;
        let limit = self.dt_limit(&s.u);
        if dt > limit {
            return Err(Error::TimeStepTooLarge { dt, limit });
        }
        let (phi, mu, iterations) = self.phase_step(s)?;
        let u = self.momentum_step(s, &phi, &mu)?;
        Ok(StepOutput {
            state: State { t: s.t + dt, u, phi },
            mu,
            newton_iterations: iterations,
        })
    }

    pub(crate) fn mobility_faces(&self, phi: &ScalarField) -> VectorField {
        let mut m = face_average(&self.params.mobility.at_cells(phi));
        m.enforce_no_slip();
        m
    }

    /// Cahn-Hilliard half of the step. Returns `(phi^{n+1}, mu^{n+1}, newton iterations)`.
    fn phase_step(&self, s: &State) -> Result<(ScalarField, ScalarField, usize)> {
        let dt = self.params.dt;
        let g = self.grid;
        let area = g.cell_area();
        let kappa = self.split.kappa;
        let a = self.kernel.a();

        // explicit part of mu: J * phi^n + kappa phi^n
        let mut c = self.kernel.convolve(&s.phi)?;
        c.axpy(kappa, &s.phi)?;
        let mut rhs = s.phi.clone();
        rhs.axpy(-dt, &flux_divergence(&s.u, &s.phi))?;
        let mf = self.mobility_faces(&s.phi);
        let m_mean = mean_faces(&mf);

        // phi(mu) = S(mu + c) cellwise, with S the inverse of a s + G'(s)
        let invert = |mu: &ScalarField| -> (ScalarField, ScalarField) {
            let mut phi = ScalarField::zeros(&g);
            let mut d = ScalarField::zeros(&g);
            for k in 0..g.cells() {
                let (p, dp) = self.split.invert_convex(mu.values()[k] + c.values()[k], a.values()[k]);
                phi.values_mut()[k] = p;
                d.values_mut()[k] = dp;
            }
            (phi, d)
        };
        let residual = |mu: &ScalarField, phi: &ScalarField| -> ScalarField {
            let mut r = phi.clone();
            r.axpy(-dt, &weighted_laplacian(mu, &mf)).expect("same grid");
            r.axpy(-1.0, &rhs).expect("same grid");
            r
        };
        // convex functional whose gradient is the residual
        let merit = |mu: &ScalarField, phi: &ScalarField| -> f64 {
            let mut sum = 0.0;
            for k in 0..g.cells() {
                let w = mu.values()[k] + c.values()[k];
                let p = phi.values()[k];
                sum += w * p - 0.5 * a.values()[k] * p * p - self.split.g_value(p);
            }
            let gm = grad(mu);
            let diss: f64 = gm.u().iter().zip(mf.u()).chain(gm.v().iter().zip(mf.v())).map(|(x, m)| m * x * x).sum();
            (sum + 0.5 * dt * diss) * area - rhs.inner(mu).expect("same grid")
        };

        // start from the chemical potential that reproduces phi^n exactly
        let mut mu = ScalarField::zeros(&g);
        for k in 0..g.cells() {
            let p = s.phi.values()[k];
            mu.values_mut()[k] = a.values()[k] * p + self.split.theta * p.atanh() - c.values()[k];
        }
        let (mut phi, mut d) = invert(&mu);
        let mut r = residual(&mu, &phi);
        let scale = 1.0 + rhs.linf_norm();
        let tol = 1e-14 * scale;
        let mut iterations = 0;
        while r.linf_norm() > tol {
            if iterations == NEWTON_MAX_ITER {
                return Err(Error::NewtonFailure(format!("no convergence in {NEWTON_MAX_ITER} iterations, residual {:e}", r.linf_norm())));
            }
            iterations += 1;
            let delta = self.newton_direction(&r, &d, &mf, m_mean)?;
            let slope = r.inner(&delta)?;
            let f0 = merit(&mu, &phi);
            let r0 = r.linf_norm();
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let mut trial = mu.clone();
                trial.axpy(t, &delta)?;
                let (tp, td) = invert(&trial);
                if tp.linf_norm() < 1.0 {
                    let tr = residual(&trial, &tp);
                    let ok = merit(&trial, &tp) <= f0 + 1e-4 * t * slope || tr.linf_norm() < r0;
                    if ok {
                        mu = trial;
                        phi = tp;
                        d = td;
                        r = tr;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // stagnation at round-off level counts as convergence
                if r.linf_norm() <= 1e-10 * scale {
                    break;
                }
                return Err(Error::NewtonFailure(format!("line search failed at residual {:e}", r.linf_norm())));
            }
        }
        // conservative update: mass changes only by round-off
        let mut next = rhs.clone();
        next.axpy(dt, &weighted_laplacian(&mu, &mf))?;
        if next.linf_norm() >= 1.0 || !next.is_finite() {
            return Err(Error::NewtonFailure(format!("max |phi| = {} after the update", next.linf_norm())));
        }
        Ok((next, mu, iterations))
    }

    /// Solves `(diag(d) - dt div(m grad)) delta = -r` by preconditioned CG.
    fn newton_direction(&self, r: &ScalarField, d: &ScalarField, mf: &VectorField, m_mean: f64) -> Result<ScalarField> {
        let dt = self.params.dt;
        let neumann = self.ops.neumann();
        let d_mean = d.mean();
        let apply = |x: &ScalarField| {
            let mut y = x.zip_map(d, |a, b| a * b).expect("same grid");
            y.axpy(-dt, &weighted_laplacian(x, mf)).expect("same grid");
            y
        };
        let precond = |x: &ScalarField| neumann.solve(x, d_mean, dt * m_mean);
        let b = r.scaled(-1.0);
        let bnorm = b.l2_norm();
        let mut x = ScalarField::zeros(&self.grid);
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut res = b;
        let mut z = precond(&res);
        let mut p = z.clone();
        let mut rz = res.inner(&z)?;
        for _ in 0..500 {
            let ap = apply(&p);
            let alpha = rz / p.inner(&ap)?;
            x.axpy(alpha, &p)?;
            res.axpy(-alpha, &ap)?;
            if res.l2_norm() <= 1e-12 * bnorm {
                return Ok(x);
            }
            z = precond(&res);
            let rz_new = res.inner(&z)?;
            let beta = rz_new / rz;
            rz = rz_new;
            let mut np = z.clone();
            np.axpy(beta, &p)?;
            p = np;
        }
        Err(Error::NewtonFailure("linear solve for the Newton direction did not converge".into()))
    }

    fn momentum_step(&self, s: &State, phi: &ScalarField, mu: &ScalarField) -> Result<VectorField> {
        let dt = self.params.dt;
        let mut rhs = s.u.scaled(1.0 / dt);
        rhs.axpy(-1.0, &skew_advection(&s.u))?;
        rhs.axpy(1.0, &capillary_force(mu, phi))?;
        rhs.axpy(1.0, &self.params.forcing)?;
        let (_, nu_max) = self.params.viscosity.bounds();
        if !self.params.viscosity.is_constant() {
            // variable part of the stress, lagged
            let nu_cell = self.params.viscosity.at_cells(phi);
            rhs.axpy(1.0, &stress_divergence(&s.u, &nu_cell))?;
            rhs.axpy(-nu_max, &vector_laplacian(&s.u))?;
        }
        let (u, _) = self.ops.stokes_solve(&rhs, 1.0 / dt, nu_max, STOKES_TOL, 1000)?;
        Ok(u)
    }

    /// `E = |u|^2/2 + ((a phi, phi) - (J * phi, phi))/2 + sum F(phi)`.
    pub fn energy(&self, s: &State) -> Result<f64> {
        let kin = 0.5 * s.u.l2_norm().powi(2);
        Ok(kin + self.phase_energy(&s.phi)?)
    }

    fn phase_energy(&self, phi: &ScalarField) -> Result<f64> {
        let conv = self.kernel.convolve(phi)?;
        let aphi = phi.zip_map(self.kernel.a(), |p, a| a * p)?;
        let nonlocal = 0.5 * (aphi.inner(phi)? - conv.inner(phi)?);
        let bulk: f64 = phi.values().iter().map(|&p| self.potential.f_value(p)).sum::<f64>() * self.grid.cell_area();
        Ok(nonlocal + bulk)
    }

    /// Viscous dissipation `2 ||sqrt(nu) D u||^2`.
    pub fn viscous_dissipation(&self, u: &VectorField, phi: &ScalarField) -> f64 {
        match self.params.viscosity.constant_value() {
            Some(nu) => nu * u.h1_seminorm().powi(2),
            None => strain_dissipation(u, &self.params.viscosity.at_cells(phi)),
        }
    }

    /// `[E(after) - E(before)]/dt + 2||sqrt(nu) D u||^2 + ||sqrt(m) grad mu||^2 - (h, u)`
    /// with all dissipation terms at the new time level.
    pub fn energy_identity_residual(&self, before: &State, after: &State) -> Result<f64> {
        let dt = after.t - before.t;
        let dt = if dt > 0.0 { dt } else { self.params.dt };
        let de = (self.energy(after)? - self.energy(before)?) / dt;
        let mu = self.chemical_potential(&after.phi)?;
        let mf = self.mobility_faces(&before.phi);
        let gm = grad(&mu);
        let chem: f64 = gm.u().iter().zip(mf.u()).chain(gm.v().iter().zip(mf.v())).map(|(x, m)| m * x * x).sum::<f64>() * self.grid.cell_area();
        let visc = self.viscous_dissipation(&after.u, &after.phi);
        let work = self.params.forcing.inner(&after.u)?;
        Ok(de + visc + chem - work)
    }

    fn sample(&self, s: &State, reference: Option<Reference<'_>>, residual: f64) -> Result<Sample> {
        let (u_l2sq, phi_dist_sq) = match reference {
            Some(r) => (s.u.sub(r.u)?.l2_norm().powi(2), s.phi.sub(r.phi)?.l2_norm().powi(2)),
            None => (s.u.l2_norm().powi(2), f64::NAN),
        };
        Ok(Sample {
            t: s.t,
            u_l2sq,
            phi_dist_sq,
            energy: self.energy(s)?,
            mass: s.phi.integral(),
            clamps: self.potential.clamp_count(),
            energy_residual: residual,
        })
    }

    /// Number of steps to reach `T_end`.
    pub fn step_count(&self) -> usize {
        (self.params.t_end / self.params.dt).round() as usize
    }

    /// Advances `initial` to `T_end`, sampling every `sample_every` steps and
    /// always at the final step.
    pub fn evolve(&self, initial: &State, sample_every: usize, reference: Option<Reference<'_>>) -> Result<Trajectory> {
        self.evolve_with(initial, sample_every, reference, |_, _, _| Ok(()))
    }

    /// `evolve` with a callback `(step, before, after)` run after every step.
    pub fn evolve_with(
        &self,
        initial: &State,
        sample_every: usize,
        reference: Option<Reference<'_>>,
        mut on_step: impl FnMut(usize, &State, &State) -> Result<()>,
    ) -> Result<Trajectory> {
        self.check_state(initial)?;
        if let Some(r) = reference {
            if *r.u.grid() != self.grid || *r.phi.grid() != self.grid {
                return Err(Error::GridMismatch);
            }
        }
        let every = sample_every.max(1);
        let steps = self.step_count();
        let mut samples = vec![self.sample(initial, reference, 0.0)?];
        let mut state = initial.clone();
        for n in 1..=steps {
            let out = self.step(&state).map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
            on_step(n, &state, &out.state)?;
            if n % every == 0 || n == steps {
                let r = self.energy_identity_residual(&state, &out.state)?;
                samples.push(self.sample(&out.state, reference, r)?);
            }
            state = out.state;
        }
        Ok(Trajectory {
            samples,
            final_state: state,
            steps,
        })
    }
}

fn mean_faces(m: &VectorField) -> f64 {
    let g = m.grid();
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 0..g.ny() {
        for i in 1..g.nx() {
            sum += m.u_at(i, j);
            n += 1;
        }
    }
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            sum += m.v_at(i, j);
            n += 1;
        }
    }
    sum / n as f64
}
