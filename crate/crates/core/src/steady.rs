//! Stationary states by pseudo-time marching, with optional Jacobian-free
//! Newton refinement, and their weak-form residuals.

use std::f64::consts::PI;

use crate::dynamics::{Simulator, State};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::potential::check_assumptions;
use crate::stencil::{capillary_force, curl_of, flux_divergence, skew_advection, stress_divergence, vector_laplacian, weighted_laplacian};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyConfig {
    /// Prescribed mean of `phi`.
    pub k: f64,
    pub tol: f64,
    pub max_steps: usize,
    /// Pseudo-time step.
    pub dt: f64,
    /// Jacobian-free Newton refinement after the march.
    pub newton: bool,
    pub seed: u64,
    /// Amplitude of the zero-mean initial perturbation.
    pub amplitude: f64,
}

impl SteadyConfig {
    pub fn new(k: f64, dt: f64) -> Self {
        Self {
            k,
            tol: 1e-9,
            max_steps: 100_000,
            dt,
            newton: false,
            seed: 0,
            amplitude: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakResiduals {
    pub r_phi: f64,
    pub r_mu: f64,
    pub r_u: f64,
}

impl WeakResiduals {
    pub fn max(&self) -> f64 {
        self.r_phi.max(self.r_mu).max(self.r_u)
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub u_e: VectorField,
    pub phi_e: ScalarField,
    pub mu_e: ScalarField,
    /// `mu - mean(F'(phi))`, kept as a diagnostic.
    pub mu0: ScalarField,
    pub k: f64,
    pub residuals: WeakResiduals,
    /// Last pseudo-time increment `max(||dphi||, ||du||) / dt`.
    pub march_residual: f64,
    pub steps: usize,
    pub newton_iterations: usize,
    pub seed: u64,
}

impl SteadyState {
    /// Builds a steady state from given fields, recomputing `mu` and the residuals.
    pub fn from_fields(sim: &Simulator, u_e: VectorField, phi_e: ScalarField, seed: u64) -> Result<Self> {
        let mu_e = sim.chemical_potential(&phi_e)?;
        let residuals = weak_residuals(sim, &u_e, &phi_e, &mu_e)?;
        let fp_mean = phi_e.map(|p| sim.potential().f_prime(p)).mean();
        let mu0 = mu_e.map(|m| m - fp_mean);
        Ok(Self {
            k: phi_e.mean(),
            u_e,
            phi_e,
            mu_e,
            mu0,
            residuals,
            march_residual: f64::NAN,
            steps: 0,
            newton_iterations: 0,
            seed,
        })
    }

    pub fn state(&self) -> State {
        State::new(self.u_e.clone(), self.phi_e.clone())
    }
}

/// `cos(p pi x / Lx) cos(q pi y / Ly)` for `p, q = 0..3`.
pub fn scalar_test_functions(g: &GridSpec) -> Vec<ScalarField> {
    let mut out = Vec::with_capacity(16);
    for q in 0..4 {
        for p in 0..4 {
            let (kx, ky) = (p as f64 * PI / g.lx(), q as f64 * PI / g.ly());
            out.push(ScalarField::from_fn(g, |x, y| (kx * x).cos() * (ky * y).cos()));
        }
    }
    out
}

/// Discrete curls of `sin(p pi x / Lx) sin(q pi y / Ly)` for `p, q = 1..4`.
pub fn solenoidal_test_functions(g: &GridSpec) -> Vec<VectorField> {
    let mut out = Vec::with_capacity(16);
    for q in 1..=4 {
        for p in 1..=4 {
            let (kx, ky) = (p as f64 * PI / g.lx(), q as f64 * PI / g.ly());
            out.push(curl_of(g, |x, y| (kx * x).sin() * (ky * y).sin()));
        }
    }
    out
}

/// Solenoidal body force: the discrete curl of
/// `amplitude sin^2(pi x / Lx) sin^2(pi y / Ly)`.
pub fn solenoidal_forcing(g: &GridSpec, amplitude: f64) -> VectorField {
    let (lx, ly) = (g.lx(), g.ly());
    curl_of(g, |x, y| amplitude * (PI * x / lx).sin().powi(2) * (PI * y / ly).sin().powi(2))
}

/// `||h||_{V'} <= ||h|| / sqrt(lambda1)`.
pub fn forcing_dual_norm(h: &VectorField, lambda1: f64) -> Result<f64> {
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda1 must be > 0, got {lambda1}")));
    }
    Ok(h.l2_norm() / lambda1.sqrt())
}

/// Residuals of the three weak equations, each the largest
/// `|residual(test)| / ||test||_V` over the 16 test functions.
pub fn weak_residuals(sim: &Simulator, u: &VectorField, phi: &ScalarField, mu: &ScalarField) -> Result<WeakResiduals> {
    let g = *sim.grid();
    let p = sim.params();
    let mf = sim.mobility_faces(phi);
    // u . grad phi - div(m grad mu), as a cell field
    let mut eq_phi = flux_divergence(u, phi);
    eq_phi.axpy(-1.0, &weighted_laplacian(mu, &mf))?;
    let eq_mu = mu.sub(&sim.chemical_potential(phi)?)?;
    // convection - viscous stress - capillary force - forcing, as a face field
    let mut eq_u = skew_advection(u);
    match p.viscosity.constant_value() {
        Some(nu) => eq_u.axpy(-nu, &vector_laplacian(u))?,
        None => eq_u.axpy(-1.0, &stress_divergence(u, &p.viscosity.at_cells(phi)))?,
    }
    eq_u.axpy(-1.0, &capillary_force(mu, phi))?;
    eq_u.axpy(-1.0, &p.forcing)?;

    let mut r_phi: f64 = 0.0;
    let mut r_mu: f64 = 0.0;
    for psi in scalar_test_functions(&g) {
        let norm = (psi.l2_norm().powi(2) + psi.h1_seminorm().powi(2)).sqrt();
        r_phi = r_phi.max(eq_phi.inner(&psi)?.abs() / norm);
        r_mu = r_mu.max(eq_mu.inner(&psi)?.abs() / norm);
    }
    let mut r_u: f64 = 0.0;
    for v in solenoidal_test_functions(&g) {
        r_u = r_u.max(eq_u.inner(&v)?.abs() / v.h1_seminorm());
    }
    Ok(WeakResiduals { r_phi, r_mu, r_u })
}

fn march_increment(before: &State, after: &State, dt: f64) -> Result<f64> {
    let dp = after.phi.sub(&before.phi)?.l2_norm();
    let du = after.u.sub(&before.u)?.l2_norm();
    Ok(dp.max(du) / dt)
}

/// Marches the transient system with constant forcing from
/// `k + zero-mean perturbation` until the pseudo-time increment and all weak
/// residuals fall below `cfg.tol`.
pub fn steady_solve(sim: &Simulator, cfg: &SteadyConfig) -> Result<SteadyState> {
    if !(cfg.k > -1.0 && cfg.k < 1.0) {
        return Err(Error::InvalidArgument(format!("mean k must lie in (-1, 1), got {}", cfg.k)));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("steady tolerance must be > 0, got {}", cfg.tol)));
    }
    if cfg.amplitude < 0.0 || cfg.k.abs() + cfg.amplitude >= 1.0 {
        return Err(Error::InvalidArgument("initial perturbation must keep phi inside (-1, 1)".into()));
    }
    let p = sim.params();
    let report = check_assumptions(sim.potential(), sim.kernel(), &p.viscosity, &p.mobility);
    if !report.all_pass() {
        let failed: Vec<_> = report.failures().map(|c| format!("{} ({})", c.label, c.detail)).collect();
        return Err(Error::AssumptionsFailed(failed.join("; ")));
    }
    let march = sim.with_dt(cfg.dt)?;
    let g = *sim.grid();
    let mut state = State::perturbed(&g, cfg.k, cfg.amplitude, cfg.seed);
    let mut inc = f64::INFINITY;
    let mut residuals = WeakResiduals {
        r_phi: f64::INFINITY,
        r_mu: f64::INFINITY,
        r_u: f64::INFINITY,
    };
    let mut steps = 0;
    let mut newton_iterations = 0;
    let mut converged = false;
    while steps < cfg.max_steps {
        let out = march.step(&state).map_err(|e| Error::Step { step: steps + 1, source: Box::new(e) })?;
        steps += 1;
        inc = march_increment(&state, &out.state, cfg.dt)?;
        state = out.state;
        if inc < cfg.tol {
            if cfg.newton {
                let (refined, its) = newton_refine(&march, &state, cfg.tol)?;
                state = refined;
                newton_iterations += its;
                let next = march.step(&state)?.state;
                inc = march_increment(&state, &next, cfg.dt)?;
            }
            let mu = sim.chemical_potential(&state.phi)?;
            residuals = weak_residuals(sim, &state.u, &state.phi, &mu)?;
            if residuals.max() < cfg.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        if !residuals.r_phi.is_finite() {
            let mu = sim.chemical_potential(&state.phi)?;
            residuals = weak_residuals(sim, &state.u, &state.phi, &mu)?;
        }
        return Err(Error::SteadyNotConverged {
            steps,
            r_phi: residuals.r_phi,
            r_mu: residuals.r_mu,
            r_u: residuals.r_u,
            march: inc,
        });
    }
    let mut out = SteadyState::from_fields(sim, state.u, state.phi, cfg.seed)?;
    out.k = cfg.k;
    out.march_residual = inc;
    out.steps = steps;
    out.newton_iterations = newton_iterations;
    Ok(out)
}

/// Packs the unknowns: cell values of `phi`, then all face values of `u`.
fn pack(s: &State) -> Vec<f64> {
    let mut x = s.phi.values().to_vec();
    x.extend_from_slice(s.u.u());
    x.extend_from_slice(s.u.v());
    x
}

fn unpack(g: &GridSpec, x: &[f64]) -> Result<State> {
    let n = g.cells();
    let nu = (g.nx() + 1) * g.ny();
    let phi = ScalarField::from_values(g, x[..n].to_vec())?;
    let mut u = VectorField::zeros(g);
    u.u_mut().copy_from_slice(&x[n..n + nu]);
    u.v_mut().copy_from_slice(&x[n + nu..]);
    u.enforce_no_slip();
    Ok(State::new(u, phi))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Newton iteration on `F(x) = (step(x) - x) / dt` with GMRES and
/// finite-difference Jacobian-vector products.
fn newton_refine(sim: &Simulator, start: &State, tol: f64) -> Result<(State, usize)> {
    let g = *sim.grid();
    let dt = sim.params().dt;
    let ncell = g.cells();
    let eval = |x: &[f64]| -> Result<Vec<f64>> {
        let s = unpack(&g, x)?;
        let next = sim.step(&s)?.state;
        Ok(pack(&next).iter().zip(x).map(|(a, b)| (a - b) / dt).collect())
    };
    let mut x = pack(start);
    let mut f = eval(&x)?;
    let mut its = 0;
    for _ in 0..10 {
        let fnorm = norm(&f);
        if fnorm * g.cell_area().sqrt() < 1e-3 * tol {
            break;
        }
        its += 1;
        let xnorm = norm(&x);
        let jv = |v: &[f64]| -> Result<Vec<f64>> {
            // perturb phi only in zero-mean directions so the mass is fixed
            let mut v = v.to_vec();
            let mean = v[..ncell].iter().sum::<f64>() / ncell as f64;
            v[..ncell].iter_mut().for_each(|e| *e -= mean);
            let vn = norm(&v);
            if vn == 0.0 {
                return Ok(vec![0.0; v.len()]);
            }
            let eps = 1e-7 * (1.0 + xnorm) / vn;
            let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
            let fp = eval(&xp)?;
            Ok(fp.iter().zip(&f).map(|(a, b)| (a - b) / eps).collect())
        };
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = gmres(&jv, &rhs, 1e-6, 40, 5)?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..10 {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + t * b).collect();
            if trial[..ncell].iter().all(|p| p.abs() < 1.0) {
                if let Ok(ft) = eval(&trial) {
                    if norm(&ft) < fnorm {
                        x = trial;
                        f = ft;
                        improved = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((unpack(&g, &x)?, its))
}

/// Restarted GMRES for `A x = b` with a matrix-free `A`.
fn gmres(a: &dyn Fn(&[f64]) -> Result<Vec<f64>>, b: &[f64], rel_tol: f64, restart: usize, cycles: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    for _ in 0..cycles {
        let ax = a(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm(&r);
        if beta <= rel_tol * bnorm {
            return Ok(x);
        }
        let mut basis = vec![r.iter().map(|v| v / beta).collect::<Vec<f64>>()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut e = vec![0.0; restart + 1];
        e[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let mut w = a(&basis[k])?;
            for (i, q) in basis.iter().enumerate() {
                let hik: f64 = w.iter().zip(q).map(|(p, r)| p * r).sum();
                h[i][k] = hik;
                w.iter_mut().zip(q).for_each(|(p, r)| *p -= hik * r);
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            e[k + 1] = -sn[k] * e[k];
            e[k] *= cs[k];
            k_used = k + 1;
            if e[k + 1].abs() <= rel_tol * bnorm || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (e[i] - s) / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&basis[j]).for_each(|(p, q)| *p += yj * q);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SimParams;
    use crate::kernel::{Kernel, KernelFamily, KernelSpec};
    use crate::potential::{Potential, PotentialSpec};

    fn sim(n: usize, forcing: f64, nu: f64) -> Simulator {
        let g = GridSpec::new(1.0, 1.0, n, n).unwrap();
        let k = Kernel::build(&KernelSpec::new(KernelFamily::Gaussian, 0.05, 0.2), &g).unwrap();
        let p = Potential::new(PotentialSpec::new(1.0, 0.0)).unwrap();
        let mut params = SimParams::new(&g, nu, 1.0, 1e-2, 0.0);
        params.forcing = solenoidal_forcing(&g, forcing);
        Simulator::new(k, p, params).unwrap()
    }

    #[test]
    fn gmres_solves_a_small_system() {
        let a = |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![4.0 * x[0] + x[1], x[0] + 3.0 * x[1] - x[2], 2.0 * x[2] + x[0]]) };
        let x = gmres(&a, &[1.0, 2.0, 3.0], 1e-12, 5, 2).unwrap();
        let r = a(&x).unwrap();
        assert!((r[0] - 1.0).abs() + (r[1] - 2.0).abs() + (r[2] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_forcing_gives_the_constant_state() {
        let s = sim(16, 0.0, 1.0);
        let cfg = SteadyConfig::new(0.2, 1e-2);
        let st = steady_solve(&s, &cfg).unwrap();
        assert!((st.phi_e.mean() - 0.2).abs() < 1e-10);
        assert!(st.phi_e.map(|p| p - 0.2).linf_norm() < 1e-8);
        assert!(st.u_e.linf_norm() < 1e-8);
        assert!(st.residuals.max() < 1e-9);
        let exact = SteadyState::from_fields(&s, VectorField::zeros(s.grid()), ScalarField::constant(s.grid(), 0.2), 0).unwrap();
        assert!(exact.residuals.max() < 1e-12);
        let fp = s.potential().f_prime(0.2);
        assert!(exact.mu_e.values().iter().all(|m| (m - fp).abs() < 1e-13));
    }

    #[test]
    fn forced_state_respects_the_a_priori_bound() {
        let s = sim(16, 0.5, 1.0);
        let cfg = SteadyConfig::new(0.0, 1e-2);
        let st = steady_solve(&s, &cfg).unwrap();
        assert!(st.u_e.l2_norm() > 1e-4);
        let lam = 2.0 * PI * PI;
        let bound = forcing_dual_norm(&s.params().forcing, lam).unwrap();
        assert!(st.u_e.h1_seminorm() <= bound);
        // fixed point of the stepper
        let next = s.with_dt(1e-2).unwrap().step(&st.state()).unwrap().state;
        assert!(march_increment(&st.state(), &next, 1e-2).unwrap() <= 10.0 * cfg.tol);
    }

    #[test]
    fn newton_refinement_converges() {
        let s = sim(16, 0.5, 1.0);
        let mut cfg = SteadyConfig::new(0.0, 1e-2);
        cfg.newton = true;
        cfg.tol = 1e-10;
        let st = steady_solve(&s, &cfg).unwrap();
        assert!(st.residuals.max() < 1e-10);
    }

    #[test]
    fn residual_grows_linearly_under_perturbation() {
        let s = sim(16, 0.0, 1.0);
        let g = *s.grid();
        let base = ScalarField::constant(&g, 0.1);
        let mu = s.chemical_potential(&base).unwrap();
        let mode = ScalarField::from_fn(&g, |x, y| (PI * x).cos() * (PI * y).cos());
        let r = |eps: f64| {
            let mut p = base.clone();
            p.axpy(eps, &mode).unwrap();
            weak_residuals(&s, &VectorField::zeros(&g), &p, &mu).unwrap().r_mu
        };
        let (a, b) = (r(1e-4), r(2e-4));
        assert!((b / a - 2.0).abs() < 1e-3, "{a} {b}");
    }

    #[test]
    fn dual_norm_bound_is_tight_for_the_stokes_eigenfunction() {
        let g = GridSpec::new(1.0, 1.0, 32, 32).unwrap();
        let ops = crate::operators::Operators::new(&g);
        let (e, h) = ops.stokes_eigenpair().unwrap();
        let (x, _) = ops.stokes_solve(&h, 0.0, 1.0, 1e-13, 500).unwrap();
        let exact = h.inner(&x).unwrap().sqrt();
        let bound = forcing_dual_norm(&h, e.lambda1).unwrap();
        assert!((exact - bound).abs() < 1e-6 * bound);
        assert_eq!(forcing_dual_norm(&VectorField::zeros(&g), 4.0).unwrap(), 0.0);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let s = sim(16, 0.0, 1.0);
        assert!(steady_solve(&s, &SteadyConfig::new(1.0, 1e-2)).is_err());
        let mut cfg = SteadyConfig::new(0.0, 1e-2);
        cfg.tol = 0.0;
        assert!(steady_solve(&s, &cfg).is_err());
    }
}
