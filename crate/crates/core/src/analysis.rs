//! Uniqueness and exponential-stability certificates, the two-rate decay
//! combiner, and empirical decay checks.

use std::fmt::Write as _;

use crate::dynamics::{Simulator, State, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::operators::poincare_constant;
use crate::potential::compute_c0;
use crate::steady::{forcing_dual_norm, SteadyState};
use crate::stencil::{grad, to_centers};

/// Tolerance on the difference of initial and steady means.
pub const MEAN_MATCH_TOLERANCE: f64 = 1e-10;
/// Samples with `d <= SATURATION_RATIO * max d` count as converged to round-off.
pub const SATURATION_RATIO: f64 = 1e-20;
/// Minimum number of samples for a rate fit.
pub const MIN_FIT_SAMPLES: usize = 20;

/// Numeric inputs of the certificates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub lambda1: f64,
    pub c_omega: f64,
    pub c0: f64,
    pub norm_j_l1: f64,
    pub norm_grad_j_l1: f64,
    pub nu: f64,
    pub m: f64,
    pub kappa: f64,
    /// Generic embedding constant. Not quantified by the theory; 1 by default.
    pub c_embed: f64,
    /// Upper bound for the dual norm of the forcing.
    pub h_dual: f64,
}

impl Constants {
    /// Computes every constant of a constant-coefficient configuration, with
    /// `lambda1` supplied by the caller.
    pub fn from_simulator(sim: &Simulator, lambda1: f64, c_embed: f64) -> Result<Self> {
        let p = sim.params();
        let (Some(nu), Some(m)) = (p.viscosity.constant_value(), p.mobility.constant_value()) else {
            return Err(Error::CertificateRefused("certificates require constant viscosity and mobility".into()));
        };
        let (norm_j_l1, norm_grad_j_l1) = sim.kernel().norms();
        let c = Self {
            lambda1,
            c_omega: poincare_constant(sim.grid()),
            c0: compute_c0(sim.potential(), sim.kernel())?,
            norm_j_l1,
            norm_grad_j_l1,
            nu,
            m,
            kappa: sim.potential().convex_split().kappa,
            c_embed,
            h_dual: forcing_dual_norm(&p.forcing, lambda1)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda1", self.lambda1),
            ("C_Omega", self.c_omega),
            ("C0", self.c0),
            ("nu", self.nu),
            ("m", self.m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let nonneg = [
            ("||J||_L1", self.norm_j_l1),
            ("||grad J||_L1", self.norm_grad_j_l1),
            ("kappa", self.kappa),
            ("h dual norm", self.h_dual),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative and finite, got {v}")));
            }
        }
        if !(self.c_embed >= 1.0 && self.c_embed.is_finite()) {
            return Err(Error::InvalidArgument(format!("C_embed must be >= 1, got {}", self.c_embed)));
        }
        Ok(())
    }
}

/// Norms of a steady state entering the stability conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyNorms {
    pub u_l2: f64,
    pub grad_u_l2: f64,
    pub u_linf: f64,
    /// `(sum |grad mu|^4 dx)^(1/4)` with the gradient averaged to cell centers.
    pub grad_mu_l4: f64,
    pub phi_mean: f64,
}

impl SteadyNorms {
    pub fn of(u: &VectorField, phi: &ScalarField, mu: &ScalarField) -> Self {
        let (gx, gy) = to_centers(&grad(mu));
        let area = mu.grid().cell_area();
        let sum: f64 = gx.values().iter().zip(gy.values()).map(|(a, b)| (a * a + b * b).powi(2)).sum();
        Self {
            u_l2: u.l2_norm(),
            grad_u_l2: u.h1_seminorm(),
            u_linf: u.linf_norm(),
            grad_mu_l4: (sum * area).powf(0.25),
            phi_mean: phi.mean(),
        }
    }

    pub fn of_steady(s: &SteadyState) -> Self {
        Self::of(&s.u_e, &s.phi_e, &s.mu_e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    Uniqueness2d,
    Uniqueness3d,
    Stability2d,
}

impl CertificateKind {
    pub fn name(&self) -> &'static str {
        match self {
            CertificateKind::Uniqueness2d => "uniqueness2d",
            CertificateKind::Uniqueness3d => "uniqueness3d",
            CertificateKind::Stability2d => "stability2d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniqueness2d" => Some(CertificateKind::Uniqueness2d),
            "uniqueness3d" => Some(CertificateKind::Uniqueness3d),
            "stability2d" => Some(CertificateKind::Stability2d),
            _ => None,
        }
    }
}

/// One inequality `lhs > rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Condition {
    fn greater(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            pass: lhs > rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub conditions: Vec<Condition>,
    pub rho: Option<f64>,
    /// Decay amplitude `M`.
    pub m_bound: Option<f64>,
    pub overall: bool,
    /// `d(0)` of the initial data the stability certificate was issued for.
    pub initial_distance: Option<f64>,
    /// Alternative constants and remarks, printed after the main report.
    pub notes: Vec<(String, String)>,
}

impl Certificate {
    fn new(kind: CertificateKind, conditions: Vec<Condition>) -> Self {
        let overall = conditions.iter().all(|c| c.pass);
        Self {
            kind,
            conditions,
            rho: None,
            m_bound: None,
            overall,
            initial_distance: None,
            notes: Vec::new(),
        }
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// Flat text report: `kind`, one `name lhs rhs pass|fail` line per
    /// condition, then `rho`, `M`, `overall`, then `note.*` lines.
    pub fn to_report(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| format!("{x:e}"));
        let verdict = |b: bool| if b { "pass" } else { "fail" };
        let mut out = String::new();
        let _ = writeln!(out, "kind {}", self.kind.name());
        for c in &self.conditions {
            let _ = writeln!(out, "{} {:e} {:e} {}", c.name, c.lhs, c.rhs, verdict(c.pass));
        }
        let _ = writeln!(out, "rho {}", opt(self.rho));
        let _ = writeln!(out, "M {}", opt(self.m_bound));
        let _ = writeln!(out, "overall {}", verdict(self.overall));
        for (k, v) in &self.notes {
            let _ = writeln!(out, "note.{k} {v}");
        }
        out
    }
}

/// Sufficient conditions for uniqueness of the steady state in dimension 2 or 3.
pub fn uniqueness_certificate(c: &Constants, dim: u32) -> Result<Certificate> {
    c.validate()?;
    let kind = match dim {
        2 => CertificateKind::Uniqueness2d,
        3 => CertificateKind::Uniqueness3d,
        _ => return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}"))),
    };
    let (nu, m, l1, c0, ce) = (c.nu, c.m, c.lambda1, c.c0, c.c_embed);
    let gj2 = c.norm_grad_j_l1.powi(2);
    let h = c.h_dual;
    let (h_factor, h2_factor) = if dim == 2 {
        (2.0 * 2f64.sqrt() / l1.sqrt(), (2.0 / l1).sqrt())
    } else {
        ((16.0 / l1.sqrt()).sqrt(), (4.0 / l1.sqrt()).sqrt())
    };
    let cond_i = Condition::greater("(i) viscosity", nu * nu, h_factor * h + 12.0 * nu / (l1 * m * c0) * gj2);
    let cond_ii = Condition::greater(
        "(ii) coupling",
        (nu * m).powi(2) * (c0 / 4.0 - ce / c0 * gj2),
        nu * m * ce / l1 + 2.0 * ce / c0 * h2_factor * h * h,
    );
    let side = Condition::greater("C0^2/(4C) > ||grad J||_L1^2", c0 * c0 / (4.0 * ce), gj2);
    let mut cert = Certificate::new(kind, vec![cond_i, cond_ii, side]);
    cert.notes.push(("C_embed".into(), format!("{} (generic embedding constant, not rigorous)", ce)));
    Ok(cert)
}

/// Exponential stability of `steady` for trajectories starting at `initial`.
///
/// The reported `M` is `(||y0||^2 + (mu(phi0) - mu(phi_e), psi0)) / min(C0 - ||J||, 1)`,
/// the amplitude the energy argument actually yields. The two textbook
/// variants, which bound the numerator by sums of norms, are printed as notes.
pub fn stability_certificate(sim: &Simulator, steady: &SteadyState, c: &Constants, initial: &State) -> Result<Certificate> {
    c.validate()?;
    if c.kappa > 0.0 {
        return Err(Error::CertificateRefused(format!("stability certificate needs a convex potential, got kappa = {}", c.kappa)));
    }
    let p = sim.params();
    if !(p.viscosity.is_constant() && p.mobility.is_constant()) {
        return Err(Error::CertificateRefused("certificates require constant viscosity and mobility".into()));
    }
    let norms = SteadyNorms::of_steady(steady);
    let (nu, m, l1, co) = (c.nu, c.m, c.lambda1, c.c_omega);
    let gap = c.c0 - c.norm_j_l1;
    let coupling = 4.0 / (nu * l1.sqrt()) * norms.grad_mu_l4.powi(2);
    let transport = norms.u_linf.powi(2) / (2.0 * m);

    let mut conditions = vec![
        Condition::greater("(i) viscosity", nu * nu, 4.0 / l1 * norms.grad_u_l2.powi(2)),
        Condition::greater("C0 > ||J||_L1", c.c0, c.norm_j_l1),
        Condition::greater("(ii) phase", gap.max(0.0).powi(2), 2.0 * co * co * (transport + coupling)),
        Condition::greater(
            "(iii) mean",
            MEAN_MATCH_TOLERANCE,
            (initial.phi.mean() - norms.phi_mean).abs(),
        ),
    ];
    let rho_velocity = l1 * nu - 4.0 / nu * norms.grad_u_l2.powi(2);
    let rho_phase = |m_front: f64, transport: f64| m_front * gap / (2.0 * co * co) - (transport + coupling) / gap;
    let rho = rho_velocity.min(rho_phase(m, transport));
    conditions.push(Condition::greater("rho > 0", rho, 0.0));
    let mut cert = Certificate::new(CertificateKind::Stability2d, conditions);

    let y0 = initial.u.sub(&steady.u_e)?;
    let psi0 = initial.phi.sub(&steady.phi_e)?;
    let (y0sq, psi0n) = (y0.l2_norm().powi(2), psi0.l2_norm());
    let d0 = y0sq + psi0n * psi0n;
    let mu_tilde = sim.chemical_potential(&initial.phi)?.sub(&sim.chemical_potential(&steady.phi_e)?)?;
    let denom = gap.min(1.0);
    let pot = sim.potential();
    let f0 = initial.phi.map(|s| pot.f_value(s)).l1_norm();
    let fe = steady.phi_e.map(|s| pot.f_value(s)).l1_norm();
    let fpe = steady.phi_e.map(|s| pot.f_prime(s)).l2_norm();
    let (phi0n, phien) = (initial.phi.l2_norm(), steady.phi_e.l2_norm());
    let m_proof = (y0sq + 2.0 * c.norm_j_l1 * psi0n * psi0n + f0 + fe + fpe * psi0n) / denom;
    let m_statement = (y0sq + 4.0 * c.norm_j_l1 * (phi0n * phi0n + phien * phien) + f0 + fe + fpe * (phi0n + phien)) / denom;

    if cert.overall {
        cert.rho = Some(rho);
        cert.m_bound = Some((y0sq + mu_tilde.inner(&psi0)?) / denom);
    }
    cert.initial_distance = Some(d0);
    cert.notes.extend([
        ("initial_distance".into(), format!("{:e}", d0)),
        ("rho_statement".into(), format!("{:e}", rho_velocity.min(rho_phase(m, norms.u_linf.powi(2))))),
        ("rho_proof_display".into(), format!("{:e}", rho_velocity.min(rho_phase(1.0, transport)))),
        ("M_proof".into(), format!("{:e}", m_proof)),
        ("M_statement".into(), format!("{:e}", m_statement)),
        ("grad_u_l2".into(), format!("{:e}", norms.grad_u_l2)),
        ("u_linf".into(), format!("{:e}", norms.u_linf)),
        ("grad_mu_l4".into(), format!("{:e}", norms.grad_mu_l4)),
    ]);
    Ok(cert)
}

/// `C = max(a1, a2) / min(a1, a2)` and `rho = min(k1 / a1, k2 / a2)` for
/// `d/dt (a1 y + a2 z) + k1 y + k2 z <= 0`, giving
/// `y + z <= C (y0 + z0) exp(-rho t)`.
pub fn combine_decay(a1: f64, a2: f64, k1: f64, k2: f64) -> Result<(f64, f64)> {
    for (name, v) in [("a1", a1), ("a2", a2), ("k1", k1), ("k2", k2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    Ok((a1.max(a2) / a1.min(a2), (k1 / a1).min(k2 / a2)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayFit {
    Rate { alpha_hat: f64, r_squared: f64, samples: usize },
    /// The series reached round-off before a rate could be fitted.
    Saturated { at: f64 },
}

impl DecayFit {
    pub fn alpha_hat(&self) -> Option<f64> {
        match *self {
            DecayFit::Rate { alpha_hat, .. } => Some(alpha_hat),
            DecayFit::Saturated { .. } => None,
        }
    }
}

/// Least-squares slope of `ln d` against `t` over the trailing half of the
/// series, after cutting it at the first sample that has reached round-off
/// (`d <= 0` or `d <= SATURATION_RATIO * max d`).
pub fn fit_decay(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < MIN_FIT_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            series.len()
        )));
    }
    let dmax = series.iter().map(|p| p.1).fold(0.0, f64::max);
    let floor = SATURATION_RATIO * dmax;
    let usable = series.iter().position(|p| !(p.1 > floor)).unwrap_or(series.len());
    if usable < MIN_FIT_SAMPLES {
        let at = series.get(usable).map_or(series[0].0, |p| p.0);
        return Ok(DecayFit::Saturated { at });
    }
    let window = &series[usable / 2..usable];
    let n = window.len() as f64;
    let tm = window.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = window.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for &(t, d) in window {
        let (dt, dl) = (t - tm, d.ln() - lm);
        stt += dt * dt;
        stl += dt * dl;
        sll += dl * dl;
    }
    let slope = stl / stt;
    let r_squared = if sll == 0.0 { 1.0 } else { (stl * stl / (stt * sll)).min(1.0) };
    Ok(DecayFit::Rate {
        alpha_hat: -slope,
        r_squared,
        samples: window.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub rho: f64,
    pub m_bound: f64,
    pub samples: usize,
    /// `(t, d, M exp(-rho t))` for every sample with `d` above the bound.
    pub violations: Vec<(f64, f64, f64)>,
    pub fit: DecayFit,
    /// `alpha_hat - rho`, absent on saturation.
    pub margin: Option<f64>,
}

impl DecayReport {
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rho {:e}", self.rho);
        let _ = writeln!(out, "M {:e}", self.m_bound);
        let _ = writeln!(out, "samples {}", self.samples);
        let _ = writeln!(out, "violations {}", self.violations.len());
        for (t, d, b) in &self.violations {
            let _ = writeln!(out, "violation {t} {d:e} {b:e}");
        }
        match self.fit {
            DecayFit::Rate { alpha_hat, r_squared, samples } => {
                let _ = writeln!(out, "alpha_hat {alpha_hat:e}");
                let _ = writeln!(out, "r_squared {r_squared:e}");
                let _ = writeln!(out, "fit_samples {samples}");
            }
            DecayFit::Saturated { at } => {
                let _ = writeln!(out, "alpha_hat saturated");
                let _ = writeln!(out, "saturated_at {at}");
            }
        }
        let _ = writeln!(out, "margin {}", self.margin.map_or_else(|| "none".to_string(), |m| format!("{m:e}")));
        out
    }
}

/// Checks `d(t) <= M exp(-rho t)` at every sample and fits the observed rate.
pub fn verify_decay(traj: &Trajectory, cert: &Certificate) -> Result<DecayReport> {
    let (Some(rho), Some(m_bound)) = (cert.rho, cert.m_bound) else {
        return Err(Error::CertificateRefused("decay verification needs a passing stability certificate".into()));
    };
    if cert.kind != CertificateKind::Stability2d || !cert.overall {
        return Err(Error::CertificateRefused("decay verification needs a passing stability certificate".into()));
    }
    let series = traj.distance_series();
    if series.iter().any(|p| p.1.is_nan()) {
        return Err(Error::InvalidArgument("trajectory was not sampled against a steady reference".into()));
    }
    if let (Some(d0), Some(first)) = (cert.initial_distance, series.first()) {
        if (first.1 - d0).abs() > 1e-10 * (1.0 + d0) {
            return Err(Error::InvalidArgument(format!(
                "trajectory starts at distance {} but the certificate was issued for {}",
                first.1, d0
            )));
        }
    }
    let violations: Vec<_> = series
        .iter()
        .map(|&(t, d)| (t, d, m_bound * (-rho * t).exp()))
        .filter(|&(_, d, b)| d > b)
        .collect();
    let fit = if series.iter().all(|p| p.1 == 0.0) {
        DecayFit::Saturated { at: series.first().map_or(0.0, |p| p.0) }
    } else {
        fit_decay(&series)?
    };
    Ok(DecayReport {
        rho,
        m_bound,
        samples: series.len(),
        violations,
        margin: fit.alpha_hat().map(|a| a - rho),
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Reference, SimParams};
    use crate::grid::GridSpec;
    use crate::kernel::{Kernel, KernelFamily, KernelSpec};
    use crate::potential::{Potential, PotentialSpec};
    use std::f64::consts::PI;

    fn constants() -> Constants {
        Constants {
            lambda1: 2.0 * PI * PI,
            c_omega: 1.0 / PI,
            c0: 1.0,
            norm_j_l1: 0.0,
            norm_grad_j_l1: 0.0,
            nu: 1.0,
            m: 1.0,
            kappa: 0.0,
            c_embed: 1.0,
            h_dual: 0.0,
        }
    }

    fn sim(amp: f64, theta_c: f64, dt: f64, t_end: f64) -> Simulator {
        let g = GridSpec::new(1.0, 1.0, 16, 16).unwrap();
        let k = Kernel::build(&KernelSpec::new(KernelFamily::Gaussian, amp, 0.2), &g).unwrap();
        let p = Potential::new(PotentialSpec::new(1.0, theta_c)).unwrap();
        Simulator::new(k, p, SimParams::new(&g, 1.0, 1.0, dt, t_end)).unwrap()
    }

    fn constant_steady(s: &Simulator, k: f64) -> SteadyState {
        SteadyState::from_fields(s, VectorField::zeros(s.grid()), ScalarField::constant(s.grid(), k), 0).unwrap()
    }

    #[test]
    fn uniqueness_reduces_without_forcing_and_kernel_gradient() {
        let mut c = constants();
        let cert = uniqueness_certificate(&c, 2).unwrap();
        assert!(cert.overall);
        let ii = cert.condition("(ii) coupling").unwrap();
        assert!((ii.lhs - 0.25).abs() < 1e-15 && (ii.rhs - 1.0 / c.lambda1).abs() < 1e-15);
        // threshold nu m > 4 C / (lambda1 C0)
        c.nu = 0.9 * 4.0 / c.lambda1;
        assert!(!uniqueness_certificate(&c, 2).unwrap().overall);
        c.nu = 1.1 * 4.0 / c.lambda1;
        assert!(uniqueness_certificate(&c, 3).unwrap().overall);
    }

    #[test]
    fn uniqueness_fails_for_vanishing_viscosity() {
        let mut c = constants();
        c.h_dual = 0.1;
        c.nu = 1e-4;
        let cert = uniqueness_certificate(&c, 2).unwrap();
        assert!(!cert.condition("(i) viscosity").unwrap().pass);
        assert!(!cert.overall);
        assert!(uniqueness_certificate(&c, 4).is_err());
    }

    #[test]
    fn uniqueness_is_monotone_in_viscosity() {
        let mut c = constants();
        c.h_dual = 0.3;
        c.norm_grad_j_l1 = 0.2;
        let mut passed = false;
        for i in 1..400 {
            c.nu = 0.01 * i as f64;
            let ok = uniqueness_certificate(&c, 2).unwrap().overall;
            assert!(!(passed && !ok), "flip at nu = {}", c.nu);
            passed |= ok;
        }
        assert!(passed);
    }

    #[test]
    fn stability_with_zero_kernel_matches_the_analytic_rate() {
        let g = GridSpec::new(1.0, 1.0, 16, 16).unwrap();
        let k = Kernel::from_lattice(&g, vec![0.0; 31 * 31], vec![0.0; 31 * 31], vec![0.0; 31 * 31]).unwrap();
        let p = Potential::new(PotentialSpec::new(1.0, 0.0)).unwrap();
        let s = Simulator::new(k, p, SimParams::new(&g, 1.0, 1.0, 1e-3, 0.0)).unwrap();
        let c = Constants::from_simulator(&s, 2.0 * PI * PI, 1.0).unwrap();
        assert!((c.c0 - 1.0).abs() < 1e-12);
        let steady = constant_steady(&s, 0.0);
        let cert = stability_certificate(&s, &steady, &c, &State::perturbed(&g, 0.0, 0.2, 1)).unwrap();
        assert!(cert.overall);
        assert!((cert.rho.unwrap() - PI * PI / 2.0).abs() < 1e-10);
        assert!(cert.m_bound.unwrap() >= cert.initial_distance.unwrap());
    }

    #[test]
    fn stability_refuses_and_fails_where_it_should() {
        let s = sim(0.05, 0.5, 1e-3, 0.0);
        let c = Constants::from_simulator(&s, 2.0 * PI * PI, 1.0).unwrap();
        let steady = constant_steady(&s, 0.0);
        let init = State::constant(s.grid(), 0.0);
        assert!(matches!(stability_certificate(&s, &steady, &c, &init), Err(Error::CertificateRefused(_))));

        let s = sim(0.05, 0.0, 1e-3, 0.0);
        let mut c = Constants::from_simulator(&s, 2.0 * PI * PI, 1.0).unwrap();
        c.norm_j_l1 = c.c0 + 0.1;
        let cert = stability_certificate(&s, &constant_steady(&s, 0.0), &c, &init).unwrap();
        assert!(!cert.condition("C0 > ||J||_L1").unwrap().pass);
        assert!(!cert.overall && cert.rho.is_none() && cert.m_bound.is_none());

        let c = Constants::from_simulator(&s, 2.0 * PI * PI, 1.0).unwrap();
        let shifted = State::constant(s.grid(), 0.1);
        let cert = stability_certificate(&s, &constant_steady(&s, 0.0), &c, &shifted).unwrap();
        assert!(!cert.condition("(iii) mean").unwrap().pass);
    }

    #[test]
    fn certificates_are_deterministic_and_report_flat_lines() {
        let s = sim(0.05, 0.0, 1e-3, 0.0);
        let c = Constants::from_simulator(&s, 2.0 * PI * PI, 1.0).unwrap();
        let st = constant_steady(&s, 0.0);
        let init = State::perturbed(s.grid(), 0.0, 0.1, 3);
        let a = stability_certificate(&s, &st, &c, &init).unwrap();
        let b = stability_certificate(&s, &st, &c, &init).unwrap();
        assert_eq!(a.to_report(), b.to_report());
        let report = a.to_report();
        assert!(report.starts_with("kind stability2d\n"));
        assert!(report.contains("\noverall pass\n"));
        assert!(report.lines().any(|l| l.starts_with("C0 > ||J||_L1 ") && l.ends_with(" pass")));
    }

    #[test]
    fn combine_decay_examples() {
        assert_eq!(combine_decay(1.0, 1.0, 1.0, 1.0).unwrap(), (1.0, 1.0));
        assert_eq!(combine_decay(2.0, 1.0, 4.0, 3.0).unwrap(), (2.0, 2.0));
        assert!(combine_decay(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(combine_decay(1.0, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn fit_recovers_exact_and_noisy_rates() {
        let exact: Vec<_> = (0..100).map(|i| (0.05 * i as f64, (-3.0 * 0.05 * i as f64).exp())).collect();
        let DecayFit::Rate { alpha_hat, r_squared, .. } = fit_decay(&exact).unwrap() else { panic!() };
        assert!((alpha_hat - 3.0).abs() < 1e-10 && (r_squared - 1.0).abs() < 1e-12);

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let noisy: Vec<_> = (0..100)
            .map(|i| {
                let t = 0.02 * i as f64;
                (t, 5.0 * (-2.0 * t).exp() + 1e-6 * rng.random_range(-1.0..1.0))
            })
            .collect();
        let a = fit_decay(&noisy).unwrap().alpha_hat().unwrap();
        assert!((a - 2.0).abs() < 0.02);

        let flat: Vec<_> = (0..30).map(|i| (i as f64, 0.7)).collect();
        assert_eq!(fit_decay(&flat).unwrap().alpha_hat(), Some(0.0));
        assert!(fit_decay(&flat[..5]).is_err());
    }

    #[test]
    fn fit_cuts_at_round_off() {
        let series: Vec<_> = (0..60).map(|i| (i as f64, if i < 10 { (-(i as f64)).exp() } else { 0.0 })).collect();
        assert!(matches!(fit_decay(&series).unwrap(), DecayFit::Saturated { .. }));
        let series: Vec<_> = (0..80).map(|i| (i as f64, (-(i as f64)).exp().max(1e-40))).collect();
        let a = fit_decay(&series).unwrap().alpha_hat().unwrap();
        assert!((a - 1.0).abs() < 1e-9);
    }

    #[test]
    fn decay_is_verified_and_an_inflated_rate_is_caught() {
        let s = sim(0.05, 0.0, 1e-3, 0.5);
        let c = Constants::from_simulator(&s, 2.0 * PI * PI, 1.0).unwrap();
        let st = constant_steady(&s, 0.0);
        let init = State::perturbed(s.grid(), 0.0, 0.3, 7);
        let cert = stability_certificate(&s, &st, &c, &init).unwrap();
        assert!(cert.overall);
        let traj = s.evolve(&init, 10, Some(Reference { u: &st.u_e, phi: &st.phi_e })).unwrap();
        let rep = verify_decay(&traj, &cert).unwrap();
        assert!(rep.violations.is_empty());
        assert!(rep.margin.unwrap() >= 0.0, "{}", rep.to_report());

        let mut inflated = cert.clone();
        inflated.rho = Some(10.0 * cert.rho.unwrap());
        assert!(!verify_decay(&traj, &inflated).unwrap().violations.is_empty());

        let fixed = s.evolve(&st.state(), 10, Some(Reference { u: &st.u_e, phi: &st.phi_e })).unwrap();
        assert!(verify_decay(&fixed, &cert).is_err(), "distance mismatch");
        let still = stability_certificate(&s, &st, &c, &st.state()).unwrap();
        let rep = verify_decay(&fixed, &still).unwrap();
        assert!(rep.violations.is_empty());
        assert!(matches!(rep.fit, DecayFit::Saturated { .. }));

        let unreferenced = s.evolve(&init, 10, None).unwrap();
        assert!(verify_decay(&unreferenced, &cert).is_err());
    }
}
