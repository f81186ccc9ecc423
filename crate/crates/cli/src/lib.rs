//! Command implementations behind the `nchns` binary.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nchns::analysis::{stability_certificate, uniqueness_certificate, verify_decay, Certificate, CertificateKind, Constants, DecayFit};
use nchns::dynamics::{Reference, Simulator, Trajectory};
use nchns::operators::poincare_constant;
use nchns::potential::check_assumptions;
use nchns::snapshot::{self, SteadyRecord};
use nchns::steady::{steady_solve, SteadyState};
use nchns::Error;

use crate::config::{ConfigError, RunConfig, NORMS_3D_KEYS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CERTIFICATE: i32 = 4;
/// Decay run completed but the observed decay contradicts the certificate.
pub const EXIT_VERIFICATION: i32 = 5;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CERTIFICATE_FILE: &str = "certificate.txt";
pub const DECAY_FILE: &str = "decay_report.txt";
pub const FINAL_U_FILE: &str = "final_u.snap";
pub const FINAL_PHI_FILE: &str = "final_phi.snap";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigError>),

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] Error),

    #[error("{0}")]
    ConditionsNotMet(String),

    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::ConditionsNotMet(_) => EXIT_CERTIFICATE,
            CliError::Verification(_) => EXIT_VERIFICATION,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::TimeStepTooLarge { .. }
        | Error::NewtonFailure(_)
        | Error::NoConvergence { .. }
        | Error::SteadyNotConverged { .. }
        | Error::Step { .. } => EXIT_NUMERICAL,
        Error::CertificateRefused(_) => EXIT_CERTIFICATE,
        _ => EXIT_CONFIG,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_config(path: &Path, seed: Option<u64>) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let cfg = RunConfig::parse(&text).map_err(CliError::Config)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Reads a steady bundle and checks it against the configuration.
pub fn load_steady(dir: &Path, cfg: &RunConfig, sim: &Simulator) -> CliResult<SteadyState> {
    let rec: SteadyRecord = snapshot::load_steady(dir).map_err(|e| match e {
        Error::Io(source) => CliError::Io {
            path: dir.to_path_buf(),
            source,
        },
        other => other.into(),
    })?;
    let hash = cfg.hash();
    if rec.config_hash() != Some(hash.as_str()) {
        return Err(CliError::Invalid(format!(
            "steady snapshot in {} was produced by config {}, not {hash}",
            dir.display(),
            rec.config_hash().unwrap_or("(none)")
        )));
    }
    if *rec.u_e.grid() != cfg.grid {
        return Err(CliError::Invalid("steady snapshot grid does not match the configuration".into()));
    }
    let seed = rec.seed();
    Ok(SteadyState::from_fields(sim, rec.u_e, rec.phi_e, seed)?)
}

/// Runs the structural checks. Returns the report and whether all passed.
pub fn cmd_validate(cfg: &RunConfig) -> CliResult<(String, bool)> {
    let sim = cfg.simulator()?;
    let p = sim.params();
    let rep = check_assumptions(sim.potential(), sim.kernel(), &p.viscosity, &p.mobility);
    let mut out = String::new();
    let _ = writeln!(out, "config_hash {}", cfg.hash());
    for c in &rep.checks {
        let _ = writeln!(out, "{} {} {}", c.label, if c.pass { "pass" } else { "fail" }, c.detail);
    }
    let _ = writeln!(out, "C0 {}", rep.c0);
    let _ = writeln!(out, "norm_J_L1 {}", rep.norm_j_l1);
    let _ = writeln!(out, "norm_grad_J_L1 {}", rep.norm_grad_j_l1);
    let _ = writeln!(out, "kappa {}", rep.kappa);
    let _ = writeln!(out, "overall {}", if rep.all_pass() { "pass" } else { "fail" });
    Ok((out, rep.all_pass()))
}

pub fn cmd_steady(cfg: &RunConfig, out: &Path) -> CliResult<String> {
    let sim = cfg.simulator()?;
    let st = steady_solve(&sim, &cfg.steady_config())?;
    snapshot::save_steady(out, &st, &cfg.hash())?;
    let r = st.residuals;
    Ok(format!(
        "steady state after {} steps: r_phi {:e}, r_mu {:e}, r_u {:e}, ||u_e|| {:e}, mean(phi_e) {:e}\nwritten to {}\n",
        st.steps,
        r.r_phi,
        r.r_mu,
        r.r_u,
        st.u_e.l2_norm(),
        st.phi_e.mean(),
        out.display()
    ))
}

fn trajectory_csv(traj: &Trajectory, hash: &str) -> String {
    format!("# config {hash}\n{}", traj.to_csv())
}

pub fn cmd_evolve(cfg: &RunConfig, out: &Path, steady: Option<&Path>) -> CliResult<String> {
    if cfg.track_distance && steady.is_none() {
        return Err(CliError::Invalid("`evolve.distance = true` needs a steady snapshot (--steady DIR)".into()));
    }
    let sim = cfg.simulator()?;
    let reference = steady.map(|d| load_steady(d, cfg, &sim)).transpose()?;
    let initial = cfg.initial_state();
    let traj = sim.evolve(
        &initial,
        cfg.sample_every,
        reference.as_ref().map(|s| Reference { u: &s.u_e, phi: &s.phi_e }),
    )?;
    let hash = cfg.hash();
    write(&out.join(TRAJECTORY_FILE), &trajectory_csv(&traj, &hash))?;
    snapshot::write_vector(&out.join(FINAL_U_FILE), &traj.final_state.u, Some(&hash))?;
    snapshot::write_scalar(&out.join(FINAL_PHI_FILE), &traj.final_state.phi, Some(&hash))?;
    let last = traj.samples.last().expect("the initial sample is always present");
    Ok(format!(
        "{} steps to t = {}: energy {:e}, mass {:e}, clamps {}\nwritten to {}\n",
        traj.steps,
        last.t,
        last.energy,
        last.mass,
        last.clamps,
        out.display()
    ))
}

fn lambda1(cfg: &RunConfig, sim: &Simulator) -> CliResult<f64> {
    match cfg.lambda1 {
        Some(l) => Ok(l),
        None => Ok(sim.operators().stokes_lambda1()?.conservative()),
    }
}

/// Builds the requested certificate. `steady` is required for stability.
pub fn certificate(cfg: &RunConfig, sim: &Simulator, steady: Option<&Path>, kind: CertificateKind) -> CliResult<Certificate> {
    match kind {
        CertificateKind::Uniqueness2d => {
            let c = Constants::from_simulator(sim, lambda1(cfg, sim)?, cfg.c_embed)?;
            Ok(uniqueness_certificate(&c, 2)?)
        }
        CertificateKind::Uniqueness3d => {
            let Some(n) = cfg.norms_3d else {
                return Err(CliError::Invalid(format!(
                    "uniqueness3d needs user-supplied norms; set all of: {}",
                    NORMS_3D_KEYS.join(", ")
                )));
            };
            let p = sim.params();
            let (Some(nu), Some(m)) = (p.viscosity.constant_value(), p.mobility.constant_value()) else {
                return Err(Error::CertificateRefused("certificates require constant viscosity and mobility".into()).into());
            };
            let c = Constants {
                lambda1: n.lambda1,
                c_omega: poincare_constant(&cfg.grid),
                c0: n.c0,
                norm_j_l1: sim.kernel().norm_j_l1(),
                norm_grad_j_l1: n.norm_grad_j_l1,
                nu,
                m,
                kappa: sim.potential().convex_split().kappa,
                c_embed: cfg.c_embed,
                h_dual: n.h_dual,
            };
            Ok(uniqueness_certificate(&c, 3)?)
        }
        CertificateKind::Stability2d => {
            let Some(dir) = steady else {
                return Err(CliError::Invalid("stability2d needs a steady snapshot (--steady DIR)".into()));
            };
            let st = load_steady(dir, cfg, sim)?;
            let c = Constants::from_simulator(sim, lambda1(cfg, sim)?, cfg.c_embed)?;
            Ok(stability_certificate(sim, &st, &c, &cfg.initial_state())?)
        }
    }
}

fn certificate_text(cert: &Certificate, hash: &str) -> String {
    format!("config_hash {hash}\n{}", cert.to_report())
}

/// Writes the certificate report; fails with `ConditionsNotMet` if it does not pass.
pub fn cmd_certify(cfg: &RunConfig, out: &Path, steady: Option<&Path>, kind: CertificateKind) -> CliResult<String> {
    let sim = cfg.simulator()?;
    let cert = certificate(cfg, &sim, steady, kind)?;
    let text = certificate_text(&cert, &cfg.hash());
    write(&out.join(CERTIFICATE_FILE), &text)?;
    if !cert.overall {
        return Err(CliError::ConditionsNotMet(format!("{} conditions not met\n{text}", kind.name())));
    }
    Ok(text)
}

/// Certifies, evolves against the steady state and checks the decay bound.
/// `inflate_rho` multiplies the certified rate, as a negative control.
pub fn cmd_decay(cfg: &RunConfig, out: &Path, steady: &Path, inflate_rho: f64) -> CliResult<String> {
    let sim = cfg.simulator()?;
    let mut cert = certificate(cfg, &sim, Some(steady), CertificateKind::Stability2d)?;
    let hash = cfg.hash();
    write(&out.join(CERTIFICATE_FILE), &certificate_text(&cert, &hash))?;
    if !cert.overall {
        return Err(CliError::ConditionsNotMet(format!(
            "stability conditions not met; no simulation run\n{}",
            cert.to_report()
        )));
    }
    cert.rho = cert.rho.map(|r| r * inflate_rho);
    let st = load_steady(steady, cfg, &sim)?;
    let traj = sim.evolve(&cfg.initial_state(), cfg.sample_every, Some(Reference { u: &st.u_e, phi: &st.phi_e }))?;
    write(&out.join(TRAJECTORY_FILE), &trajectory_csv(&traj, &hash))?;
    let report = verify_decay(&traj, &cert)?;
    let mut text = format!("config_hash {hash}\n");
    if inflate_rho != 1.0 {
        let _ = writeln!(text, "rho_inflation {inflate_rho}");
    }
    text.push_str(&report.to_report());
    write(&out.join(DECAY_FILE), &text)?;
    let slow = matches!(report.fit, DecayFit::Rate { alpha_hat, .. } if alpha_hat < report.rho);
    if !report.violations.is_empty() || slow {
        return Err(CliError::Verification(format!(
            "decay bound not confirmed: {} violations, fitted rate {}, certified rate {:e}; see {}",
            report.violations.len(),
            report.fit.alpha_hat().map_or_else(|| "none".to_string(), |a| format!("{a:e}")),
            report.rho,
            out.join(DECAY_FILE).display()
        )));
    }
    Ok(text)
}
