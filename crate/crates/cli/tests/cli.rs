use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = "\
grid.Lx = 1
grid.Ly = 1
grid.nx = 16
grid.ny = 16
kernel.family = gaussian
kernel.amplitude = 0.1
kernel.width = 0.15
potential.theta = 1
potential.theta_c = 0
viscosity = 1
mobility = 1
forcing.kind = zero
initial.kind = perturbed
initial.k = 0
initial.amplitude = 0.3
initial.seed = 7
time.dt = 2e-3
time.T_end = 0.5
output.sample_every = 5
steady.tol = 1e-9
steady.dt = 1e-2
";

/// Base config with `key = value` overrides replacing or extending it.
fn config(dir: &Path, name: &str, overrides: &[(&str, &str)]) -> PathBuf {
    let mut lines: Vec<String> = BASE
        .lines()
        .filter(|l| !overrides.iter().any(|(k, _)| l.split('=').next().unwrap().trim() == *k))
        .map(str::to_string)
        .collect();
    lines.extend(overrides.iter().map(|(k, v)| format!("{k} = {v}")));
    let path = dir.join(name);
    fs::write(&path, lines.join("\n")).unwrap();
    path
}

fn nchns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nchns")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn steady(cfg: &Path, out: &Path) -> Output {
    nchns(&["steady", "--config", s(cfg), "--out", s(out)])
}

#[test]
fn validate_passes_on_the_base_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[]);
    let o = nchns(&["validate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("overall pass"));
    assert!(out.lines().next().unwrap().starts_with("config_hash "));
}

#[test]
fn validate_reports_a_failed_assumption() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[("potential.theta_c", "1.5"), ("kernel.amplitude", "0")]);
    let o = nchns(&["validate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("fail"));
}

#[test]
fn malformed_config_lists_line_numbers() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.conf");
    fs::write(&path, "grid.nx = 16\nthis line has no separator\ngrid.ny = minus one\n").unwrap();
    let o = nchns(&["validate", "--config", s(&path)]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_config_is_an_io_error() {
    let o = nchns(&["validate", "--config", "/nonexistent/x.conf"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unforced_steady_state_is_constant() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[("initial.k", "0.2")]);
    let out = tmp.path().join("steady");
    let o = steady(&cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let phi = nchns::snapshot::read(&out.join(nchns::snapshot::PHI_FILE)).unwrap().into_scalar().unwrap();
    let u = nchns::snapshot::read(&out.join(nchns::snapshot::U_FILE)).unwrap().into_vector().unwrap();
    assert!(phi.values().iter().all(|p| (p - 0.2).abs() < 1e-8));
    assert!(u.l2_norm() < 1e-8);
}

#[test]
fn forced_steady_state_has_small_residuals() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "a.conf",
        &[
            ("kernel.amplitude", "0.05"),
            ("kernel.width", "0.25"),
            ("forcing.kind", "solenoidal"),
            ("forcing.amplitude", "0.25"),
        ],
    );
    let out = tmp.path().join("steady");
    let o = steady(&cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rec = nchns::snapshot::load_steady(&out).unwrap();
    assert!(rec.u_e.l2_norm() > 1e-3);
    for key in ["r_phi", "r_mu", "r_u"] {
        let r: f64 = rec.meta[key].parse().unwrap();
        assert!(r <= 1e-9, "{key} = {r}");
    }
}

#[test]
fn nonpositive_steady_tolerance_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[("steady.tol", "0")]);
    let o = steady(&cfg, &tmp.path().join("steady"));
    assert_eq!(code(&o), 2);
}

#[test]
fn evolve_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[("time.T_end", "0.1")]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = nchns(&["evolve", "--config", s(&cfg), "--out", s(dir)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["trajectory.csv", "final_u.snap", "final_phi.snap"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("# config "));
}

#[test]
fn evolving_from_a_fixed_point_stays_there() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[("initial.kind", "constant"), ("initial.k", "0.1"), ("evolve.distance", "true")]);
    let st = tmp.path().join("steady");
    assert_eq!(code(&steady(&cfg, &st)), 0);
    let out = tmp.path().join("run");
    let o = nchns(&["evolve", "--config", s(&cfg), "--out", s(&out), "--steady", s(&st)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let cols: Vec<usize> = ["u_l2sq", "phi_dist_sq"]
        .iter()
        .map(|c| header.iter().position(|h| h == c).expect("distance column"))
        .collect();
    for l in lines {
        let fields: Vec<&str> = l.split(',').collect();
        for &c in &cols {
            let d: f64 = fields[c].parse().unwrap();
            assert!(d < 1e-20, "{l}");
        }
    }
}

#[test]
fn distance_tracking_without_a_steady_state_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[("evolve.distance", "true")]);
    let o = nchns(&["evolve", "--config", s(&cfg), "--out", s(&tmp.path().join("run"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn stability_certificate_passes_and_checks_the_config_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[]);
    let st = tmp.path().join("steady");
    assert_eq!(code(&steady(&cfg, &st)), 0);
    let out = tmp.path().join("cert");
    let o = nchns(&["certify", "--config", s(&cfg), "--out", s(&out), "--steady", s(&st), "--mode", "stability2d"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("certificate.txt")).unwrap();
    assert!(text.contains("overall pass"));
    assert!(text.lines().any(|l| l.starts_with("rho ") && !l.ends_with("none")));

    // same steady state, different configuration
    let other = config(tmp.path(), "b.conf", &[("viscosity", "2")]);
    let o = nchns(&["certify", "--config", s(&other), "--out", s(&out), "--steady", s(&st), "--mode", "stability2d"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("produced by config"), "{}", stderr(&o));
}

#[test]
fn uniqueness3d_needs_the_norms() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[]);
    let o = nchns(&["certify", "--config", s(&cfg), "--out", s(tmp.path()), "--mode", "uniqueness3d"]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    for key in ["certify3d.lambda1", "certify3d.C0", "certify3d.norm_grad_J_L1", "certify3d.h_dual"] {
        assert!(err.contains(key), "{err}");
    }
}

#[test]
fn strong_kernel_fails_the_certificate() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[("kernel.amplitude", "40")]);
    let o = nchns(&["certify", "--config", s(&cfg), "--out", s(tmp.path()), "--mode", "uniqueness2d"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("certificate.txt")).unwrap();
    assert!(text.contains("overall fail"));
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[]);
    let o = nchns(&["certify", "--config", s(&cfg), "--mode", "stability3d"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn decay_is_confirmed_and_the_negative_control_fails() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[]);
    let st = tmp.path().join("steady");
    assert_eq!(code(&steady(&cfg, &st)), 0);

    let out = tmp.path().join("decay");
    let o = nchns(&["decay", "--config", s(&cfg), "--out", s(&out), "--steady", s(&st)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(out.join("decay_report.txt")).unwrap();
    assert!(report.contains("violations 0"), "{report}");
    assert!(out.join("trajectory.csv").exists());

    let neg = tmp.path().join("neg");
    let o = nchns(&["decay", "--config", s(&cfg), "--out", s(&neg), "--steady", s(&st), "--inflate-rho", "20"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn decay_refuses_without_a_certificate() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "a.conf", &[("potential.theta_c", "0.5")]);
    let st = tmp.path().join("steady");
    assert_eq!(code(&steady(&cfg, &st)), 0);
    let out = tmp.path().join("decay");
    let o = nchns(&["decay", "--config", s(&cfg), "--out", s(&out), "--steady", s(&st)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(!out.join("trajectory.csv").exists());
}
