//! Plain-text field snapshots and steady-state bundles.
//!
//! A snapshot starts with `NCHNS1 scalar|vector nx ny Lx Ly`, optionally
//! followed by `# config <hash>`, then the values row by row (for vectors the
//! x-face rows come first, then the y-face rows). Values are written in the
//! shortest form that parses back to the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::steady::{SteadyState, WeakResiduals};

const MAGIC: &str = "NCHNS1";

pub const U_FILE: &str = "u_e.snap";
pub const PHI_FILE: &str = "phi_e.snap";
pub const MU_FILE: &str = "mu_e.snap";
pub const META_FILE: &str = "steady.meta";

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Scalar(ScalarField),
    Vector(VectorField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: Field,
    pub config_hash: Option<String>,
}

impl Snapshot {
    pub fn grid(&self) -> &GridSpec {
        match &self.field {
            Field::Scalar(f) => f.grid(),
            Field::Vector(f) => f.grid(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        match self.field {
            Field::Scalar(f) => Ok(f),
            Field::Vector(_) => Err(Error::Snapshot("expected a scalar snapshot, found a vector".into())),
        }
    }

    pub fn into_vector(self) -> Result<VectorField> {
        match self.field {
            Field::Vector(f) => Ok(f),
            Field::Scalar(_) => Err(Error::Snapshot("expected a vector snapshot, found a scalar".into())),
        }
    }
}

fn write_rows(out: &mut String, values: &[f64], width: usize) {
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

fn header(out: &mut String, kind: &str, g: &GridSpec, hash: Option<&str>) {
    let _ = writeln!(out, "{MAGIC} {kind} {} {} {:e} {:e}", g.nx(), g.ny(), g.lx(), g.ly());
    if let Some(h) = hash {
        let _ = writeln!(out, "# config {h}");
    }
}

pub fn scalar_to_string(f: &ScalarField, config_hash: Option<&str>) -> String {
    let g = f.grid();
    let mut out = String::new();
    header(&mut out, "scalar", g, config_hash);
    write_rows(&mut out, f.values(), g.nx());
    out
}

pub fn vector_to_string(f: &VectorField, config_hash: Option<&str>) -> String {
    let g = f.grid();
    let mut out = String::new();
    header(&mut out, "vector", g, config_hash);
    write_rows(&mut out, f.u(), g.nx() + 1);
    write_rows(&mut out, f.v(), g.nx());
    out
}

pub fn parse(text: &str) -> Result<Snapshot> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| Error::Snapshot("empty snapshot".into()))?;
    let tok: Vec<&str> = head.split_whitespace().collect();
    if tok.len() != 6 || tok[0] != MAGIC {
        return Err(Error::Snapshot(format!("bad header line `{head}`")));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::Snapshot(format!("bad grid size `{s}`")));
    let len = |s: &str| s.parse::<f64>().map_err(|_| Error::Snapshot(format!("bad domain length `{s}`")));
    let grid = GridSpec::new(len(tok[4])?, len(tok[5])?, dim(tok[2])?, dim(tok[3])?)?;

    let mut config_hash = None;
    let mut values = Vec::new();
    for (n, line) in lines.enumerate() {
        if let Some(rest) = line.trim_start().strip_prefix('#') {
            let mut it = rest.split_whitespace();
            if it.next() == Some("config") {
                config_hash = it.next().map(str::to_string);
            }
            continue;
        }
        for t in line.split_whitespace() {
            let v = t
                .parse::<f64>()
                .map_err(|_| Error::Snapshot(format!("line {}: bad value `{t}`", n + 2)))?;
            values.push(v);
        }
    }
    let field = match tok[1] {
        "scalar" => Field::Scalar(ScalarField::from_values(&grid, values).map_err(|e| Error::Snapshot(e.to_string()))?),
        "vector" => {
            let nu = grid.u_len();
            if values.len() != nu + grid.v_len() {
                return Err(Error::Snapshot(format!(
                    "expected {} values, got {}",
                    nu + grid.v_len(),
                    values.len()
                )));
            }
            let v = values.split_off(nu);
            Field::Vector(VectorField::from_components(&grid, values, v).map_err(|e| Error::Snapshot(e.to_string()))?)
        }
        other => return Err(Error::Snapshot(format!("unknown field kind `{other}`"))),
    };
    Ok(Snapshot { field, config_hash })
}

pub fn write_scalar(path: &Path, f: &ScalarField, config_hash: Option<&str>) -> Result<()> {
    std::fs::write(path, scalar_to_string(f, config_hash))?;
    Ok(())
}

pub fn write_vector(path: &Path, f: &VectorField, config_hash: Option<&str>) -> Result<()> {
    std::fs::write(path, vector_to_string(f, config_hash))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Snapshot> {
    let text = std::fs::read_to_string(path)?;
    parse(&text).map_err(|e| match e {
        Error::Snapshot(msg) => Error::Snapshot(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// A steady state as stored on disk.
#[derive(Debug, Clone)]
pub struct SteadyRecord {
    pub u_e: VectorField,
    pub phi_e: ScalarField,
    pub mu_e: ScalarField,
    pub meta: BTreeMap<String, String>,
}

impl SteadyRecord {
    pub fn config_hash(&self) -> Option<&str> {
        self.meta.get("config_hash").map(String::as_str)
    }

    pub fn seed(&self) -> u64 {
        self.meta.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0)
    }
}

/// Writes the three fields and `steady.meta` into `dir`.
pub fn save_steady(dir: &Path, s: &SteadyState, config_hash: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_vector(&dir.join(U_FILE), &s.u_e, Some(config_hash))?;
    write_scalar(&dir.join(PHI_FILE), &s.phi_e, Some(config_hash))?;
    write_scalar(&dir.join(MU_FILE), &s.mu_e, Some(config_hash))?;
    let WeakResiduals { r_phi, r_mu, r_u } = s.residuals;
    let mut meta = String::new();
    let _ = writeln!(meta, "config_hash {config_hash}");
    let _ = writeln!(meta, "k {}", s.k);
    let _ = writeln!(meta, "seed {}", s.seed);
    let _ = writeln!(meta, "steps {}", s.steps);
    let _ = writeln!(meta, "newton_iterations {}", s.newton_iterations);
    let _ = writeln!(meta, "march_residual {}", s.march_residual);
    let _ = writeln!(meta, "r_phi {r_phi}");
    let _ = writeln!(meta, "r_mu {r_mu}");
    let _ = writeln!(meta, "r_u {r_u}");
    std::fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

/// Reads a bundle written by [`save_steady`], rejecting files whose config
/// hashes disagree.
pub fn load_steady(dir: &Path) -> Result<SteadyRecord> {
    let text = std::fs::read_to_string(dir.join(META_FILE))?;
    let meta: BTreeMap<String, String> = text
        .lines()
        .filter_map(|l| l.split_once(' ').map(|(k, v)| (k.to_string(), v.trim().to_string())))
        .collect();
    let hash = meta.get("config_hash").cloned();
    let check = |snap: &Snapshot, name: &str| -> Result<()> {
        if snap.config_hash != hash {
            return Err(Error::Snapshot(format!("{name} belongs to a different configuration")));
        }
        Ok(())
    };
    let u = read(&dir.join(U_FILE))?;
    check(&u, U_FILE)?;
    let phi = read(&dir.join(PHI_FILE))?;
    check(&phi, PHI_FILE)?;
    let mu = read(&dir.join(MU_FILE))?;
    check(&mu, MU_FILE)?;
    if u.grid() != phi.grid() || u.grid() != mu.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(SteadyRecord {
        u_e: u.into_vector()?,
        phi_e: phi.into_scalar()?,
        mu_e: mu.into_scalar()?,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(1.5, 0.75, 8, 8).unwrap()
    }

    #[test]
    fn header_and_layout() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x, y| x + 10.0 * y);
        let text = scalar_to_string(&f, Some("abc"));
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "NCHNS1 scalar 8 8 1.5e0 7.5e-1");
        assert_eq!(lines.next().unwrap(), "# config abc");
        assert_eq!(lines.count(), 8);
        let back = parse(&text).unwrap();
        assert_eq!(back.config_hash.as_deref(), Some("abc"));
        assert_eq!(back.into_scalar().unwrap(), f);
    }

    #[test]
    fn vector_round_trip() {
        let g = grid();
        let w = crate::stencil::curl_of(&g, |x, y| (3.0 * x).sin() * (2.0 * y).sin() * x * y);
        let back = parse(&vector_to_string(&w, None)).unwrap();
        assert_eq!(back.config_hash, None);
        assert_eq!(back.into_vector().unwrap(), w);
    }

    #[test]
    fn malformed_snapshots_are_rejected() {
        assert!(parse("").is_err());
        assert!(parse("NCHNS2 scalar 8 8 1 1\n").is_err());
        assert!(parse("NCHNS1 tensor 8 8 1 1\n").is_err());
        assert!(parse("NCHNS1 scalar 7 8 1 1\n").is_err());
        assert!(parse("NCHNS1 scalar 8 8 1 1\n1 2 3\n").is_err());
        let mut text = scalar_to_string(&ScalarField::zeros(&grid()), None);
        text.push_str("x\n");
        assert!(matches!(parse(&text), Err(Error::Snapshot(m)) if m.contains("line")));
        let g = grid();
        let mut bad = vector_to_string(&VectorField::zeros(&g), None);
        bad = bad.replacen("0e0", "1e0", 1);
        assert!(parse(&bad).is_err(), "nonzero wall flux");
        assert!(parse(&scalar_to_string(&ScalarField::zeros(&g), None)).unwrap().into_vector().is_err());
    }

    #[test]
    fn steady_bundle_round_trip_and_hash_check() {
        use crate::dynamics::{SimParams, Simulator};
        use crate::kernel::{Kernel, KernelFamily, KernelSpec};
        use crate::potential::{Potential, PotentialSpec};
        let g = GridSpec::new(1.0, 1.0, 16, 16).unwrap();
        let k = Kernel::build(&KernelSpec::new(KernelFamily::Gaussian, 0.05, 0.2), &g).unwrap();
        let p = Potential::new(PotentialSpec::new(1.0, 0.0)).unwrap();
        let sim = Simulator::new(k, p, SimParams::new(&g, 1.0, 1.0, 1e-3, 0.0)).unwrap();
        let st = SteadyState::from_fields(&sim, VectorField::zeros(&g), ScalarField::constant(&g, 0.25), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_steady(dir.path(), &st, "h1").unwrap();
        let rec = load_steady(dir.path()).unwrap();
        assert_eq!(rec.phi_e, st.phi_e);
        assert_eq!(rec.mu_e, st.mu_e);
        assert_eq!(rec.config_hash(), Some("h1"));
        assert_eq!(rec.seed(), 5);
        write_scalar(&dir.path().join(MU_FILE), &st.mu_e, Some("other")).unwrap();
        assert!(load_steady(dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn scalar_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e300f64..1e300, 64), scale in -300i32..300) {
            let g = grid();
            let f = ScalarField::from_values(&g, vals.iter().map(|v| v * 10f64.powi(scale).min(1.0)).collect()).unwrap();
            let back = parse(&scalar_to_string(&f, None)).unwrap().into_scalar().unwrap();
            for (a, b) in f.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
