//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;

use nchns::coefficient::Coefficient;
use nchns::dynamics::{SimParams, Simulator, State};
use nchns::potential::{Potential, PotentialSpec};
use nchns::steady::{solenoidal_forcing, SteadyConfig};
use nchns::{GridSpec, Kernel, KernelFamily, KernelSpec};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    Zero,
    /// Curl of `amplitude sin^2(pi x / Lx) sin^2(pi y / Ly)`.
    Solenoidal { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Initial {
    Constant { k: f64 },
    Perturbed { k: f64, amplitude: f64, seed: u64 },
}

impl Initial {
    pub fn mean(&self) -> f64 {
        match *self {
            Initial::Constant { k } | Initial::Perturbed { k, .. } => k,
        }
    }
}

/// Norms supplied by the user for the three-dimensional uniqueness check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms3d {
    pub lambda1: f64,
    pub c0: f64,
    pub norm_grad_j_l1: f64,
    pub h_dual: f64,
}

pub const NORMS_3D_KEYS: [&str; 4] = ["certify3d.lambda1", "certify3d.C0", "certify3d.norm_grad_J_L1", "certify3d.h_dual"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub kernel: KernelSpec,
    pub potential: PotentialSpec,
    pub viscosity: Coefficient,
    pub mobility: Coefficient,
    pub forcing: Forcing,
    pub initial: Initial,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    /// Track the distance to a steady snapshot during `evolve`.
    pub track_distance: bool,
    pub steady_tol: f64,
    pub steady_max_steps: usize,
    pub steady_dt: f64,
    pub steady_newton: bool,
    pub c_embed: f64,
    pub lambda1: Option<f64>,
    pub norms_3d: Option<Norms3d>,
    pub output_dir: Option<String>,
    /// Canonical `key=value` lines that define the hash.
    canonical: BTreeMap<String, String>,
}

/// One problem found while reading a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

const KEYS: &[&str] = &[
    "grid.Lx",
    "grid.Ly",
    "grid.nx",
    "grid.ny",
    "kernel.family",
    "kernel.amplitude",
    "kernel.width",
    "potential.theta",
    "potential.theta_c",
    "potential.delta",
    "potential.q",
    "viscosity",
    "mobility",
    "forcing.kind",
    "forcing.amplitude",
    "initial.kind",
    "initial.k",
    "initial.amplitude",
    "initial.seed",
    "time.dt",
    "time.T_end",
    "output.sample_every",
    "output.dir",
    "evolve.distance",
    "steady.tol",
    "steady.max_steps",
    "steady.dt",
    "steady.newton",
    "certify.C_embed",
    "certify.lambda1",
    "certify3d.lambda1",
    "certify3d.C0",
    "certify3d.norm_grad_J_L1",
    "certify3d.h_dual",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    errors: Vec<ConfigError>,
}

impl Entries {
    fn err(&mut self, line: Option<usize>, message: String) {
        self.errors.push(ConfigError { line, message });
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.map.get(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let (line, v) = self.map.get(key)?.clone();
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.err(Some(line), format!("`{key}` must be {what}, got `{v}`"));
                None
            }
        }
    }

    fn real(&mut self, key: &str, default: Option<f64>) -> f64 {
        match self.parsed::<f64>(key, "a real number") {
            Some(x) if x.is_finite() => x,
            Some(x) => {
                let line = self.map[key].0;
                self.err(Some(line), format!("`{key}` must be finite, got {x}"));
                f64::NAN
            }
            None if self.map.contains_key(key) => f64::NAN,
            None => default.unwrap_or_else(|| {
                self.err(None, format!("missing required key `{key}`"));
                f64::NAN
            }),
        }
    }

    fn positive(&mut self, key: &str, default: Option<f64>) -> f64 {
        let v = self.real(key, default);
        if v.is_finite() && v <= 0.0 {
            let line = self.raw(key).map(|e| e.0);
            self.err(line, format!("`{key}` must be > 0, got {v}"));
        }
        v
    }

    fn count(&mut self, key: &str, default: Option<usize>) -> usize {
        match self.parsed::<usize>(key, "a nonnegative integer") {
            Some(x) => x,
            None if self.map.contains_key(key) => 0,
            None => default.unwrap_or_else(|| {
                self.err(None, format!("missing required key `{key}`"));
                0
            }),
        }
    }

    fn flag(&mut self, key: &str) -> bool {
        self.parsed::<bool>(key, "`true` or `false`").unwrap_or(false)
    }

    fn word(&self, key: &str, default: &str) -> (Option<usize>, String) {
        self.raw(key).map_or((None, default.to_string()), |(l, v)| (Some(*l), v.clone()))
    }

    fn coefficient(&mut self, key: &str) -> Coefficient {
        let (line, text) = self.word(key, "1");
        let toks: Vec<&str> = text.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().ok().filter(|x| x.is_finite());
        let c = match toks.as_slice() {
            [v] => num(v).map(Coefficient::Constant),
            ["linear", lo, hi] => match (num(lo), num(hi)) {
                (Some(at_minus), Some(at_plus)) => Some(Coefficient::Linear { at_minus, at_plus }),
                _ => None,
            },
            _ => None,
        };
        match c {
            Some(c) => {
                if let Err(e) = c.validate(key) {
                    self.err(line, e.to_string());
                }
                c
            }
            None => {
                self.err(line, format!("`{key}` must be a number or `linear <at -1> <at +1>`, got `{text}`"));
                Coefficient::Constant(1.0)
            }
        }
    }
}

impl RunConfig {
    /// Parses and validates a config, collecting every problem found.
    pub fn parse(text: &str) -> Result<Self, Vec<ConfigError>> {
        let mut e = Entries {
            map: BTreeMap::new(),
            errors: Vec::new(),
        };
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                e.err(Some(line), format!("expected `key = value`, got `{body}`"));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                e.err(Some(line), format!("unknown key `{k}`"));
            } else if v.is_empty() {
                e.err(Some(line), format!("empty value for `{k}`"));
            } else if let Some((first, _)) = e.map.get(k) {
                let first = *first;
                e.err(Some(line), format!("duplicate key `{k}` (first set on line {first})"));
            } else {
                e.map.insert(k.to_string(), (line, v.to_string()));
            }
        }

        let lx = e.positive("grid.Lx", Some(1.0));
        let ly = e.positive("grid.Ly", Some(1.0));
        let nx = e.count("grid.nx", None);
        let ny = e.count("grid.ny", None);
        let grid = match GridSpec::new(lx, ly, nx, ny) {
            Ok(g) => Some(g),
            Err(err) => {
                if lx.is_finite() && ly.is_finite() {
                    let line = e.raw("grid.nx").map(|x| x.0);
                    e.err(line, err.to_string());
                }
                None
            }
        };

        let (fline, fname) = e.word("kernel.family", "gaussian");
        let family = KernelFamily::parse(&fname).unwrap_or_else(|| {
            e.err(fline, format!("unknown kernel family `{fname}` (gaussian, compact-bump, wendland)"));
            KernelFamily::Gaussian
        });
        let amplitude = e.real("kernel.amplitude", None);
        let width = e.positive("kernel.width", None);
        let kernel = KernelSpec::new(family, amplitude, width);
        if amplitude < 0.0 {
            let line = e.raw("kernel.amplitude").map(|x| x.0);
            e.err(line, format!("`kernel.amplitude` must be >= 0, got {amplitude}"));
        }

        let mut potential = PotentialSpec::new(e.positive("potential.theta", None), e.real("potential.theta_c", Some(0.0)));
        potential.delta = e.positive("potential.delta", Some(potential.delta));
        potential.q = e.count("potential.q", Some(potential.q as usize)) as u32;
        if potential.theta.is_finite() && potential.delta.is_finite() {
            if let Err(err) = potential.validate() {
                e.err(None, err.to_string());
            }
        }

        let viscosity = e.coefficient("viscosity");
        let mobility = e.coefficient("mobility");

        let (kline, kind) = e.word("forcing.kind", "zero");
        let forcing = match kind.as_str() {
            "zero" => Forcing::Zero,
            "solenoidal" => Forcing::Solenoidal {
                amplitude: e.real("forcing.amplitude", None),
            },
            other => {
                e.err(kline, format!("unknown forcing kind `{other}` (zero, solenoidal)"));
                Forcing::Zero
            }
        };

        let (iline, ikind) = e.word("initial.kind", "perturbed");
        let k = e.real("initial.k", Some(0.0));
        if k.is_finite() && k.abs() >= 1.0 {
            let line = e.raw("initial.k").map(|x| x.0);
            e.err(line, format!("`initial.k` must lie in (-1, 1), got {k}"));
        }
        let initial = match ikind.as_str() {
            "constant" => Initial::Constant { k },
            "perturbed" => {
                let amplitude = e.real("initial.amplitude", Some(0.1));
                if amplitude.is_finite() && (amplitude < 0.0 || k.abs() + amplitude >= 1.0) {
                    let line = e.raw("initial.amplitude").map(|x| x.0);
                    e.err(line, format!("`initial.amplitude` must keep phi inside (-1, 1), got {amplitude}"));
                }
                Initial::Perturbed {
                    k,
                    amplitude,
                    seed: e.parsed("initial.seed", "a nonnegative integer").unwrap_or(0),
                }
            }
            other => {
                e.err(iline, format!("unknown initial kind `{other}` (constant, perturbed)"));
                Initial::Constant { k }
            }
        };

        let dt = e.positive("time.dt", None);
        let t_end = e.real("time.T_end", Some(0.0));
        if t_end < 0.0 {
            let line = e.raw("time.T_end").map(|x| x.0);
            e.err(line, format!("`time.T_end` must be >= 0, got {t_end}"));
        }
        let sample_every = e.count("output.sample_every", Some(1)).max(1);
        let track_distance = e.flag("evolve.distance");
        let steady_tol = e.positive("steady.tol", Some(1e-9));
        let steady_max_steps = e.count("steady.max_steps", Some(100_000));
        let steady_dt = e.positive("steady.dt", Some(if dt.is_finite() { dt } else { 1e-3 }));
        let steady_newton = e.flag("steady.newton");
        let c_embed = e.real("certify.C_embed", Some(1.0));
        if c_embed < 1.0 {
            let line = e.raw("certify.C_embed").map(|x| x.0);
            e.err(line, format!("`certify.C_embed` must be >= 1, got {c_embed}"));
        }
        let lambda1 = e.raw("certify.lambda1").is_some().then(|| e.positive("certify.lambda1", None));
        let norms_3d = if NORMS_3D_KEYS.iter().all(|k| e.raw(k).is_some()) {
            Some(Norms3d {
                lambda1: e.positive("certify3d.lambda1", None),
                c0: e.positive("certify3d.C0", None),
                norm_grad_j_l1: e.real("certify3d.norm_grad_J_L1", None),
                h_dual: e.real("certify3d.h_dual", None),
            })
        } else {
            None
        };
        let output_dir = e.raw("output.dir").map(|x| x.1.clone());

        if !e.errors.is_empty() {
            return Err(e.errors);
        }
        let canonical = e
            .map
            .into_iter()
            .filter(|(k, _)| k != "output.dir")
            .map(|(k, (_, v))| (k, v.split_whitespace().collect::<Vec<_>>().join(" ")))
            .collect();
        Ok(Self {
            grid: grid.expect("grid errors are reported above"),
            kernel,
            potential,
            viscosity,
            mobility,
            forcing,
            initial,
            dt,
            t_end,
            sample_every,
            track_distance,
            steady_tol,
            steady_max_steps,
            steady_dt,
            steady_newton,
            c_embed,
            lambda1,
            norms_3d,
            output_dir,
            canonical,
        })
    }

    /// Overrides the seed of the initial perturbation.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Initial::Perturbed { seed: s, .. } = &mut self.initial {
            *s = seed;
            self.canonical.insert("initial.seed".into(), seed.to_string());
        }
        self
    }

    /// First 16 hex digits of the SHA-256 of the sorted, whitespace-normalized
    /// entries (comments, ordering and the output directory do not count).
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.canonical {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn simulator(&self) -> nchns::Result<Simulator> {
        let kernel = Kernel::build(&self.kernel, &self.grid)?;
        let potential = Potential::new(self.potential)?;
        let mut params = SimParams::new(&self.grid, 1.0, 1.0, self.dt, self.t_end);
        params.viscosity = self.viscosity;
        params.mobility = self.mobility;
        if let Forcing::Solenoidal { amplitude } = self.forcing {
            params.forcing = solenoidal_forcing(&self.grid, amplitude);
        }
        Simulator::new(kernel, potential, params)
    }

    pub fn initial_state(&self) -> State {
        match self.initial {
            Initial::Constant { k } => State::constant(&self.grid, k),
            Initial::Perturbed { k, amplitude, seed } => State::perturbed(&self.grid, k, amplitude, seed),
        }
    }

    pub fn steady_config(&self) -> SteadyConfig {
        let mut c = SteadyConfig::new(self.initial.mean(), self.steady_dt);
        c.tol = self.steady_tol;
        c.max_steps = self.steady_max_steps;
        c.newton = self.steady_newton;
        if let Initial::Perturbed { amplitude, seed, .. } = self.initial {
            c.amplitude = amplitude;
            c.seed = seed;
        } else {
            c.amplitude = 0.0;
        }
        c
    }
}
