//! Logarithmic double-well potential
//! `F(s) = theta/2 ((1+s) ln(1+s) + (1-s) ln(1-s)) - theta_c/2 s^2`,
//! its convex splitting and the structural checks on potential and kernel.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::coefficient::Coefficient;
use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Number of equispaced samples used for `C0`.
pub const C0_SAMPLES: usize = 4096;
/// Width of the windows near `+-1` used by the sampled derivative checks.
pub const EDGE_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub theta: f64,
    pub theta_c: f64,
    /// Evaluation clamps `s` into `[-1 + delta, 1 - delta]`.
    pub delta: f64,
    /// Order of the derivative checks, up to `F_1^(2+2q)`.
    pub q: u32,
}

impl PotentialSpec {
    pub fn new(theta: f64, theta_c: f64) -> Self {
        Self {
            theta,
            theta_c,
            delta: 1e-8,
            q: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::InvalidPotential(format!("theta must be > 0, got {}", self.theta)));
        }
        if !(self.theta_c.is_finite() && self.theta_c >= 0.0) {
            return Err(Error::InvalidPotential(format!("theta_c must be >= 0, got {}", self.theta_c)));
        }
        if !(self.delta > 0.0 && self.delta <= 1e-3) {
            return Err(Error::InvalidPotential(format!("delta must lie in (0, 1e-3], got {}", self.delta)));
        }
        if self.q == 0 {
            return Err(Error::InvalidPotential("q must be a positive integer".into()));
        }
        Ok(())
    }
}

/// Potential evaluator with a counter of clamped evaluations.
#[derive(Debug)]
pub struct Potential {
    spec: PotentialSpec,
    clamps: AtomicU64,
}

impl Clone for Potential {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec,
            clamps: AtomicU64::new(self.clamp_count()),
        }
    }
}

impl Potential {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            clamps: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    pub fn reset_clamps(&self) {
        self.clamps.store(0, Ordering::Relaxed);
    }

    fn clamp(&self, s: f64) -> f64 {
        let b = 1.0 - self.spec.delta;
        if s > b || s < -b || s.is_nan() {
            self.clamps.fetch_add(1, Ordering::Relaxed);
            if s.is_nan() {
                return 0.0;
            }
            return s.clamp(-b, b);
        }
        s
    }

    pub fn f_value(&self, s: f64) -> f64 {
        let s = self.clamp(s);
        let PotentialSpec { theta, theta_c, .. } = self.spec;
        entropy(theta, s) - 0.5 * theta_c * s * s
    }

    pub fn f_prime(&self, s: f64) -> f64 {
        let s = self.clamp(s);
        self.spec.theta * s.atanh() - self.spec.theta_c * s
    }

    pub fn f_double_prime(&self, s: f64) -> f64 {
        let s = self.clamp(s);
        self.spec.theta / (1.0 - s * s) - self.spec.theta_c
    }

    pub fn convex_split(&self) -> SplitPotential {
        SplitPotential {
            theta: self.spec.theta,
            kappa: self.spec.theta_c,
            delta: self.spec.delta,
        }
    }
}

fn entropy(theta: f64, s: f64) -> f64 {
    0.5 * theta * ((1.0 + s) * s.ln_1p() + (1.0 - s) * (-s).ln_1p())
}

/// `F(s) = G(s) - kappa/2 s^2` with `G` the entropy part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPotential {
    pub theta: f64,
    pub kappa: f64,
    delta: f64,
}

impl SplitPotential {
    fn clamp(&self, s: f64) -> f64 {
        let b = 1.0 - self.delta;
        s.clamp(-b, b)
    }

    pub fn g_value(&self, s: f64) -> f64 {
        entropy(self.theta, self.clamp(s))
    }

    pub fn g_prime(&self, s: f64) -> f64 {
        self.theta * self.clamp(s).atanh()
    }

    pub fn g_double_prime(&self, s: f64) -> f64 {
        let s = self.clamp(s);
        self.theta / (1.0 - s * s)
    }

    /// `k`-th derivative of `G` (no clamping, `|s| < 1`).
    pub fn g_derivative(&self, k: u32, s: f64) -> f64 {
        let th = self.theta;
        match k {
            0 => entropy(th, s),
            1 => th * s.atanh(),
            _ => {
                let p = (k - 1) as i32;
                let fact: f64 = (1..=(k - 2)).map(f64::from).product();
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                0.5 * th * fact * (sign / (1.0 + s).powi(p) + 1.0 / (1.0 - s).powi(p))
            }
        }
    }

    /// Solves `a s + G'(s) = w` for `s in (-1, 1)`, with `a >= 0`.
    ///
    /// Returns `s` and `ds/dw = 1 / (a + G''(s))`. Works in the variable
    /// `z = atanh(s)`, where the equation `theta z + a tanh z = w` has a
    /// derivative in `[theta, theta + a]` and a root in
    /// `[(w - a)/theta, (w + a)/theta]`.
    pub fn invert_convex(&self, w: f64, a: f64) -> (f64, f64) {
        let th = self.theta;
        let (mut lo, mut hi) = ((w - a) / th, (w + a) / th);
        let mut z = w / (th + a);
        for _ in 0..100 {
            let t = z.tanh();
            let g = th * z + a * t - w;
            if g > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let dg = th + a * (1.0 - t * t);
            let mut next = z - g / dg;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - z).abs() <= 1e-15 * (1.0 + z.abs()) || hi - lo <= 1e-15 * (1.0 + z.abs()) {
                z = next;
                break;
            }
            z = next;
        }
        let s = z.tanh();
        let sech2 = 1.0 / (z.cosh() * z.cosh());
        (s, sech2 / (a * sech2 + th))
    }
}

/// `C0 = min_{s, x} F''(s) + a(x)` over the sampled range. Errors if `C0 <= 0`.
pub fn compute_c0(potential: &Potential, kernel: &Kernel) -> Result<f64> {
    let c0 = sampled_c0(potential, kernel);
    if c0 > 0.0 {
        Ok(c0)
    } else {
        Err(Error::AssumptionA9Violated { c0 })
    }
}

fn sampled_c0(potential: &Potential, kernel: &Kernel) -> f64 {
    let spec = potential.spec();
    let b = 1.0 - spec.delta;
    let split = potential.convex_split();
    // the equispaced grid skips s = 0, where F'' is smallest
    let min_f2 = (0..C0_SAMPLES)
        .map(|i| -b + 2.0 * b * i as f64 / (C0_SAMPLES - 1) as f64)
        .chain(std::iter::once(0.0))
        .map(|s| split.g_double_prime(s) - split.kappa)
        .fold(f64::INFINITY, f64::min);
    min_f2 + kernel.beta()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    /// Short label, e.g. `A9`.
    pub label: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub c0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub norm_j_l1: f64,
    pub norm_grad_j_l1: f64,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, label: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.label == label)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Distances from the endpoint sampled inside the edge windows, from
/// `EDGE_WINDOW` down to `delta`, log-spaced.
fn edge_distances(delta: f64) -> Vec<f64> {
    let n = 64;
    let (l0, l1) = (EDGE_WINDOW.ln(), delta.max(1e-12).ln());
    (0..n).map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Evaluates the structural hypotheses on kernel, potential and coefficients
/// by sampling. Failures are reported, not raised.
pub fn check_assumptions(potential: &Potential, kernel: &Kernel, viscosity: &Coefficient, mobility: &Coefficient) -> AssumptionReport {
    let spec = *potential.spec();
    let split = potential.convex_split();
    let (norm_j, norm_gj) = kernel.norms();
    let beta = kernel.beta();
    let alpha = spec.theta;
    let kappa = split.kappa;
    let c0 = sampled_c0(potential, kernel);
    let order = 2 + 2 * spec.q;
    let dists = edge_distances(spec.delta);
    let mut checks = Vec::new();

    // kernel symmetry and sign
    let samples = kernel.samples();
    let n = samples.len();
    let symmetric = (0..n).all(|k| samples[k] == samples[n - 1 - k]);
    let nonneg = samples.iter().all(|&v| v >= 0.0) && kernel.a().min() >= 0.0;
    checks.push(AssumptionCheck {
        label: "A1",
        pass: symmetric && nonneg,
        detail: format!("J(x)=J(-x): {symmetric}, J >= 0 and a >= 0: {nonneg}, ||J||_L1 = {norm_j:.6e}, ||grad J||_L1 = {norm_gj:.6e}"),
    });

    let (nu1, nu2) = viscosity.bounds();
    checks.push(AssumptionCheck {
        label: "A2",
        pass: nu1 > 0.0 && nu2.is_finite(),
        detail: format!("{nu1} <= nu <= {nu2}"),
    });

    // F_1^(2+2q) bounded below near both ends
    let top = dists
        .iter()
        .flat_map(|d| [split.g_derivative(order, 1.0 - d), split.g_derivative(order, -1.0 + d)])
        .fold(f64::INFINITY, f64::min);
    checks.push(AssumptionCheck {
        label: "A3",
        pass: top > 0.0,
        detail: format!("min F1^({order}) near +-1 = {top:.6e}"),
    });

    // all derivatives positive near +1; even >= 0, odd <= 0 near -1
    let mut a4 = true;
    for d in &dists {
        for k in 0..=order {
            a4 &= split.g_derivative(k, 1.0 - d) > 0.0;
        }
        for j in 0..=spec.q {
            a4 &= split.g_derivative(2 * j + 2, -1.0 + d) >= 0.0;
            a4 &= split.g_derivative(2 * j + 1, -1.0 + d) <= 0.0;
        }
    }
    checks.push(AssumptionCheck {
        label: "A4",
        pass: a4,
        detail: format!("derivative signs up to order {order} in windows of width {EDGE_WINDOW}"),
    });

    // F_1^(2+2q) monotone towards the ends (distances decrease along `dists`)
    let mono = dists.windows(2).all(|w| {
        split.g_derivative(order, 1.0 - w[1]) >= split.g_derivative(order, 1.0 - w[0])
            && split.g_derivative(order, -1.0 + w[1]) >= split.g_derivative(order, -1.0 + w[0])
    });
    checks.push(AssumptionCheck {
        label: "A5",
        pass: mono,
        detail: format!("F1^({order}) non-decreasing towards 1, non-increasing towards -1"),
    });

    checks.push(AssumptionCheck {
        label: "A6",
        pass: alpha + beta > kappa,
        detail: format!("alpha = {alpha}, beta = min a = {beta:.6e}, alpha + beta > {kappa}"),
    });

    let up = dists.windows(2).all(|w| split.g_prime(1.0 - w[1]) > split.g_prime(1.0 - w[0]));
    let down = dists.windows(2).all(|w| split.g_prime(-1.0 + w[1]) < split.g_prime(-1.0 + w[0]));
    let edge = split.g_prime(1.0 - spec.delta);
    checks.push(AssumptionCheck {
        label: "A7",
        pass: up && down,
        detail: format!("F1' monotone towards +-1, F1'(1 - delta) = {edge:.6e}"),
    });

    let (m1, m2) = mobility.bounds();
    checks.push(AssumptionCheck {
        label: "A8",
        pass: m1 > 0.0 && m2.is_finite(),
        detail: format!("{m1} <= m <= {m2}"),
    });

    checks.push(AssumptionCheck {
        label: "A9",
        pass: c0 > 0.0 && norm_j <= c0 + kappa,
        detail: format!("C0 = {c0:.6e} > 0, ||J||_L1 = {norm_j:.6e} <= C0 + kappa = {:.6e}", c0 + kappa),
    });

    AssumptionReport {
        checks,
        c0,
        alpha,
        beta,
        kappa,
        norm_j_l1: norm_j,
        norm_grad_j_l1: norm_gj,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::kernel::{KernelFamily, KernelSpec};

    fn pot(theta: f64, theta_c: f64) -> Potential {
        Potential::new(PotentialSpec::new(theta, theta_c)).unwrap()
    }

    fn zero_kernel() -> Kernel {
        let g = GridSpec::new(1.0, 1.0, 16, 16).unwrap();
        Kernel::build(&KernelSpec::new(KernelFamily::Gaussian, 0.0, 0.2), &g).unwrap()
    }

    #[test]
    fn values_at_origin() {
        let p = pot(1.3, 0.4);
        assert_eq!(p.f_value(0.0), 0.0);
        assert_eq!(p.f_prime(0.0), 0.0);
        assert!((p.f_double_prime(0.0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn derivative_at_one_half() {
        let p = pot(1.0, 0.0);
        assert!((p.f_prime(0.5) - 0.5 * 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = pot(1.0, 0.7);
        let h = 1e-6;
        for i in 0..=180 {
            let s = -0.9 + 0.01 * i as f64;
            let d1 = (p.f_value(s + h) - p.f_value(s - h)) / (2.0 * h);
            let d2 = (p.f_prime(s + h) - p.f_prime(s - h)) / (2.0 * h);
            let e1 = p.f_prime(s);
            let e2 = p.f_double_prime(s);
            assert!((d1 - e1).abs() <= 1e-6 * e1.abs().max(1e-3), "F' at {s}");
            assert!((d2 - e2).abs() <= 1e-6 * e2.abs().max(1e-3), "F'' at {s}");
        }
        assert_eq!(p.clamp_count(), 0);
    }

    #[test]
    fn clamping_is_counted() {
        let p = pot(1.0, 0.0);
        let edge = p.f_prime(1.0 - 1e-8);
        assert_eq!(p.clamp_count(), 0);
        assert_eq!(p.f_prime(1.0), edge);
        assert_eq!(p.f_prime(2.0), edge);
        assert_eq!(p.clamp_count(), 2);
        assert!(edge > p.f_prime(1.0 - 1e-6) && edge > 0.0);
        p.reset_clamps();
        assert_eq!(p.clamp_count(), 0);
    }

    #[test]
    fn split_reconstructs_the_potential() {
        let p = pot(2.0, 1.0);
        let g = p.convex_split();
        assert_eq!(g.kappa, 1.0);
        assert_eq!(g.g_double_prime(0.0), 2.0);
        for i in 0..1000 {
            let s = -0.999 + 1.998 * i as f64 / 999.0;
            assert!((g.g_value(s) - 0.5 * g.kappa * s * s - p.f_value(s)).abs() < 1e-14);
            assert!(g.g_double_prime(s) > 0.0);
        }
    }

    #[test]
    fn higher_derivatives_match_finite_differences() {
        let g = pot(1.0, 0.0).convex_split();
        let h = 1e-5;
        for k in 1..6 {
            for s in [-0.8, -0.3, 0.0, 0.4, 0.85] {
                let fd = (g.g_derivative(k - 1, s + h) - g.g_derivative(k - 1, s - h)) / (2.0 * h);
                let ex = g.g_derivative(k, s);
                assert!((fd - ex).abs() <= 1e-5 * ex.abs().max(1.0), "order {k} at {s}: {fd} vs {ex}");
            }
        }
    }

    #[test]
    fn convex_inverse_solves_the_cell_equation() {
        let g = pot(0.8, 0.0).convex_split();
        for a in [0.0, 0.3, 5.0] {
            for w in [-4.0, -1.0, -0.1, 0.0, 0.2, 1.7, 4.0] {
                let (s, ds) = g.invert_convex(w, a);
                assert!(s.abs() < 1.0);
                let r = a * s + g.theta * s.atanh() - w;
                assert!(r.abs() <= 1e-12 * (1.0 + w.abs()), "a {a} w {w} r {r}");
                let h = 1e-6;
                let fd = (g.invert_convex(w + h, a).0 - g.invert_convex(w - h, a).0) / (2.0 * h);
                assert!((fd - ds).abs() <= 1e-6 * ds.max(1e-12) + 1e-12);
            }
        }
    }

    #[test]
    fn c0_cases() {
        let k = zero_kernel();
        assert!((compute_c0(&pot(1.0, 0.0), &k).unwrap() - 1.0).abs() < 1e-15);
        assert!((compute_c0(&pot(1.0, 0.5), &k).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(compute_c0(&pot(0.5, 1.0), &k), Err(Error::AssumptionA9Violated { .. })));
    }

    #[test]
    fn small_gaussian_passes_everything() {
        let g = GridSpec::new(1.0, 1.0, 32, 32).unwrap();
        let k = Kernel::build(&KernelSpec::new(KernelFamily::Gaussian, 0.1, 0.1), &g).unwrap();
        let r = check_assumptions(&pot(1.0, 0.0), &k, &Coefficient::Constant(1.0), &Coefficient::Constant(1.0));
        assert!(r.all_pass(), "{:?}", r.failures().collect::<Vec<_>>());
        assert_eq!(r.alpha, 1.0);
        assert!(r.c0 > 1.0);
    }

    #[test]
    fn heavy_kernel_fails_the_mass_clause() {
        // mass 2 but min a ~ 1/2 at the corners, so C0 ~ 1.5 < ||J||
        let g = GridSpec::new(1.0, 1.0, 32, 32).unwrap();
        let k = Kernel::build(&KernelSpec::new(KernelFamily::Gaussian, 2.0, 0.1), &g).unwrap();
        let r = check_assumptions(&pot(1.0, 0.0), &k, &Coefficient::Constant(1.0), &Coefficient::Constant(1.0));
        assert!((r.norm_j_l1 - 2.0).abs() < 1e-3);
        assert!(r.c0 > 0.0 && r.c0 < 2.0);
        assert!(!r.check("A9").unwrap().pass);
        assert!(r.check("A6").unwrap().pass);
    }

    #[test]
    fn zero_mobility_fails() {
        let r = check_assumptions(&pot(1.0, 0.0), &zero_kernel(), &Coefficient::Constant(1.0), &Coefficient::Constant(0.0));
        assert!(!r.check("A8").unwrap().pass);
        assert!(r.check("A2").unwrap().pass);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(Potential::new(PotentialSpec::new(0.0, 0.0)).is_err());
        assert!(Potential::new(PotentialSpec { delta: 0.1, ..PotentialSpec::new(1.0, 0.0) }).is_err());
    }
}
