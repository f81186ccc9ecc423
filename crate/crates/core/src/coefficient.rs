//! Transport coefficients `nu(phi)` and `m(phi)`.

use crate::error::{Error, Result};
use crate::grid::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// Affine in `phi`, from `at_minus` at `phi = -1` to `at_plus` at `phi = 1`,
    /// frozen outside `[-1, 1]`.
    Linear { at_minus: f64, at_plus: f64 },
}

impl Coefficient {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            Coefficient::Constant(c) => c,
            Coefficient::Linear { at_minus, at_plus } => {
                let t = 0.5 * (s.clamp(-1.0, 1.0) + 1.0);
                at_minus + t * (at_plus - at_minus)
            }
        }
    }

    /// `(inf, sup)` over all of `R`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Coefficient::Constant(c) => (c, c),
            Coefficient::Linear { at_minus, at_plus } => (at_minus.min(at_plus), at_minus.max(at_plus)),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            Coefficient::Constant(_) => true,
            Coefficient::Linear { at_minus, at_plus } => at_minus == at_plus,
        }
    }

    /// The value when constant.
    pub fn constant_value(&self) -> Option<f64> {
        self.is_constant().then(|| self.bounds().0)
    }

    pub fn at_cells(&self, phi: &ScalarField) -> ScalarField {
        phi.map(|s| self.eval(s))
    }

    /// Errors unless the coefficient is finite with a positive lower bound.
    pub fn validate(&self, name: &str) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 {
            return Err(Error::InvalidArgument(format!("{name} must be finite with a positive lower bound, got [{lo}, {hi}]")));
        }
        Ok(())
    }
}
