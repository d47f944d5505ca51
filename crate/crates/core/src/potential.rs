//! The symmetric convex bond potential `V(z) = |z|^p`.
//!
//! `p = 1` is the solid-on-solid model and `p = 2` the discrete Gaussian
//! model. Integer degrees take exact fast paths so that lattice energies stay
//! integer valued.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialRepr", into = "PotentialRepr")]
pub struct Potential {
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct PotentialRepr {
    p: f64,
}

impl TryFrom<PotentialRepr> for Potential {
    type Error = Error;

    fn try_from(repr: PotentialRepr) -> Result<Self> {
        Potential::new(repr.p)
    }
}

impl From<Potential> for PotentialRepr {
    fn from(v: Potential) -> Self {
        PotentialRepr { p: v.p }
    }
}

impl Potential {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::config("p", format!("homogeneity degree must be >= 1, got {p}")));
        }
        Ok(Potential { p })
    }

    /// Solid-on-solid, `V(z) = |z|`.
    pub fn sos() -> Self {
        Potential { p: 1.0 }
    }

    /// Discrete Gaussian, `V(z) = z^2`.
    pub fn gaussian() -> Self {
        Potential { p: 2.0 }
    }

    pub fn degree(&self) -> f64 {
        self.p
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        let a = z.abs();
        if self.p == 1.0 {
            a
        } else if self.p == 2.0 {
            a * a
        } else if self.p == 3.0 {
            a * a * a
        } else {
            a.powf(self.p)
        }
    }

    /// Scalar derivative `V'(z) = p |z|^{p-2} z`. Only defined for `p > 1`.
    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        if self.p == 2.0 {
            2.0 * z
        } else if z == 0.0 {
            0.0
        } else {
            self.p * z.abs().powf(self.p - 1.0) * z.signum()
        }
    }

    /// `V''(z)`; infinite at zero when `1 < p < 2`.
    pub fn second_derivative(&self, z: f64) -> f64 {
        if self.p == 2.0 {
            2.0
        } else if self.p == 1.0 {
            0.0
        } else {
            self.p * (self.p - 1.0) * z.abs().powf(self.p - 2.0)
        }
    }

    /// Componentwise gradient of the separable potential.
    pub fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.require_smooth("gradient")?;
        Ok(u.iter().map(|&x| self.derivative(x)).collect())
    }

    pub(crate) fn require_smooth(&self, what: &str) -> Result<()> {
        if self.p <= 1.0 {
            return Err(Error::Unsupported(format!(
                "{what} of V(z) = |z| is not defined (p = 1 is not allowed here)"
            )));
        }
        Ok(())
    }

    /// Rough-scaling height exponent `q = p / (p - 1)`.
    pub fn conjugate_exponent(&self) -> Result<f64> {
        self.require_smooth("rough scaling")?;
        Ok(self.p / (self.p - 1.0))
    }
}
