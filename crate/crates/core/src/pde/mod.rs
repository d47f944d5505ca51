//! Conservative periodic finite differences for the smooth and rough
//! fourth-order relaxation PDEs on `[0,1)^d`.
//!
//! Both right-hand sides are built from the staggered operator
//! `div_tension(h) = D^- . sigma(D^+ h)`:
//!
//! * smooth: `h_t = -c K Lap div_tension(h, sigma)`
//! * rough:  `h_t = c Lap exp(-K div_tension(h, grad V))`
//!
//! with `c = 1/(2d)` by default.

mod evolve;
mod ops;

pub use evolve::{evolve, BlowUpMarker, Evolution, StepStats};
pub use ops::{div_tension, laplacian, max_gradient, rhs, rhs_rough, rhs_smooth};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::tension::{TensionKind, TensionSpec, TensionTable};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    #[default]
    Smooth,
    Rough,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientConvention {
    /// Prefactor `1/(2d)`, and `K` in the rough exponent.
    #[default]
    #[serde(rename = "with_2d_inverse")]
    WithTwoDInverse,
    /// Prefactor 1, and no `K` in the rough exponent.
    Bare,
}

/// The tension evaluated on grid edges.
#[derive(Clone, Debug, PartialEq)]
pub enum TensionSource {
    Table(TensionTable),
    /// `V'(u)`, evaluated in closed form.
    Asymptotic(Potential),
}

impl TensionSource {
    /// Symmetric table of `spec` on `[-u_max, u_max]` with spacing `du`, or
    /// the closed form for the asymptotic kind.
    pub fn build(spec: &TensionSpec, u_max: f64, du: f64) -> Result<Self> {
        if spec.kind == TensionKind::Asymptotic {
            spec.potential.require_smooth("the asymptotic tension")?;
            return Ok(TensionSource::Asymptotic(spec.potential));
        }
        if !(u_max > 0.0 && du > 0.0) {
            return Err(Error::config("tension", "table range and spacing must be positive"));
        }
        let half = (u_max / du).ceil().max(4.0) as usize;
        let reach = half as f64 * du;
        Ok(TensionSource::Table(TensionTable::tabulate(spec, -reach, reach, 2 * half + 1)?))
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            TensionSource::Table(t) => t.interpolate(u),
            TensionSource::Asymptotic(v) => v.derivative(u),
        }
    }

    /// Largest tension slope for gradients in `[-a, a]`; infinite for
    /// `V'` with `p < 2`, whose slope is unbounded near zero.
    pub fn max_slope(&self, a: f64) -> f64 {
        match self {
            TensionSource::Table(t) => t.max_slope(a),
            TensionSource::Asymptotic(v) => {
                let p = v.degree();
                if p < 2.0 {
                    f64::INFINITY
                } else {
                    v.second_derivative(a).max(v.second_derivative(0.0))
                }
            }
        }
    }

    /// Extends a table, if needed, to cover gradients up to `a`.
    pub fn ensure_covers(&mut self, a: f64) -> Result<()> {
        if let TensionSource::Table(t) = self {
            if !t.covers(a) {
                *t = t.extended_to(1.25 * a)?;
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> TensionKind {
        match self {
            TensionSource::Table(t) => t.spec().kind,
            TensionSource::Asymptotic(_) => TensionKind::Asymptotic,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeConfig {
    pub kind: PdeKind,
    pub tension: TensionSource,
    pub k: f64,
    pub convention: CoefficientConvention,
    /// Fraction of the linearized stability limit used as the step cap.
    pub dt_safety: f64,
    /// Relative step-doubling error accepted per step.
    pub tol: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

impl PdeConfig {
    pub fn new(kind: PdeKind, tension: TensionSource, k: f64, t_end: f64) -> Self {
        PdeConfig {
            kind,
            tension,
            k,
            convention: CoefficientConvention::default(),
            dt_safety: 1.0,
            tol: 1e-8,
            t_end,
            snapshot_times: Vec::new(),
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_convention(mut self, c: CoefficientConvention) -> Self {
        self.convention = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::config("K", "must be > 0"));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(Error::config("dt_safety", "must lie in (0, 1]"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("tol", "must be > 0"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", "must be finite and >= 0"));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0])
            || self.snapshot_times.iter().any(|&t| t < 0.0 || t > self.t_end)
        {
            return Err(Error::config("snapshot_times", "must be sorted and within [0, t_end]"));
        }
        if self.kind == PdeKind::Rough && self.tension.kind() != TensionKind::Asymptotic {
            return Err(Error::config("tension", "the rough PDE uses the asymptotic tension"));
        }
        Ok(())
    }

    /// Prefactor `c` in front of the outer Laplacian.
    pub fn prefactor(&self, d: usize) -> f64 {
        match self.convention {
            CoefficientConvention::WithTwoDInverse => 1.0 / (2 * d) as f64,
            CoefficientConvention::Bare => 1.0,
        }
    }

    /// Factor multiplying `div_tension` inside the rough exponential.
    pub fn exponent_factor(&self) -> f64 {
        match self.convention {
            CoefficientConvention::WithTwoDInverse => self.k,
            CoefficientConvention::Bare => 1.0,
        }
    }
}
