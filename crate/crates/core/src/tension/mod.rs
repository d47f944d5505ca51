//! Surface tensions: the slope-to-tilt maps of the discrete and continuous
//! gradient measures, their large-slope limit, and tabulation.
//!
//! For a tilt `s` the tilted weight of a bond gradient `z` is
//! `exp(-K V(z) + K s z)`. The tension at slope `u` is the tilt whose tilted
//! mean equals `u`. Because `V` acts on each component separately, every
//! quantity here is scalar and multi-dimensional tensions are applied
//! componentwise.

mod quadrature;
mod table;

pub use quadrature::integrate;
pub use table::{TensionTable, TableHeader};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensionKind {
    /// Integer gradients.
    Discrete,
    /// Real gradients.
    Continuous,
    /// `grad V`, the large-slope limit.
    Asymptotic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensionSpec {
    #[serde(rename = "K")]
    pub k: f64,
    pub potential: Potential,
    pub kind: TensionKind,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-10
}

/// Mean, variance and log partition function of a tilted measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
    pub log_z: f64,
}

impl TensionSpec {
    pub fn new(k: f64, potential: Potential, kind: TensionKind) -> Result<Self> {
        let s = TensionSpec { k, potential, kind, tol: default_tol() };
        s.validate()?;
        Ok(s)
    }

    pub fn discrete(k: f64, potential: Potential) -> Result<Self> {
        Self::new(k, potential, TensionKind::Discrete)
    }

    pub fn continuous(k: f64, potential: Potential) -> Result<Self> {
        Self::new(k, potential, TensionKind::Continuous)
    }

    pub fn asymptotic(k: f64, potential: Potential) -> Result<Self> {
        potential.require_smooth("the asymptotic tension")?;
        Self::new(k, potential, TensionKind::Asymptotic)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::config("K", format!("must be > 0, got {}", self.k)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::config("tol", format!("must be in (0, 1), got {}", self.tol)));
        }
        Ok(())
    }

    /// Tension at slope `u`.
    pub fn sigma(&self, u: f64) -> Result<f64> {
        match self.kind {
            TensionKind::Discrete => sigma_d(u, self),
            TensionKind::Continuous => sigma_c(u, self),
            TensionKind::Asymptotic => bar_sigma(u, &self.potential),
        }
    }

    /// `d sigma / du` at slope `u`.
    pub fn slope(&self, u: f64) -> Result<f64> {
        match self.kind {
            TensionKind::Asymptotic => Ok(self.potential.second_derivative(u)),
            _ => {
                let s = self.sigma(u)?;
                let m = self.moments(s)?;
                Ok(1.0 / (self.k * m.var))
            }
        }
    }

    /// Moments of the tilted measure at tilt `s`.
    pub fn moments(&self, s: f64) -> Result<Moments> {
        match self.kind {
            TensionKind::Discrete => discrete_moments(s, self.k, &self.potential),
            TensionKind::Continuous => continuous_moments(s, self.k, &self.potential),
            TensionKind::Asymptotic => Err(Error::Unsupported("the asymptotic tension has no tilted measure".into())),
        }
    }
}

fn check_tilt(s: f64, v: &Potential) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::Divergence(format!("tilt {s} is not finite")));
    }
    if v.degree() == 1.0 && s.abs() >= 1.0 {
        return Err(Error::Divergence(format!("|V| = |z| admits tilts |s| < 1 only, got {s}")));
    }
    Ok(())
}

/// Maximizer of `-V(z) + s z` over the reals.
fn mode(s: f64, v: &Potential) -> f64 {
    let p = v.degree();
    if p == 1.0 || s == 0.0 {
        0.0
    } else {
        s.signum() * (s.abs() / p).powf(1.0 / (p - 1.0))
    }
}

/// Relative size below which series tails and integrand tails are dropped.
const TAIL: f64 = 1e-18;

/// Moments of `exp(-K V(z) + K s z)` over the integers. The sum runs outward
/// from the mode and stops once a geometric bound on the remaining terms,
/// valid because the log-weight is concave, falls below `TAIL` times the
/// running sum.
pub fn discrete_moments(s: f64, k: f64, v: &Potential) -> Result<Moments> {
    check_tilt(s, v)?;
    let logw = |z: f64| -k * v.eval(z) + k * s * z;
    let m = mode(s, v);
    let z0 = if logw(m.floor()) >= logw(m.ceil()) { m.floor() } else { m.ceil() };
    let l0 = logw(z0);
    let (mut s0, mut s1, mut s2) = (1.0, 0.0, 0.0);
    for dir in [1.0, -1.0] {
        // Each side is summed on its own so that an untilted sum is exactly
        // symmetric.
        let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
        let mut j = 1.0;
        let mut prev = 1.0;
        loop {
            let t = (logw(z0 + dir * j) - l0).exp();
            a0 += t;
            a1 += j * t;
            a2 += j * j * t;
            let ratio = if prev > 0.0 { t / prev } else { 0.0 };
            if t == 0.0 || (ratio < 1.0 && t * ratio / (1.0 - ratio) < TAIL * (1.0 + a0)) {
                break;
            }
            prev = t;
            j += 1.0;
            if j > 1e9 {
                return Err(Error::Divergence(format!("tilted sum at s = {s} did not terminate")));
            }
        }
        s0 += a0;
        s1 += dir * a1;
        s2 += a2;
    }
    let mean_c = s1 / s0;
    Ok(Moments {
        mean: z0 + mean_c,
        var: (s2 / s0 - mean_c * mean_c).max(0.0),
        log_z: l0 + s0.ln(),
    })
}

/// Moments of `exp(-K V(w) + K s w)` over the real line, by adaptive
/// quadrature split at the kink of `V` and at the mode, truncated where the
/// density falls below `1e-16` of its maximum.
pub fn continuous_moments(s: f64, k: f64, v: &Potential) -> Result<Moments> {
    check_tilt(s, v)?;
    let logw = |w: f64| -k * v.eval(w) + k * s * w;
    let m = mode(s, v);
    let l0 = logw(m);
    let cut = (1e-16f64).ln();
    let reach = |dir: f64| {
        let mut step = 1.0;
        while logw(m + dir * step) - l0 > cut {
            step *= 2.0;
        }
        m + dir * step
    };
    let (lo, hi) = (reach(-1.0), reach(1.0));
    let mut breaks = vec![lo, m, hi];
    if lo < 0.0 && 0.0 < hi && m != 0.0 {
        breaks.push(0.0);
    }
    breaks.sort_by(f64::total_cmp);
    let f = |w: f64| {
        let t = (logw(w) - l0).exp();
        let c = w - m;
        [t, c * t, c * c * t]
    };
    let mut acc = [0.0; 3];
    for pair in breaks.windows(2) {
        let r = integrate(f, pair[0], pair[1], 1e-15 * (hi - lo))?;
        for i in 0..3 {
            acc[i] += r[i];
        }
    }
    let mean_c = acc[1] / acc[0];
    Ok(Moments {
        mean: m + mean_c,
        var: (acc[2] / acc[0] - mean_c * mean_c).max(0.0),
        log_z: l0 + acc[0].ln(),
    })
}

/// Tilted mean of the integer gradient measure at tilt `s`.
pub fn tilted_mean_discrete(s: f64, k: f64, v: &Potential) -> Result<f64> {
    Ok(discrete_moments(s, k, v)?.mean)
}

/// Tilted mean of the real gradient measure at tilt `s`.
pub fn tilted_mean_continuous(s: f64, k: f64, v: &Potential) -> Result<f64> {
    Ok(continuous_moments(s, k, v)?.mean)
}

/// Solves `mean(s) = u` for `u >= 0` by bracketing and safeguarded Newton,
/// using `d mean / ds = K Var`.
fn invert<F>(u: f64, spec: &TensionSpec, moments: F) -> Result<f64>
where
    F: Fn(f64) -> Result<Moments>,
{
    debug_assert!(u >= 0.0);
    if u == 0.0 {
        return Ok(0.0);
    }
    let sos = spec.potential.degree() == 1.0;
    let (mut lo, mut hi) = (0.0, if sos { 0.5 } else { spec.potential.derivative(u).max(1.0) });
    let mut expansions = 0;
    loop {
        let m = moments(hi)?.mean;
        if m >= u {
            break;
        }
        lo = hi;
        hi = if sos { 0.5 * (1.0 + hi) } else { 2.0 * hi };
        expansions += 1;
        if expansions > 60 || (sos && hi >= 1.0) {
            return Err(Error::Convergence(format!("could not bracket the tension at u = {u}")));
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let m = moments(s)?;
        let resid = m.mean - u;
        if resid.abs() <= 1e-14 * u.max(1.0) {
            return Ok(s);
        }
        if resid > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - resid / (spec.k * m.var);
        let next = if newton > lo && newton < hi && m.var > 0.0 { newton } else { 0.5 * (lo + hi) };
        if (next - s).abs() <= 1e-15 * s.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi {
            let fin = moments(next)?.mean;
            if (fin - u).abs() > spec.tol * u.max(1.0) {
                return Err(Error::Convergence(format!("tension at u = {u}: residual {:e}", fin - u)));
            }
            return Ok(next);
        }
        s = next;
    }
    Err(Error::Convergence(format!("Newton iteration for the tension at u = {u} did not settle")))
}

fn odd<F>(u: f64, f: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !u.is_finite() {
        return Err(Error::usage(format!("slope must be finite, got {u}")));
    }
    Ok(u.signum() * f(u.abs())?).map(|s| if u == 0.0 { 0.0 } else { s })
}

/// Tension of the integer gradient measure: the tilt whose tilted mean is `u`.
pub fn sigma_d(u: f64, spec: &TensionSpec) -> Result<f64> {
    let (k, v) = (spec.k, spec.potential);
    odd(u, |a| invert(a, spec, |s| discrete_moments(s, k, &v)))
}

/// Tension of the real gradient measure.
pub fn sigma_c(u: f64, spec: &TensionSpec) -> Result<f64> {
    let (k, v) = (spec.k, spec.potential);
    odd(u, |a| invert(a, spec, |s| continuous_moments(s, k, &v)))
}

/// Large-slope tension `V'(u)`.
pub fn bar_sigma(u: f64, v: &Potential) -> Result<f64> {
    v.require_smooth("the asymptotic tension")?;
    Ok(v.derivative(u))
}

/// `F_D(u) = s u - K^{-1} log Z(s)` at `s = sigma_d(u)`.
pub fn free_energy_d(u: f64, spec: &TensionSpec) -> Result<f64> {
    let s = sigma_d(u, spec)?;
    let m = discrete_moments(s, spec.k, &spec.potential)?;
    Ok(s * u - m.log_z / spec.k)
}
