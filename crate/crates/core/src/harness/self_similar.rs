use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ContinuumField;
use crate::pde::{evolve, PdeConfig};

/// Amplitudes below this are treated as a vanished profile.
const MIN_AMPLITUDE: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationStep {
    /// `L-infinity` change of the normalized profile.
    pub change: f64,
    /// `max |h|` before rescaling.
    pub amplitude: f64,
    /// Mean height before rescaling.
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfSimilarResult {
    /// Normalized profile, `max |g| = 1`.
    pub g: ContinuumField,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationStep>,
}

fn normalized(h: &ContinuumField) -> Result<(ContinuumField, f64)> {
    let amp = h.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(amp >= MIN_AMPLITUDE) {
        return Err(Error::Degenerate(format!("profile amplitude {amp:e} is too small to rescale")));
    }
    Ok((h.with_values(h.values().iter().map(|v| v / amp).collect())?, amp))
}

/// Alternates evolving for `interval` and rescaling to `max |h| = 1`
/// until the normalized profile changes by less than `tol`.
pub fn self_similar_iterate(
    h0: &ContinuumField,
    cfg: &PdeConfig,
    interval: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SelfSimilarResult> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::usage("the iteration interval must be positive"));
    }
    let mut step = cfg.clone();
    step.t_end = interval;
    step.snapshot_times.clear();
    let (mut g, _) = normalized(h0)?;
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let ev = evolve(&g, &step)?;
        if let Some(b) = ev.blow_up {
            return Err(Error::BlowUp { cell: b.cell, time: b.time, exponent: b.exponent });
        }
        let h = ev.last();
        let (next, amplitude) = normalized(h)?;
        let change = next.values().iter().zip(g.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        history.push(IterationStep { change, amplitude, mass: h.mean() });
        g = next;
        if change < tol {
            return Ok(SelfSimilarResult { g, iterations: history.len(), converged: true, history });
        }
    }
    Ok(SelfSimilarResult { g, iterations: history.len(), converged: false, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{PdeKind, TensionSource};
    use crate::potential::Potential;
    use crate::tension::TensionSpec;
    use std::f64::consts::PI;

    fn cfg() -> PdeConfig {
        let spec = TensionSpec::asymptotic(1.5, Potential::gaussian()).unwrap();
        PdeConfig::new(PdeKind::Smooth, TensionSource::build(&spec, 0.0, 0.0).unwrap(), 1.5, 0.0)
    }

    #[test]
    fn linear_mode_is_a_fixed_point() {
        let h0 = ContinuumField::from_fn(1, 32, |x| 0.5 * (2.0 * PI * x[0]).sin() + 0.1 * (6.0 * PI * x[0]).sin()).unwrap();
        let r = self_similar_iterate(&h0, &cfg(), 2e-4, 1e-6, 200).unwrap();
        assert!(r.converged);
        let peak = r.g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-15);
        for (k, v) in r.g.values().iter().enumerate() {
            let want = (2.0 * PI * k as f64 / 32.0).sin() / (2.0 * PI * 8.0 / 32.0).sin();
            assert!((v - want).abs() < 1e-5);
        }
    }

    #[test]
    fn errors() {
        let flat = ContinuumField::zeros(1, 16).unwrap();
        assert!(matches!(self_similar_iterate(&flat, &cfg(), 1e-4, 1e-6, 3), Err(Error::Degenerate(_))));
        let h0 = ContinuumField::from_fn(1, 16, |x| (2.0 * PI * x[0]).sin()).unwrap();
        assert!(self_similar_iterate(&h0, &cfg(), 0.0, 1e-6, 3).is_err());
        let r = self_similar_iterate(&h0, &cfg(), 1e-9, 1e-300, 2).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }
}
