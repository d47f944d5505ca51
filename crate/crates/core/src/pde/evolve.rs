use serde::Serialize;

use super::ops::{div_tension_into, max_gradient_raw, rhs_into, Grid, Workspace};
use super::{PdeConfig, PdeKind, TensionSource};
use crate::error::{Error, Result};
use crate::field::ContinuumField;

/// Where and when the rough exponent overflowed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowUpMarker {
    pub time: f64,
    pub cell: usize,
    pub exponent: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// `(time, dt)` at each recorded snapshot.
    pub dt_history: Vec<(f64, f64)>,
    pub table_extensions: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evolution {
    pub snapshots: Vec<(f64, ContinuumField)>,
    pub blow_up: Option<BlowUpMarker>,
    pub stats: StepStats,
}

impl Evolution {
    pub fn last(&self) -> &ContinuumField {
        &self.snapshots.last().expect("initial snapshot is always recorded").1
    }

    pub fn completed(&self) -> bool {
        self.blow_up.is_none()
    }
}

/// Consecutive accepted steps before the step is doubled.
const GROWTH_STREAK: u32 = 20;

/// Buffers for RK4 step doubling.
struct Stepper {
    g: Grid,
    ws: Workspace,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    mid: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
    /// `rhs(y)` at the start of the step.
    k1: Vec<f64>,
    k1_mid: Vec<f64>,
}

impl Stepper {
    fn new(g: Grid, len: usize) -> Self {
        let z = || vec![0.0; len];
        Stepper {
            g,
            ws: Workspace::new(g.d, len),
            k: [z(), z(), z(), z()],
            stage: z(),
            mid: z(),
            full: z(),
            half: z(),
            k1: z(),
            k1_mid: z(),
        }
    }

    fn rhs(&mut self, cfg: &PdeConfig, tension: &TensionSource, y: &[f64], out: &mut [f64]) -> Result<()> {
        rhs_into(self.g, y, cfg, tension, &mut self.ws, out)
    }

    /// Classic RK4 over `h` from `y`, whose right-hand side is `k1`.
    fn rk4(&mut self, cfg: &PdeConfig, tension: &TensionSource, y: &[f64], k1: &[f64], h: f64, out: &mut [f64]) -> Result<()> {
        let mut k = std::mem::take(&mut self.k);
        let mut stage = std::mem::take(&mut self.stage);
        let res = (|| -> Result<()> {
            k[0].copy_from_slice(k1);
            for (j, frac) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
                for (s, (&a, &b)) in stage.iter_mut().zip(y.iter().zip(&k[j - 1])) {
                    *s = a + frac * h * b;
                }
                self.rhs(cfg, tension, &stage, &mut k[j])?;
            }
            let [k0, k1, k2, k3] = &k;
            for i in 0..y.len() {
                out[i] = y[i] + h / 6.0 * (k0[i] + 2.0 * (k1[i] + k2[i]) + k3[i]);
            }
            Ok(())
        })();
        self.k = k;
        self.stage = stage;
        res
    }

    /// One full step and two half steps from `y`; leaves the two-half-step
    /// result in `half` and returns the relative difference.
    fn double_step(&mut self, cfg: &PdeConfig, tension: &TensionSource, y: &[f64], h: f64) -> Result<f64> {
        let mut full = std::mem::take(&mut self.full);
        let mut mid = std::mem::take(&mut self.mid);
        let mut half = std::mem::take(&mut self.half);
        let k1 = std::mem::take(&mut self.k1);
        let mut k1_mid = std::mem::take(&mut self.k1_mid);
        let res = (|| -> Result<()> {
            self.rk4(cfg, tension, y, &k1, h, &mut full)?;
            self.rk4(cfg, tension, y, &k1, 0.5 * h, &mut mid)?;
            self.rhs(cfg, tension, &mid, &mut k1_mid)?;
            self.rk4(cfg, tension, &mid, &k1_mid, 0.5 * h, &mut half)
        })();
        let err = res.map(|_| {
            let scale = half.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = half.iter().zip(&full).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if diff == 0.0 {
                0.0
            } else {
                diff / scale.max(f64::MIN_POSITIVE)
            }
        });
        self.full = full;
        self.mid = mid;
        self.half = half;
        self.k1 = k1;
        self.k1_mid = k1_mid;
        err
    }
}

/// Linearized explicit stability limit for the current state.
fn stability_cap(g: Grid, y: &[f64], cfg: &PdeConfig, tension: &TensionSource, s_max: f64, edges: &mut [f64], inner: &mut [f64]) -> f64 {
    let c = cfg.prefactor(g.d);
    let d2 = (g.d * g.d) as f64;
    let stiffness = match cfg.kind {
        PdeKind::Smooth => c * cfg.k * s_max,
        PdeKind::Rough => {
            let a = cfg.exponent_factor();
            let sigma = |u: f64| tension.eval(u);
            div_tension_into(g, y, &sigma, edges, inner);
            let e_max = inner.iter().fold(0.0f64, |m, v| m.max((-a * v).min(700.0).exp()));
            c * a * s_max * e_max
        }
    };
    if stiffness > 0.0 && stiffness.is_finite() {
        cfg.dt_safety * g.dx.powi(4) / (8.0 * stiffness * d2)
    } else {
        f64::INFINITY
    }
}

/// Integrates from `h0` to `cfg.t_end` with RK4 and step-doubling error
/// control, capping the step at the linearized stability limit. Steps are
/// shortened to land exactly on every snapshot time; the initial state and
/// `t_end` are always recorded. A rough-PDE overflow
/// at an accepted state ends the run early with a [`BlowUpMarker`].
pub fn evolve(h0: &ContinuumField, cfg: &PdeConfig) -> Result<Evolution> {
    cfg.validate()?;
    let g = Grid::of(h0);
    let n = h0.len();
    let mut tension = cfg.tension.clone();
    let mut targets: Vec<f64> = cfg.snapshot_times.clone();
    if targets.first() != Some(&0.0) {
        targets.insert(0, 0.0);
    }
    if targets.last().is_none_or(|&t| t < cfg.t_end) {
        targets.push(cfg.t_end);
    }
    let t_final = cfg.t_end;
    let mut stats = StepStats { dt_min: f64::INFINITY, ..Default::default() };
    let mut snapshots = Vec::with_capacity(targets.len());
    let mut y = h0.values().to_vec();
    let mut t = 0.0;
    let mut next = 0;
    let record = |t: f64, y: &[f64], next: &mut usize, dt: f64, stats: &mut StepStats, snaps: &mut Vec<(f64, ContinuumField)>| {
        while *next < targets.len() && targets[*next] <= t {
            snaps.push((targets[*next], h0.with_values(y.to_vec()).expect("same grid")));
            stats.dt_history.push((targets[*next], dt));
            *next += 1;
        }
    };
    record(t, &y, &mut next, 0.0, &mut stats, &mut snapshots);

    let mut stepper = Stepper::new(g, n);
    let mut edges = vec![0.0; g.d * n];
    let mut inner = vec![0.0; n];
    let mut slope_cache: Option<(f64, f64)> = None;
    let mut dt = f64::INFINITY;
    let mut streak = 0;
    let dt_floor = 1e-18 * t_final;

    while next < targets.len() {
        let gmax = max_gradient_raw(g, &y);
        if let TensionSource::Table(tab) = &tension {
            if !tab.covers(gmax) {
                tension.ensure_covers(gmax)?;
                stats.table_extensions += 1;
                slope_cache = None;
            }
        }
        let s_max = match slope_cache {
            Some((a, s)) if gmax <= a && gmax >= 0.5 * a => s,
            _ => {
                let a = (1.1 * gmax).max(1e-12);
                let s = tension.max_slope(a);
                slope_cache = Some((a, s));
                s
            }
        };
        let cap = stability_cap(g, &y, cfg, &tension, s_max, &mut edges, &mut inner);
        if !dt.is_finite() {
            dt = cap.min(t_final - t);
        }
        dt = dt.min(cap);
        let remaining = targets[next] - t;
        let h = dt.min(remaining);

        let mut k1 = std::mem::take(&mut stepper.k1);
        let start = stepper.rhs(cfg, &tension, &y, &mut k1);
        stepper.k1 = k1;
        if let Err(e) = start {
            return match e {
                Error::BlowUp { cell, exponent, .. } => Ok(finish(
                    snapshots,
                    Some(BlowUpMarker { time: t, cell, exponent }),
                    stats,
                )),
                other => Err(other),
            };
        }
        let err = match stepper.double_step(cfg, &tension, &y, h) {
            Ok(e) => e,
            Err(Error::BlowUp { .. }) => f64::INFINITY,
            Err(other) => return Err(other),
        };
        if !(err <= cfg.tol) {
            stats.rejected += 1;
            streak = 0;
            dt = 0.5 * h;
            if dt < dt_floor {
                return Err(Error::Stiffness {
                    time: t,
                    dt,
                    detail: format!(
                        "step-doubling error {err:e} > {:e}; stability cap {cap:e}; {} accepted, {} rejected",
                        cfg.tol, stats.accepted, stats.rejected
                    ),
                });
            }
            continue;
        }
        std::mem::swap(&mut y, &mut stepper.half);
        t = if h == remaining { targets[next] } else { t + h };
        stats.accepted += 1;
        stats.dt_min = stats.dt_min.min(h);
        stats.dt_max = stats.dt_max.max(h);
        streak += 1;
        if streak >= GROWTH_STREAK {
            dt *= 2.0;
            streak = 0;
        }
        record(t, &y, &mut next, h, &mut stats, &mut snapshots);
    }
    Ok(finish(snapshots, None, stats))
}

fn finish(snapshots: Vec<(f64, ContinuumField)>, blow_up: Option<BlowUpMarker>, mut stats: StepStats) -> Evolution {
    if stats.accepted == 0 {
        stats.dt_min = 0.0;
    }
    Evolution { snapshots, blow_up, stats }
}
