use super::{PdeConfig, PdeKind, TensionSource};
use crate::error::{Error, Result};
use crate::field::ContinuumField;

/// Largest exponent accepted in the rough right-hand side.
pub(crate) const EXP_LIMIT: f64 = 700.0;

/// Periodic neighbor offsets along each axis of a `d`-dimensional grid.
#[derive(Clone, Copy)]
pub(crate) struct Grid {
    pub d: usize,
    pub m: usize,
    pub dx: f64,
}

impl Grid {
    pub fn of(h: &ContinuumField) -> Self {
        Grid { d: h.dim(), m: h.side(), dx: h.dx() }
    }

    #[inline]
    fn stride(&self, axis: usize) -> usize {
        if self.d == 1 || axis == 1 {
            1
        } else {
            self.m
        }
    }

    #[inline]
    pub fn plus(&self, k: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (k / s) % self.m == self.m - 1 {
            k + s - self.m * s
        } else {
            k + s
        }
    }

    #[inline]
    pub fn minus(&self, k: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (k / s).is_multiple_of(self.m) {
            k + self.m * s - s
        } else {
            k - s
        }
    }
}

/// `out = D^- . sigma(D^+ h)`; `edges` is scratch of length `d * len`.
pub(crate) fn div_tension_into(g: Grid, h: &[f64], sigma: &impl Fn(f64) -> f64, edges: &mut [f64], out: &mut [f64]) {
    let n = h.len();
    let inv = 1.0 / g.dx;
    for axis in 0..g.d {
        let e = &mut edges[axis * n..(axis + 1) * n];
        for k in 0..n {
            e[k] = sigma((h[g.plus(k, axis)] - h[k]) * inv);
        }
    }
    for k in 0..n {
        let mut acc = 0.0;
        for axis in 0..g.d {
            let e = &edges[axis * n..(axis + 1) * n];
            acc += e[k] - e[g.minus(k, axis)];
        }
        out[k] = acc * inv;
    }
}

pub(crate) fn laplacian_into(g: Grid, f: &[f64], scale: f64, out: &mut [f64]) {
    let c = scale / (g.dx * g.dx);
    for k in 0..f.len() {
        let mut acc = -2.0 * g.d as f64 * f[k];
        for axis in 0..g.d {
            acc += f[g.plus(k, axis)] + f[g.minus(k, axis)];
        }
        out[k] = c * acc;
    }
}

/// Largest absolute forward difference quotient over all edges.
pub fn max_gradient(h: &ContinuumField) -> f64 {
    max_gradient_raw(Grid::of(h), h.values())
}

pub(crate) fn max_gradient_raw(g: Grid, h: &[f64]) -> f64 {
    let mut best: f64 = 0.0;
    for k in 0..h.len() {
        for axis in 0..g.d {
            best = best.max((h[g.plus(k, axis)] - h[k]).abs());
        }
    }
    best / g.dx
}

/// Scratch buffers for repeated right-hand-side evaluation.
pub(crate) struct Workspace {
    edges: Vec<f64>,
    inner: Vec<f64>,
}

impl Workspace {
    pub fn new(d: usize, len: usize) -> Self {
        Workspace { edges: vec![0.0; d * len], inner: vec![0.0; len] }
    }
}

/// Evaluates the configured right-hand side into `out`. A blown-up rough
/// exponent is reported with time `0`; callers fill in the time.
pub(crate) fn rhs_into(g: Grid, h: &[f64], cfg: &PdeConfig, tension: &TensionSource, ws: &mut Workspace, out: &mut [f64]) -> Result<()> {
    let sigma = |u: f64| tension.eval(u);
    div_tension_into(g, h, &sigma, &mut ws.edges, &mut ws.inner);
    let c = cfg.prefactor(g.d);
    match cfg.kind {
        PdeKind::Smooth => laplacian_into(g, &ws.inner, -c * cfg.k, out),
        PdeKind::Rough => {
            let a = cfg.exponent_factor();
            for (k, v) in ws.inner.iter_mut().enumerate() {
                let e = -a * *v;
                if !(e <= EXP_LIMIT) {
                    return Err(Error::BlowUp { cell: k, time: 0.0, exponent: e });
                }
                *v = e.exp();
            }
            laplacian_into(g, &ws.inner, c, out);
        }
    }
    Ok(())
}

/// Staggered conservative `D^- . sigma(D^+ h)`.
pub fn div_tension(h: &ContinuumField, sigma: impl Fn(f64) -> f64) -> ContinuumField {
    let g = Grid::of(h);
    let mut edges = vec![0.0; g.d * h.len()];
    let mut out = vec![0.0; h.len()];
    div_tension_into(g, h.values(), &sigma, &mut edges, &mut out);
    h.with_values(out).expect("same grid")
}

/// Standard `3`/`5`-point periodic Laplacian.
pub fn laplacian(f: &ContinuumField) -> ContinuumField {
    let mut out = vec![0.0; f.len()];
    laplacian_into(Grid::of(f), f.values(), 1.0, &mut out);
    f.with_values(out).expect("same grid")
}

/// Right-hand side selected by `cfg.kind`.
pub fn rhs(h: &ContinuumField, cfg: &PdeConfig) -> Result<ContinuumField> {
    let g = Grid::of(h);
    let mut ws = Workspace::new(g.d, h.len());
    let mut out = vec![0.0; h.len()];
    rhs_into(g, h.values(), cfg, &cfg.tension, &mut ws, &mut out)?;
    h.with_values(out)
}

/// `-c K Lap div_tension(h, sigma)`.
pub fn rhs_smooth(h: &ContinuumField, cfg: &PdeConfig) -> Result<ContinuumField> {
    if cfg.kind != PdeKind::Smooth {
        return Err(Error::usage("rhs_smooth needs a smooth PDE configuration"));
    }
    rhs(h, cfg)
}

/// `c Lap exp(-K div_tension(h, grad V))`.
pub fn rhs_rough(h: &ContinuumField, cfg: &PdeConfig) -> Result<ContinuumField> {
    if cfg.kind != PdeKind::Rough {
        return Err(Error::usage("rhs_rough needs a rough PDE configuration"));
    }
    rhs(h, cfg)
}
