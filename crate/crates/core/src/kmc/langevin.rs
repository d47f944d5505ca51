use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ContinuumField;
use crate::kmc::ModelParams;
use crate::rng::RandomSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinConfig {
    /// Amplitude in front of `sqrt(-L) dW`; `None` means `sqrt(2/K)`.
    #[serde(default)]
    pub noise_scale: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

impl LangevinConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        LangevinConfig {
            noise_scale: None,
            dt,
            t_end,
            snapshot_times: Vec::new(),
        }
    }

    pub fn noise(&self, params: &ModelParams) -> f64 {
        self.noise_scale.unwrap_or_else(|| (2.0 / params.k).sqrt())
    }
}

/// Eigenvalues `sum_i 4 sin^2(pi k_i / N)` of `-L`, in FFT index order.
pub fn laplacian_eigenvalues(d: usize, n: usize) -> Vec<f64> {
    let one: Vec<f64> = (0..n)
        .map(|k| 4.0 * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2))
        .collect();
    if d == 1 {
        one
    } else {
        one.iter()
            .flat_map(|&a| one.iter().map(move |&b| a + b))
            .collect()
    }
}

/// Applies a real, even Fourier multiplier to a periodic real field.
struct SpectralFilter {
    d: usize,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    line: Vec<Complex<f64>>,
}

impl SpectralFilter {
    fn new(d: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        SpectralFilter {
            d,
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            buf: vec![Complex::default(); n.pow(d as u32)],
            line: vec![Complex::default(); n],
        }
    }

    fn transform(&mut self, inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        if self.d == 1 {
            plan.process(&mut self.buf);
            return;
        }
        let n = self.n;
        for row in self.buf.chunks_exact_mut(n) {
            plan.process(row);
        }
        for j in 0..n {
            for i in 0..n {
                self.line[i] = self.buf[i * n + j];
            }
            plan.process(&mut self.line);
            for i in 0..n {
                self.buf[i * n + j] = self.line[i];
            }
        }
    }

    fn apply(&mut self, x: &mut [f64], multiplier: &[f64]) {
        for (b, &v) in self.buf.iter_mut().zip(x.iter()) {
            *b = Complex::new(v, 0.0);
        }
        self.transform(false);
        for (b, &m) in self.buf.iter_mut().zip(multiplier) {
            *b *= m;
        }
        self.transform(true);
        let norm = self.buf.len() as f64;
        for (v, b) in x.iter_mut().zip(&self.buf) {
            *v = b.re / norm;
        }
    }
}

/// `w(a) = sum_i [V'(h(a+e_i) - h(a)) - V'(h(a) - h(a-e_i))]`, then `L w`.
fn drift(h: &[f64], n: usize, d: usize, vp: &impl Fn(f64) -> f64, w: &mut [f64], out: &mut [f64]) {
    let sites = h.len();
    let stride = |axis: usize| if d == 1 || axis == 1 { 1 } else { n };
    let shift = |a: usize, axis: usize, up: bool| -> usize {
        let s = stride(axis);
        let c = (a / s) % n;
        let c2 = if up { (c + 1) % n } else { (c + n - 1) % n };
        a - c * s + c2 * s
    };
    for a in 0..sites {
        let mut acc = 0.0;
        for axis in 0..d {
            acc += vp(h[shift(a, axis, true)] - h[a]) - vp(h[a] - h[shift(a, axis, false)]);
        }
        w[a] = acc;
    }
    for a in 0..sites {
        let mut acc = 0.0;
        for axis in 0..d {
            acc += w[shift(a, axis, true)] + w[shift(a, axis, false)] - 2.0 * w[a];
        }
        out[a] = -acc;
    }
}

/// Largest linearized drift stiffness `max V''` over the current bonds. For
/// `p < 2`, where `V''` is unbounded at zero slope, gradients are floored
/// at one lattice unit.
fn max_curvature(h: &[f64], n: usize, d: usize, params: &ModelParams) -> f64 {
    let v = params.potential;
    let floor = if v.degree() < 2.0 { 1.0 } else { 0.0 };
    let mut s: f64 = 0.0;
    for a in 0..h.len() {
        for axis in 0..d {
            let b = if d == 1 || axis == 1 {
                a - a % n + (a % n + 1) % n
            } else {
                (a + n) % h.len()
            };
            let g = (h[b] - h[a]).abs().max(floor);
            s = s.max(v.second_derivative(g));
        }
    }
    s
}

/// Euler-Maruyama integration of the over-damped Langevin equation on the
/// lattice. Heights are real-valued and in lattice units; `h0` lives on the
/// model lattice (`M = N`). Returns snapshots at the requested times (rounded
/// to the step grid) and at `t_end`.
pub fn langevin_run(
    h0: &ContinuumField,
    params: &ModelParams,
    cfg: &LangevinConfig,
    source: &RandomSource,
) -> Result<Vec<(f64, ContinuumField)>> {
    params.potential.require_smooth("Langevin dynamics")?;
    let shape = params.shape;
    if h0.dim() != shape.dim() || h0.side() != shape.side() {
        return Err(Error::usage("Langevin field must live on the model lattice"));
    }
    if !(cfg.dt > 0.0 && cfg.t_end >= 0.0) {
        return Err(Error::usage("need dt > 0 and t_end >= 0"));
    }
    if cfg.snapshot_times.windows(2).any(|w| w[1] < w[0]) || cfg.snapshot_times.iter().any(|&t| t > cfg.t_end) {
        return Err(Error::usage("snapshot times must be sorted and <= t_end"));
    }
    let (d, n) = (shape.dim(), shape.side());
    let lam = laplacian_eigenvalues(d, n);
    let lam_max = lam.iter().copied().fold(0.0, f64::max);
    let sqrt_lam: Vec<f64> = lam.iter().map(|l| l.sqrt()).collect();
    let noise = cfg.noise(params);
    let v = params.potential;
    let vp = |z: f64| v.derivative(z);

    let mut h = h0.values().to_vec();
    let mut w = vec![0.0; h.len()];
    let mut f = vec![0.0; h.len()];
    let mut xi = vec![0.0; h.len()];
    let mut filter = SpectralFilter::new(d, n);
    let mut rng = source.stream();
    let sdt = cfg.dt.sqrt();

    let total_steps = (cfg.t_end / cfg.dt).round() as u64;
    let mut marks: Vec<u64> = cfg
        .snapshot_times
        .iter()
        .map(|t| (t / cfg.dt).round() as u64)
        .collect();
    marks.push(total_steps);
    let mut marks = marks.into_iter().peekable();
    let mut out = Vec::new();

    for step in 0..=total_steps {
        while marks.peek() == Some(&step) {
            marks.next();
            out.push((step as f64 * cfg.dt, h0.with_values(h.clone())?));
        }
        if step == total_steps {
            break;
        }
        let s_max = max_curvature(&h, n, d, params);
        let factor = cfg.dt * s_max * lam_max * lam_max;
        if factor > 2.0 {
            return Err(Error::Stability(format!(
                "dt * max V'' * lambda_max^2 = {factor:.3} > 2 at step {step}"
            )));
        }
        drift(&h, n, d, &vp, &mut w, &mut f);
        if noise != 0.0 {
            for x in xi.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            filter.apply(&mut xi, &sqrt_lam);
        }
        for ((hv, fv), x) in h.iter_mut().zip(&f).zip(&xi) {
            *hv += cfg.dt * fv + noise * sdt * x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;
    use crate::surface::LatticeShape;

    fn params(d: usize, n: usize, p: f64) -> ModelParams {
        ModelParams::new(1.5, Potential::new(p).unwrap(), LatticeShape::new(d, n).unwrap()).unwrap()
    }

    #[test]
    fn eigenvalues() {
        let l = laplacian_eigenvalues(1, 4);
        assert!((l[1] - 2.0).abs() < 1e-15 && (l[2] - 4.0).abs() < 1e-15);
        let l2 = laplacian_eigenvalues(2, 4);
        assert!((l2[2 * 4 + 2] - 8.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_identity_is_exact() {
        for d in [1, 2] {
            let n = 6;
            let mut f = SpectralFilter::new(d, n);
            let x: Vec<f64> = (0..n.pow(d as u32)).map(|i| (i as f64 * 1.3).sin()).collect();
            let mut y = x.clone();
            f.apply(&mut y, &vec![1.0; x.len()]);
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_filter_squares_to_laplacian() {
        let (d, n) = (2, 5);
        let lam = laplacian_eigenvalues(d, n);
        let root: Vec<f64> = lam.iter().map(|l| l.sqrt()).collect();
        let x: Vec<f64> = (0..25).map(|i| ((i * i) as f64 * 0.37).cos()).collect();
        let mut y = x.clone();
        let mut f = SpectralFilter::new(d, n);
        f.apply(&mut y, &root);
        f.apply(&mut y, &root);
        for a in 0..25 {
            let (i, j) = (a / n, a % n);
            let at = |i: usize, j: usize| x[(i % n) * n + j % n];
            let lap = at(i + 1, j) + at(i + n - 1, j) + at(i, j + 1) + at(i, j + n - 1) - 4.0 * x[a];
            assert!((y[a] + lap).abs() < 1e-12, "site {a}");
        }
        assert!(y.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn quiet_flat_stays_flat() {
        let prm = params(2, 4, 2.0);
        let h0 = ContinuumField::new(2, 4, vec![3.0; 16]).unwrap();
        let cfg = LangevinConfig { noise_scale: Some(0.0), ..LangevinConfig::new(1e-3, 0.1) };
        let out = langevin_run(&h0, &prm, &cfg, &RandomSource::new(1)).unwrap();
        assert!(out.last().unwrap().1.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn single_mode_decay() {
        let n = 16;
        let k = 2;
        let prm = params(1, n, 2.0);
        let lam = 4.0 * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2);
        let lam_max = 4.0;
        let dt = 1e-4 / (lam_max * lam_max);
        let t_end = 0.5 / (2.0 * lam * lam);
        let h0 = ContinuumField::from_fn(1, n, |x| (2.0 * std::f64::consts::PI * k as f64 * x[0]).cos()).unwrap();
        let cfg = LangevinConfig { noise_scale: Some(0.0), ..LangevinConfig::new(dt, t_end) };
        let out = langevin_run(&h0, &prm, &cfg, &RandomSource::new(1)).unwrap();
        let (t, h) = out.last().unwrap();
        let measured = -(h.values()[0]).ln() / t;
        let want = 2.0 * lam * lam;
        assert!((measured / want - 1.0).abs() < 0.01, "{measured} vs {want}");
    }

    #[test]
    fn stability_guard() {
        let prm = params(1, 8, 2.0);
        let h0 = ContinuumField::zeros(1, 8).unwrap();
        let ok = LangevinConfig::new(0.99 * 2.0 / (2.0 * 16.0), 0.1);
        assert!(langevin_run(&h0, &prm, &ok, &RandomSource::new(1)).is_ok());
        let bad = LangevinConfig::new(1.01 * 2.0 / (2.0 * 16.0), 0.1);
        assert!(matches!(langevin_run(&h0, &prm, &bad, &RandomSource::new(1)), Err(Error::Stability(_))));
        let sos = params(1, 8, 1.0);
        assert!(matches!(langevin_run(&h0, &sos, &ok, &RandomSource::new(1)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn mass_is_conserved_with_noise() {
        let prm = params(2, 6, 2.0);
        let h0 = ContinuumField::from_fn(2, 6, |x| (6.0 * x[0]).sin() + x[1]).unwrap();
        let cfg = LangevinConfig::new(1e-3, 1.0);
        let out = langevin_run(&h0, &prm, &cfg, &RandomSource::new(4)).unwrap();
        assert!((out.last().unwrap().1.mean() - h0.mean()).abs() < 1e-12);
    }
}
