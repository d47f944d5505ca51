use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::ContinuumField;
use crate::kmc::{hop_rate, ModelParams, Simulator};
use crate::rng::RandomSource;
use crate::surface::{HeightField, SiteMove};

/// `(A f)(h) = sum_a sum_{b ~ a} r(a) [f(J_a^b h) - f(h)]`, by enumerating
/// every transition.
pub fn generator_apply<F>(f: F, h: &HeightField, params: &ModelParams) -> f64
where
    F: Fn(&HeightField) -> f64,
{
    let f0 = f(h);
    let shape = params.shape;
    let mut total = 0.0;
    let mut moved = h.clone();
    for a in 0..shape.sites() {
        let r = hop_rate(h, a, params);
        for b in shape.neighbors(a).collect::<Vec<_>>() {
            moved.apply_move_unchecked(SiteMove { from: a, to: b });
            total += r * (f(&moved) - f0);
            moved.apply_move_unchecked(SiteMove { from: b, to: a });
        }
    }
    total
}

/// Per-site drift of the height, `sum_{b ~ a} (r(b) - r(a))` with `r` the
/// per-neighbor rate. This is `A h(a)` in closed form.
pub fn height_drift(h: &HeightField, site: usize, params: &ModelParams) -> f64 {
    let shape = params.shape;
    let own = hop_rate(h, site, params);
    shape
        .neighbors(site)
        .map(|b| hop_rate(h, b, params) - own)
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Macroscopic averaging window `T`; the microscopic window is `N^4 T`.
    pub t_macro: f64,
    pub samples: u64,
    /// Macroscopic time simulated before the window opens.
    #[serde(default)]
    pub burn_in: f64,
    /// Index of the first trajectory stream, so that disjoint runs can be
    /// merged.
    #[serde(default)]
    pub first_index: u64,
    #[serde(default = "default_batch")]
    pub batch_size: u64,
    #[serde(default)]
    pub execution: Execution,
}

fn default_batch() -> u64 {
    64
}

impl GeneratorConfig {
    pub fn new(t_macro: f64, samples: u64) -> Self {
        GeneratorConfig {
            t_macro,
            samples,
            burn_in: 0.0,
            first_index: 0,
            batch_size: default_batch(),
            execution: Execution::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("samples", "need at least one trajectory"));
        }
        if !(self.t_macro > 0.0 && self.t_macro.is_finite()) {
            return Err(Error::config("t_macro", "averaging window must be positive"));
        }
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(Error::config("burn_in", "must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Running per-site sums over a contiguous block of trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSum {
    pub count: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl BatchSum {
    pub fn empty(sites: usize) -> Self {
        BatchSum {
            count: 0,
            sum: vec![0.0; sites],
            sum_sq: vec![0.0; sites],
        }
    }

    pub fn push(&mut self, sample: &[f64]) {
        self.count += 1;
        for ((s, q), &x) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(sample) {
            *s += x;
            *q += x * x;
        }
    }

    pub fn merge(&mut self, other: &BatchSum) {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Standard error of the mean; zero for a single sample.
    pub fn standard_error(&self) -> Vec<f64> {
        let n = self.count as f64;
        if self.count < 2 {
            return vec![0.0; self.sum.len()];
        }
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let m = s / n;
                let var = ((q - n * m * m) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorEstimate {
    pub estimate: ContinuumField,
    pub standard_error: ContinuumField,
    /// Per-batch sums in trajectory order; concatenating the batches of two
    /// runs over adjacent index ranges reproduces the combined run.
    pub batches: Vec<BatchSum>,
}

impl GeneratorEstimate {
    pub fn from_batches(d: usize, n: usize, batches: Vec<BatchSum>) -> Result<Self> {
        let sites = n.pow(d as u32);
        let mut total = BatchSum::empty(sites);
        for b in &batches {
            total.merge(b);
        }
        if total.count == 0 {
            return Err(Error::usage("no trajectories to average"));
        }
        Ok(GeneratorEstimate {
            estimate: ContinuumField::new(d, n, total.mean())?,
            standard_error: ContinuumField::new(d, n, total.standard_error())?,
            batches,
        })
    }

    pub fn samples(&self) -> u64 {
        self.batches.iter().map(|b| b.count).sum()
    }

    /// Combines with a run over the following index range.
    pub fn merge(&self, later: &GeneratorEstimate) -> Result<Self> {
        if !self.estimate.same_grid(&later.estimate) {
            return Err(Error::usage("cannot merge estimates on different lattices"));
        }
        let mut batches = self.batches.clone();
        batches.extend(later.batches.iter().cloned());
        Self::from_batches(self.estimate.dim(), self.estimate.side(), batches)
    }

    /// CSV with columns `site, estimate, standard_error`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["site", "estimate", "standard_error"])?;
        for (k, (e, s)) in self
            .estimate
            .values()
            .iter()
            .zip(self.standard_error.values())
            .enumerate()
        {
            wr.write_record(&[k.to_string(), format!("{e:e}"), format!("{s:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// One trajectory's contribution: `N^3 / tau` times the time integral over
/// the window `[tau_0, tau_0 + tau]` of the per-site height drift.
fn sample_drift(h0: &HeightField, params: &ModelParams, tau_0: f64, tau: f64, source: &RandomSource) -> Result<Vec<f64>> {
    let mut sim = Simulator::new(h0.clone(), *params, source)?;
    sim.advance_to(tau_0)?;
    sim.start_rate_integrals();
    sim.advance_to(tau_0 + tau)?;
    let integrals = sim.rate_integrals().expect("integrals started");
    let shape = params.shape;
    let coord = (2 * shape.dim()) as f64;
    let scale = (shape.side() as f64).powi(3) / tau;
    Ok((0..shape.sites())
        .map(|a| {
            let inflow: f64 = shape.neighbors(a).map(|b| integrals[b]).sum();
            scale * (inflow / coord - integrals[a])
        })
        .collect())
}

/// Monte Carlo estimate of the macroscopic time derivative `N^3 A h(a)`,
/// averaged over `[0, N^4 T]` after an optional burn-in. Trajectory `i`
/// draws from `source.split(first_index + i)`.
pub fn generator_estimate(
    h0: &HeightField,
    params: &ModelParams,
    cfg: &GeneratorConfig,
    source: &RandomSource,
) -> Result<GeneratorEstimate> {
    cfg.validate()?;
    params.validate()?;
    if h0.shape() != &params.shape {
        return Err(Error::usage("initial surface does not match the model lattice"));
    }
    let shape = params.shape;
    let n4 = (shape.side() as f64).powi(4);
    let tau = n4 * cfg.t_macro;
    let tau_0 = n4 * cfg.burn_in;
    let batch = cfg.batch_size;
    let n_batches = cfg.samples.div_ceil(batch) as usize;
    let batches = cfg.execution.try_map(n_batches, |k| {
        let start = k as u64 * batch;
        let end = (start + batch).min(cfg.samples);
        let mut acc = BatchSum::empty(shape.sites());
        for i in start..end {
            let x = sample_drift(h0, params, tau_0, tau, &source.split(cfg.first_index + i))?;
            acc.push(&x);
        }
        Ok::<_, Error>(acc)
    })?;
    GeneratorEstimate::from_batches(shape.dim(), shape.side(), batches)
}
