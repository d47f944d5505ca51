//! Continuous-time Markov jump dynamics of the lattice surface.
//!
//! The atom on top of site `a` detaches at total rate `exp(-2 K n(a))`,
//! with `n` the generalized coordination number, and lands on one of the
//! `2d` neighbors chosen uniformly. Events are selected rejection-free from a
//! partial-sum tree over the per-site rates.

mod generator;
mod langevin;
mod rate_index;
mod sim;

pub use generator::{
    generator_apply, generator_estimate, height_drift, BatchSum, GeneratorConfig, GeneratorEstimate,
};
pub use langevin::{langevin_run, laplacian_eigenvalues, LangevinConfig};
pub use rate_index::RateIndex;
pub use sim::{run, Simulator, Snapshot, Trajectory, REBUILD_INTERVAL};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::surface::{HeightField, LatticeShape, NeighborTable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "K")]
    pub k: f64,
    pub potential: Potential,
    pub shape: LatticeShape,
}

impl ModelParams {
    pub fn new(k: f64, potential: Potential, shape: LatticeShape) -> Result<Self> {
        let p = ModelParams { k, potential, shape };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::config("K", format!("inverse temperature must be > 0, got {}", self.k)));
        }
        Ok(())
    }
}

/// Total exit rate `exp(-2 K n(a))` of site `a`: the sum of the `2d` equal
/// per-neighbor rates.
pub fn total_rate_at(h: &HeightField, site: usize, params: &ModelParams) -> f64 {
    (-2.0 * params.k * h.coordination_number(site, &params.potential)).exp()
}

/// Rate of the specific hop `a -> b`; independent of which neighbor `b` is.
pub fn hop_rate(h: &HeightField, site: usize, params: &ModelParams) -> f64 {
    total_rate_at(h, site, params) / (2 * params.shape.dim()) as f64
}

/// Largest |gradient| whose bond energy increment is tabulated.
const BOND_TABLE_HALF_WIDTH: i64 = 512;

/// Fast evaluator of site rates for a fixed model.
#[derive(Clone, Debug)]
pub(crate) struct RateModel {
    k: f64,
    potential: Potential,
    dim: usize,
    neighbors: NeighborTable,
    /// `V(g + 1) - V(g)` for `g` in `[-W, W]`.
    increments: Vec<f64>,
}

impl RateModel {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let v = params.potential;
        let increments = (-BOND_TABLE_HALF_WIDTH..=BOND_TABLE_HALF_WIDTH)
            .map(|g| v.eval(g as f64 + 1.0) - v.eval(g as f64))
            .collect();
        RateModel {
            k: params.k,
            potential: v,
            dim: params.shape.dim(),
            neighbors: NeighborTable::new(&params.shape),
            increments,
        }
    }

    #[inline]
    fn increment(&self, g: i64) -> f64 {
        if (-BOND_TABLE_HALF_WIDTH..=BOND_TABLE_HALF_WIDTH).contains(&g) {
            self.increments[(g + BOND_TABLE_HALF_WIDTH) as usize]
        } else {
            self.potential.eval(g as f64 + 1.0) - self.potential.eval(g as f64)
        }
    }

    #[inline]
    pub(crate) fn neighbors(&self) -> &NeighborTable {
        &self.neighbors
    }

    /// `2 n(a)` evaluated from the local heights.
    #[inline]
    pub(crate) fn twice_coordination(&self, heights: &[i64], site: usize) -> f64 {
        let h = heights[site];
        let mut sum = 0.0;
        for axis in 0..self.dim {
            let up = heights[self.neighbors.plus(site, axis)] - h;
            let down = h - heights[self.neighbors.minus(site, axis)];
            sum += self.increment(up) - self.increment(down - 1);
        }
        sum
    }

    #[inline]
    pub(crate) fn site_rate(&self, heights: &[i64], site: usize) -> f64 {
        (-self.k * self.twice_coordination(heights, site)).exp()
    }
}
