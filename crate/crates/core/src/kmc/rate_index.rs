use crate::kmc::{ModelParams, RateModel};
use crate::surface::HeightField;

/// Binary partial-sum tree over per-site exit rates.
///
/// Leaves live at `tree[cap..cap + n]`; each internal node is recomputed from
/// its two children on update rather than adjusted by a delta, so the stored
/// sums never drift away from a fresh rebuild even when rates span hundreds
/// of orders of magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct RateIndex {
    len: usize,
    cap: usize,
    tree: Vec<f64>,
}

impl RateIndex {
    pub fn from_rates(rates: &[f64]) -> Self {
        assert!(!rates.is_empty(), "rate index needs at least one site");
        let cap = rates.len().next_power_of_two();
        let mut tree = vec![0.0; 2 * cap];
        tree[cap..cap + rates.len()].copy_from_slice(rates);
        for k in (1..cap).rev() {
            tree[k] = tree[2 * k] + tree[2 * k + 1];
        }
        RateIndex { len: rates.len(), cap, tree }
    }

    pub fn build(h: &HeightField, params: &ModelParams) -> Self {
        let model = RateModel::new(params);
        Self::build_with(&model, h)
    }

    pub(crate) fn build_with(model: &RateModel, h: &HeightField) -> Self {
        let rates: Vec<f64> = (0..h.shape().sites())
            .map(|s| model.site_rate(h.heights(), s))
            .collect();
        Self::from_rates(&rates)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Sum of all site rates (the root of the tree).
    #[inline]
    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    #[inline]
    pub fn rate(&self, site: usize) -> f64 {
        self.tree[self.cap + site]
    }

    pub fn rates(&self) -> &[f64] {
        &self.tree[self.cap..self.cap + self.len]
    }

    #[inline]
    pub fn set(&mut self, site: usize, rate: f64) {
        let mut k = self.cap + site;
        self.tree[k] = rate;
        while k > 1 {
            k >>= 1;
            self.tree[k] = self.tree[2 * k] + self.tree[2 * k + 1];
        }
    }

    /// Site whose cumulative-rate interval contains `target`, for
    /// `0 <= target < total()`. Never returns a zero-rate padding leaf.
    #[inline]
    pub fn find(&self, mut target: f64) -> usize {
        let mut k = 1;
        while k < self.cap {
            let left = self.tree[2 * k];
            if target < left || self.tree[2 * k + 1] <= 0.0 {
                k *= 2;
                target = target.min(left);
            } else {
                target -= left;
                k = 2 * k + 1;
            }
        }
        (k - self.cap).min(self.len - 1)
    }
}
