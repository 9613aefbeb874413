//! Synthetic households with planted structure, for tests and demos.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::ingest::{SlotMatrix, SLOTS_PER_DAY};
use crate::rng::substream;

/// Lognormal regime of one slot: `exp(mu + sigma · z)` kWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    pub mu: f64,
    pub sigma: f64,
}

/// Night/day household: slots `day_start..=day_end` follow `day`, the
/// rest follow `night`. Adjacent slots share a Gaussian AR(1) latent
/// factor with correlation `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRegime {
    pub night: Regime,
    pub day: Regime,
    pub day_start: usize,
    pub day_end: usize,
    pub rho: f64,
}

impl Default for TwoRegime {
    fn default() -> Self {
        TwoRegime {
            night: Regime { mu: (0.15f64).ln(), sigma: 0.25 },
            day: Regime { mu: (0.9f64).ln(), sigma: 0.6 },
            day_start: 14,
            day_end: 41,
            rho: 0.7,
        }
    }
}

impl TwoRegime {
    pub fn regime(&self, slot: usize) -> Regime {
        if (self.day_start..=self.day_end).contains(&slot) {
            self.day
        } else {
            self.night
        }
    }

    /// Planted cluster labels, night = 0.
    pub fn labels(&self) -> Vec<usize> {
        (0..SLOTS_PER_DAY).map(|s| usize::from((self.day_start..=self.day_end).contains(&s))).collect()
    }

    /// One day; draws come from `rng`.
    pub fn day_profile<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let innov = (1.0 - self.rho * self.rho).sqrt();
        let mut z: f64 = StandardNormal.sample(rng);
        (0..SLOTS_PER_DAY)
            .map(|s| {
                if s > 0 {
                    let e: f64 = StandardNormal.sample(rng);
                    z = self.rho * z + innov * e;
                }
                let r = self.regime(s);
                (r.mu + r.sigma * z).exp()
            })
            .collect()
    }

    /// `n` days; day `i` uses substream `i` of `seed`.
    pub fn days(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..n).map(|i| self.day_profile(&mut substream(seed, "synthetic", i as u64))).collect()
    }

    pub fn matrix(&self, n: usize, seed: u64) -> Result<SlotMatrix> {
        SlotMatrix::from_rows(self.days(n, seed))
    }
}
