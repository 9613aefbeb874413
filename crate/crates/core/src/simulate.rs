//! Seeded synthetic day profiles from a fitted household model.

use serde::{Deserialize, Serialize};

use crate::copula::VineModel;
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::model::HouseholdModel;
use crate::par;
use crate::rng::{substream, StreamRng, STAGE_SIMULATE};

/// Failed vine draws tolerated per profile before giving up.
pub const MAX_ROW_FAILURES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedProfile {
    pub values: Vec<f64>,
    /// Master seed and profile index that reproduce this profile.
    pub seed: u64,
    pub index: u64,
    pub band: Option<(f64, f64)>,
    pub attempts: u64,
}

fn draw_row(vine: &VineModel, rng: &mut StreamRng, failures: &mut usize) -> Result<Vec<f64>> {
    loop {
        match vine.sample_row(rng) {
            Ok(row) if row.iter().all(|u| u.is_finite() && *u > 0.0 && *u < 1.0) => return Ok(row),
            Ok(_) | Err(Error::Sampling(_)) => {
                *failures += 1;
                if *failures > MAX_ROW_FAILURES {
                    return Err(Error::Sampling(format!("{MAX_ROW_FAILURES} vine draws failed")));
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// `n` rows of uniforms following `vine`; row `i` uses substream `i`.
pub fn sample_vine(vine: &VineModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    par::try_map_indexed(n, |i| {
        let mut rng = substream(seed, STAGE_SIMULATE, i as u64);
        draw_row(vine, &mut rng, &mut 0)
    })
}

/// Maps uniforms to kWh through the slot quantile functions. Negative
/// quantiles (possible within the log offset) are clamped to zero.
pub fn to_loads(uniforms: &[Vec<f64>], marginals: &[&DensityModel]) -> Result<Vec<Vec<f64>>> {
    uniforms
        .iter()
        .map(|row| {
            if row.len() != marginals.len() {
                return Err(Error::Mismatch(format!("{} uniforms for {} marginals", row.len(), marginals.len())));
            }
            row.iter().zip(marginals).map(|(&u, m)| Ok(m.quantile(u)?.max(0.0))).collect()
        })
        .collect()
}

fn one_profile(model: &HouseholdModel, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let mut u = vec![0.0; model.slot_count()];
    let mut failures = 0;
    for vine in &model.vines {
        let row = draw_row(vine, rng, &mut failures)?;
        for (&slot, x) in vine.slots.iter().zip(row) {
            u[slot] = x;
        }
    }
    u.iter()
        .zip(&model.marginals)
        .map(|(&p, m)| Ok(m.quantile(p)?.max(0.0)))
        .collect()
}

/// `n` unconstrained profiles. Segments are sampled independently.
pub fn assemble_day(model: &HouseholdModel, n: usize, seed: u64) -> Result<Vec<SimulatedProfile>> {
    par::try_map_indexed(n, |i| {
        let mut rng = substream(seed, STAGE_SIMULATE, i as u64);
        Ok(SimulatedProfile { values: one_profile(model, &mut rng)?, seed, index: i as u64, band: None, attempts: 1 })
    })
}

fn check_band(band: (f64, f64)) -> Result<()> {
    let (lo, hi) = band;
    if (0.0..1.0).contains(&lo) && hi > lo && hi <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("quantile band [{lo}, {hi}] must satisfy 0 ≤ lo < hi ≤ 1")))
    }
}

/// Whether every slot's PIT value lies in the band.
pub fn within_band(model: &HouseholdModel, values: &[f64], band: (f64, f64)) -> bool {
    values.iter().zip(&model.marginals).all(|(&x, m)| {
        let p = m.cdf(x);
        p >= band.0 && p <= band.1
    })
}

/// `n` profiles accepted by whole-profile rejection: every slot's PIT
/// must fall inside `band`.
pub fn truncated_profiles(
    model: &HouseholdModel,
    band: (f64, f64),
    n: usize,
    max_attempts: usize,
    seed: u64,
) -> Result<Vec<SimulatedProfile>> {
    check_band(band)?;
    if max_attempts == 0 {
        return Err(Error::Parameter("max_attempts must be positive".into()));
    }
    par::try_map_indexed(n, |i| {
        let mut rng = substream(seed, STAGE_SIMULATE, i as u64);
        for attempt in 1..=max_attempts {
            let values = one_profile(model, &mut rng)?;
            if within_band(model, &values, band) {
                return Ok(SimulatedProfile { values, seed, index: i as u64, band: Some(band), attempts: attempt as u64 });
            }
        }
        Err(Error::Acceptance { attempts: max_attempts, rate: 0.0 })
    })
    .map_err(|e| match e {
        Error::Acceptance { attempts, .. } => {
            let rate = estimate_acceptance(model, band, seed, 2000).unwrap_or(0.0);
            Error::Acceptance { attempts, rate }
        }
        other => other,
    })
}

/// Fraction of `trials` unconstrained profiles that fall inside `band`.
pub fn estimate_acceptance(model: &HouseholdModel, band: (f64, f64), seed: u64, trials: usize) -> Result<f64> {
    check_band(band)?;
    let hits = par::try_map_indexed(trials, |i| {
        let mut rng = substream(seed, "acceptance", i as u64);
        Ok(within_band(model, &one_profile(model, &mut rng)?, band))
    })?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / trials.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBands {
    pub levels: Vec<f64>,
    /// `curves[l][slot]`, clamped at zero like the simulated values.
    pub curves: Vec<Vec<f64>>,
}

pub fn quantile_bands(model: &HouseholdModel, levels: &[f64]) -> Result<QuantileBands> {
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::Parameter(format!("quantile level {l} outside (0, 1)")));
    }
    let curves = levels
        .iter()
        .map(|&l| model.marginals.iter().map(|m| Ok(m.quantile(l)?.max(0.0))).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileBands { levels: levels.to_vec(), curves })
}
