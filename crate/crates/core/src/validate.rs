//! Two-sample permutation test on per-profile summary features.

use nalgebra::{Matrix5, SymmetricEigen, Vector5};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{substream, STAGE_VALIDATE};
use crate::stats::{quantile_sorted, sorted_copy};

pub const FEATURE_COUNT: usize = 5;
/// Smallest group that still gives a usable covariance estimate.
pub const MIN_GROUP_SIZE: usize = 6;
pub const MIN_PERMUTATIONS: usize = 20;
/// Permuted statistics within this relative distance of the observed one
/// count as ties, not exceedances.
pub const TIE_RTOL: f64 = 1e-12;
/// Above this condition number the pooled covariance gets a ridge.
pub const MAX_CONDITION: f64 = 1e12;

/// Percentiles (linear interpolation between order statistics) and the
/// maximum of one profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; FEATURE_COUNT] {
        [self.q25, self.q50, self.q75, self.q95, self.max]
    }

    fn vector(&self) -> Vector5<f64> {
        Vector5::from(self.to_array())
    }
}

pub fn features(profile: &[f64]) -> Result<FeatureVector> {
    if profile.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    if profile.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("profile contains a non-finite value".into()));
    }
    let s = sorted_copy(profile);
    Ok(FeatureVector {
        q25: quantile_sorted(&s, 0.25),
        q50: quantile_sorted(&s, 0.5),
        q75: quantile_sorted(&s, 0.75),
        q95: quantile_sorted(&s, 0.95),
        max: s[s.len() - 1],
    })
}

/// Diagnostics of the pooled covariance used in one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceDiagnostics {
    pub condition_number: f64,
    pub ridge: f64,
}

/// Inverse pooled covariance `Σ⁻¹` with `Σ = ½(Σ₁ + Σ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledMetric {
    precision: Matrix5<f64>,
    pub diagnostics: CovarianceDiagnostics,
}

fn covariance<'a>(rows: impl Iterator<Item = &'a Vector5<f64>> + Clone, n: usize) -> Matrix5<f64> {
    let mean = rows.clone().fold(Vector5::zeros(), |acc, x| acc + x) / n as f64;
    let mut c = Matrix5::zeros();
    for x in rows {
        let d = x - mean;
        c += d * d.transpose();
    }
    c / (n - 1) as f64
}

impl PooledMetric {
    fn from_groups<'a>(
        a: impl Iterator<Item = &'a Vector5<f64>> + Clone,
        na: usize,
        b: impl Iterator<Item = &'a Vector5<f64>> + Clone,
        nb: usize,
    ) -> Result<Self> {
        if na < MIN_GROUP_SIZE || nb < MIN_GROUP_SIZE {
            return Err(Error::TooFewObservations { needed: MIN_GROUP_SIZE, got: na.min(nb) });
        }
        let sigma = 0.5 * (covariance(a, na) + covariance(b, nb));
        Self::from_covariance(sigma)
    }

    /// Inverts `sigma`, adding `λI` with `λ = 1e-8 · tr(Σ)/5` when it is
    /// singular or worse conditioned than [`MAX_CONDITION`].
    pub fn from_covariance(sigma: Matrix5<f64>) -> Result<Self> {
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite covariance".into()));
        }
        let eig = SymmetricEigen::new(sigma);
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        let mut ridge = 0.0;
        let mut s = sigma;
        if !(condition <= MAX_CONDITION) {
            let tr = sigma.trace();
            // an all-zero covariance has no scale; fall back to a unit scale
            ridge = 1e-8 * if tr > 0.0 { tr / FEATURE_COUNT as f64 } else { 1.0 };
            s += Matrix5::identity() * ridge;
        }
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Domain("pooled covariance is not positive definite after ridge".into()))?;
        Ok(PooledMetric {
            precision: chol.inverse(),
            diagnostics: CovarianceDiagnostics { condition_number: condition, ridge },
        })
    }

    /// `(x − y)ᵀ Σ⁻¹ (x − y)`.
    pub fn distance(&self, x: &FeatureVector, y: &FeatureVector) -> f64 {
        let d = x.vector() - y.vector();
        (d.transpose() * self.precision * d)[(0, 0)]
    }

    /// Sum of distances over every cross pair, in closed form.
    fn cross_sum<'a>(
        &self,
        a: impl Iterator<Item = &'a Vector5<f64>>,
        na: usize,
        b: impl Iterator<Item = &'a Vector5<f64>>,
        nb: usize,
    ) -> f64 {
        let p = &self.precision;
        let (mut sa, mut qa) = (Vector5::zeros(), 0.0);
        for x in a {
            sa += x;
            qa += x.dot(&(p * x));
        }
        let (mut sb, mut qb) = (Vector5::zeros(), 0.0);
        for y in b {
            sb += y;
            qb += y.dot(&(p * y));
        }
        (nb as f64 * qa + na as f64 * qb - 2.0 * sa.dot(&(p * sb))).max(0.0)
    }
}

/// The pooled metric of two feature samples.
pub fn pooled_distance(real: &[FeatureVector], sim: &[FeatureVector]) -> Result<PooledMetric> {
    let a: Vec<Vector5<f64>> = real.iter().map(FeatureVector::vector).collect();
    let b: Vec<Vector5<f64>> = sim.iter().map(FeatureVector::vector).collect();
    PooledMetric::from_groups(a.iter(), a.len(), b.iter(), b.len())
}

/// `T = Σ_{i ∈ real, j ∈ sim} d(i, j)` and the covariance diagnostics.
pub fn statistic(real: &[FeatureVector], sim: &[FeatureVector]) -> Result<(f64, CovarianceDiagnostics)> {
    let a: Vec<Vector5<f64>> = real.iter().map(FeatureVector::vector).collect();
    let b: Vec<Vector5<f64>> = sim.iter().map(FeatureVector::vector).collect();
    let m = PooledMetric::from_groups(a.iter(), a.len(), b.iter(), b.len())?;
    Ok((m.cross_sum(a.iter(), a.len(), b.iter(), b.len()), m.diagnostics))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PermutationConfig {
    pub permutations: usize,
    /// Report `(count + 1)/(M + 1)` instead of `count/M`.
    pub add_one: bool,
    /// Reuse the observed partition's covariance for every permutation.
    pub freeze_covariance: bool,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig { permutations: 10_000, add_one: false, freeze_covariance: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub t_observed: f64,
    pub permutations: usize,
    /// Permuted statistics strictly larger than `t_observed`, beyond
    /// [`TIE_RTOL`].
    pub exceedances: usize,
    pub p_value: f64,
    pub seed: u64,
    pub observed_covariance: CovarianceDiagnostics,
    /// Permutations whose pooled covariance needed a ridge.
    pub ridged_permutations: usize,
}

/// Indices of the pooled sample assigned to the first group by
/// permutation `index`; the remaining indices form the second group.
pub fn permutation_partition(seed: u64, index: usize, total: usize, first: usize) -> Vec<usize> {
    let mut rng = substream(seed, STAGE_VALIDATE, index as u64);
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(&mut rng);
    idx.truncate(first);
    idx
}

pub fn permutation_test(
    real: &[FeatureVector],
    sim: &[FeatureVector],
    config: &PermutationConfig,
    seed: u64,
) -> Result<PermutationReport> {
    if config.permutations < MIN_PERMUTATIONS {
        return Err(Error::Parameter(format!(
            "{} permutations requested, need at least {MIN_PERMUTATIONS}",
            config.permutations
        )));
    }
    let pooled: Vec<Vector5<f64>> = real.iter().chain(sim).map(FeatureVector::vector).collect();
    let (na, nb) = (real.len(), sim.len());
    let total = na + nb;
    let observed = PooledMetric::from_groups(pooled[..na].iter(), na, pooled[na..].iter(), nb)?;
    let t_obs = observed.cross_sum(pooled[..na].iter(), na, pooled[na..].iter(), nb);

    let perms = par::try_map_indexed(config.permutations, |m| {
        let first = permutation_partition(seed, m, total, na);
        let mut in_first = vec![false; total];
        for &i in &first {
            in_first[i] = true;
        }
        let a = first.iter().map(|&i| &pooled[i]);
        let b = (0..total).filter(|&i| !in_first[i]).map(|i| &pooled[i]);
        let metric = if config.freeze_covariance {
            observed
        } else {
            PooledMetric::from_groups(a.clone(), na, b.clone(), nb)?
        };
        Ok((metric.cross_sum(a, na, b, nb), metric.diagnostics.ridge > 0.0))
    })?;
    let exceedances = perms.iter().filter(|(t, _)| *t > t_obs + TIE_RTOL * t_obs.abs()).count();
    let m = config.permutations as f64;
    let p_value = if config.add_one { (exceedances as f64 + 1.0) / (m + 1.0) } else { exceedances as f64 / m };
    Ok(PermutationReport {
        t_observed: t_obs,
        permutations: config.permutations,
        exceedances,
        p_value,
        seed,
        observed_covariance: observed.diagnostics,
        ridged_permutations: perms.iter().filter(|(_, r)| *r).count(),
    })
}
