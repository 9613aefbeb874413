//! Pair copulas, D-vines and the probability integral transform.

mod family;
mod fit;
mod vine;

pub use family::{BivariateCopula, Family, Rotation};
pub use fit::{fit_bivariate, select_bivariate, CandidateSet, AIC_TIE_TOL, MIN_PAIR_OBSERVATIONS, NORMALIZATION_TOL};
pub use vine::{fit_dvine, open_unit, EdgeRow, VineEdge, VineModel};

use crate::density::DensityModel;
use crate::error::{Error, Result};

/// PIT values are clamped to `[PIT_CLAMP, 1 - PIT_CLAMP]`.
pub const PIT_CLAMP: f64 = 1e-6;

/// Column-major matrix of values in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObservations {
    columns: Vec<Vec<f64>>,
}

impl PseudoObservations {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Mismatch("pseudo-observation columns differ in length".into()));
        }
        if let Some(x) = columns.iter().flatten().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(Error::Domain(format!("pseudo-observation {x} outside (0, 1)")));
        }
        Ok(PseudoObservations { columns })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Mismatch("ragged pseudo-observation rows".into()));
        }
        Self::from_columns((0..m).map(|j| rows.iter().map(|r| r[j]).collect()).collect())
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn dimension(&self) -> usize {
        self.columns.len()
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }
}

/// Probability integral transform of each column through its marginal.
pub fn pit(columns: &[&[f64]], marginals: &[&DensityModel]) -> Result<PseudoObservations> {
    if columns.len() != marginals.len() {
        return Err(Error::Mismatch(format!("{} columns for {} marginals", columns.len(), marginals.len())));
    }
    let out = columns
        .iter()
        .zip(marginals)
        .map(|(col, m)| {
            col.iter()
                .map(|&x| m.cdf(x).clamp(PIT_CLAMP, 1.0 - PIT_CLAMP))
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>();
    PseudoObservations::from_columns(out)
}

/// Number of distinct regular vines on `n` variables,
/// `n!/2 · 2^C(n-2, 2)`. `None` on overflow.
pub fn regular_vine_count(n: u32) -> Option<u128> {
    match n {
        0 | 1 => Some(1),
        2 => Some(1),
        _ => {
            let half_fact = (3..=u128::from(n)).try_fold(1u128, |acc, k| acc.checked_mul(k))?;
            let e = (n - 2) * (n - 3) / 2;
            half_fact.checked_mul(1u128.checked_shl(e)?)
        }
    }
}

/// Number of chain-rule orderings of an `n`-variate density, `n!`.
pub fn chain_rule_orderings(n: u32) -> Option<u128> {
    (1..=u128::from(n)).try_fold(1u128, |acc, k| acc.checked_mul(k))
}
