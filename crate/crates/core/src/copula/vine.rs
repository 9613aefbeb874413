//! D-vines over a contiguous run of slots.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::family::{BivariateCopula, Family};
use super::fit::{select_bivariate, CandidateSet};
use super::PseudoObservations;
use crate::error::{Error, Result};
use crate::par;

/// Intermediate conditional values are kept this far inside `(0, 1)`.
const UNIT_GUARD: f64 = 1e-15;

fn guard(x: f64) -> f64 {
    x.clamp(UNIT_GUARD, 1.0 - UNIT_GUARD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VineEdge {
    /// Tree level, starting at 1.
    pub tree: usize,
    /// Conditioned slot pair `(left, right)`, `left < right`.
    pub conditioned: (usize, usize),
    pub conditioning: Vec<usize>,
    pub copula: BivariateCopula,
}

/// A D-vine whose path order is the slot order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VineModel {
    pub slots: Vec<usize>,
    /// Trees above this level are independence.
    pub truncation: usize,
    /// `trees[l - 1]` holds the `m - l` edges of tree `l`.
    pub trees: Vec<Vec<VineEdge>>,
}

fn edge_shell(slots: &[usize], tree: usize, i: usize, copula: BivariateCopula) -> VineEdge {
    VineEdge {
        tree,
        conditioned: (slots[i], slots[i + tree]),
        conditioning: slots[i + 1..i + tree].to_vec(),
        copula,
    }
}

/// Fits a D-vine to pseudo-observations whose columns follow `slots`.
///
/// `truncation` of `None` fits all `m - 1` trees.
pub fn fit_dvine(
    data: &PseudoObservations,
    slots: &[usize],
    truncation: Option<usize>,
    candidates: &CandidateSet,
) -> Result<VineModel> {
    let m = data.dimension();
    if slots.len() != m {
        return Err(Error::Mismatch(format!("{} slots for {m} columns", slots.len())));
    }
    let levels = m.saturating_sub(1);
    let trunc = truncation.unwrap_or(levels).min(levels);

    let mut trees: Vec<Vec<VineEdge>> = Vec::with_capacity(levels);
    let mut a: Vec<Vec<f64>> = data.columns()[..m.saturating_sub(1)].to_vec();
    let mut b: Vec<Vec<f64>> = data.columns().get(1..).map(|c| c.to_vec()).unwrap_or_default();
    for tree in 1..=levels {
        let width = m - tree;
        if tree > trunc {
            trees.push((0..width).map(|i| edge_shell(slots, tree, i, BivariateCopula::independence())).collect());
            continue;
        }
        let copulas = par::try_map_indexed(width, |i| {
            select_bivariate(&a[i], &b[i], candidates).map_err(|e| match e {
                Error::TooFewObservations { .. } => e,
                other => Error::Fit(format!("edge {}-{} in tree {tree}: {other}", slots[i], slots[i + tree])),
            })
        })?;
        if tree < trunc {
            let next_a: Vec<Vec<f64>> = par::map_indexed(width - 1, |i| {
                a[i].iter().zip(&b[i]).map(|(&x, &y)| guard(copulas[i].h_unchecked(x, y))).collect()
            });
            let next_b: Vec<Vec<f64>> = par::map_indexed(width - 1, |i| {
                a[i + 1].iter().zip(&b[i + 1]).map(|(&x, &y)| guard(copulas[i + 1].h_rev_unchecked(x, y))).collect()
            });
            a = next_a;
            b = next_b;
        }
        trees.push(copulas.into_iter().enumerate().map(|(i, c)| edge_shell(slots, tree, i, c)).collect());
    }
    Ok(VineModel { slots: slots.to_vec(), truncation: trunc, trees })
}

impl VineModel {
    /// Vine for a single slot: no edges.
    pub fn trivial(slot: usize) -> Self {
        VineModel { slots: vec![slot], truncation: 0, trees: Vec::new() }
    }

    pub fn dimension(&self) -> usize {
        self.slots.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &VineEdge> {
        self.trees.iter().flatten()
    }

    pub fn edge_count(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }

    pub fn total_aic(&self) -> f64 {
        self.edges().map(|e| e.copula.aic).sum()
    }

    pub fn flagged_edges(&self) -> usize {
        self.edges().filter(|e| e.copula.flagged).count()
    }

    /// Log copula density of one point of `(0, 1)^m`.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        let m = self.dimension();
        if u.len() != m {
            return Err(Error::Mismatch(format!("point of length {} for a {m}-slot vine", u.len())));
        }
        if let Some(x) = u.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(Error::Domain(format!("vine argument {x} outside (0, 1)")));
        }
        let mut a: Vec<f64> = u[..m.saturating_sub(1)].to_vec();
        let mut b: Vec<f64> = u.get(1..).map(<[f64]>::to_vec).unwrap_or_default();
        let mut total = 0.0;
        for (l, tree) in self.trees.iter().enumerate() {
            if l >= self.truncation {
                break;
            }
            for (i, e) in tree.iter().enumerate() {
                total += e.copula.log_density_unchecked(a[i], b[i]);
            }
            let width = tree.len();
            if width > 1 {
                let na = (0..width - 1).map(|i| guard(tree[i].copula.h_unchecked(a[i], b[i]))).collect();
                let nb = (0..width - 1).map(|i| guard(tree[i + 1].copula.h_rev_unchecked(a[i + 1], b[i + 1]))).collect();
                a = na;
                b = nb;
            }
        }
        Ok(total)
    }

    /// Sum of per-row log densities.
    pub fn loglik(&self, data: &PseudoObservations) -> Result<f64> {
        (0..data.len()).map(|r| self.log_density(&data.row(r))).sum()
    }

    /// Maps independent uniforms `w` to a draw from the vine by inverting
    /// the conditional distributions one slot at a time.
    pub fn transform(&self, w: &[f64]) -> Result<Vec<f64>> {
        let m = self.dimension();
        if w.len() != m {
            return Err(Error::Mismatch(format!("{} uniforms for a {m}-slot vine", w.len())));
        }
        // a[l][i], b[l][i]: conditional arguments of edge (l + 1, i)
        let mut a: Vec<Vec<f64>> = (0..m).map(|l| vec![f64::NAN; m - l]).collect();
        let mut b = a.clone();
        let mut u = vec![0.0; m];
        for k in 0..m {
            let mut x = guard(w[k]);
            for l in (1..=k).rev() {
                let i = k - l;
                if l <= self.truncation {
                    x = guard(self.trees[l - 1][i].copula.inverse_h_rev_unchecked(x, a[l - 1][i]));
                }
                b[l - 1][i] = x;
            }
            if !x.is_finite() {
                return Err(Error::Sampling(format!("non-finite draw at slot {}", self.slots[k])));
            }
            u[k] = x;
            a[0][k] = x;
            for l in 1..=k.min(m - 1) {
                let i = k - l;
                a[l][i] = if l <= self.truncation {
                    guard(self.trees[l - 1][i].copula.h_unchecked(a[l - 1][i], b[l - 1][i]))
                } else {
                    a[l - 1][i]
                };
            }
        }
        Ok(u)
    }

    /// One draw using `rng` for the underlying uniforms.
    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let w: Vec<f64> = (0..self.dimension()).map(|_| open_unit(rng)).collect();
        self.transform(&w)
    }

    /// Rows of `(tree, left, right, conditioning, family, rotation,
    /// parameter, loglik, aic, flagged)` for plotting and inspection.
    pub fn edge_table(&self) -> Vec<EdgeRow> {
        self.edges()
            .map(|e| EdgeRow {
                tree: e.tree,
                left: e.conditioned.0,
                right: e.conditioned.1,
                conditioning: e.conditioning.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
                family: e.copula.family,
                rotation: e.copula.rotation.degrees(),
                parameter: e.copula.theta(),
                tau: e.copula.tau(),
                loglik: if e.copula.family == Family::Independence { 0.0 } else { e.copula.loglik },
                aic: e.copula.aic,
                flagged: e.copula.flagged,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub tree: usize,
    pub left: usize,
    pub right: usize,
    pub conditioning: String,
    pub family: Family,
    pub rotation: u16,
    pub parameter: Option<f64>,
    pub tau: f64,
    pub loglik: f64,
    pub aic: f64,
    pub flagged: bool,
}

/// Uniform draw from the open interval `(0, 1)`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
