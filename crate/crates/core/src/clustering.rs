//! Clustering of per-slot densities under the squared Hellinger distance.
//!
//! Densities are discretized on a shared log-space grid. Cluster centroids
//! are the normalized pointwise mean of member square-root densities, which
//! is the exact minimizer of the within-cluster Hellinger sum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, STAGE_CLUSTER};

pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Distances at or below this are treated as identical densities.
const IDENTICAL_TOL: f64 = 1e-12;

/// Densities sampled on shared abscissae, each renormalized to unit
/// trapezoid integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    grid: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let g = grid.len();
    let mut w = vec![0.0; g];
    for k in 0..g - 1 {
        let half = 0.5 * (grid[k + 1] - grid[k]);
        w[k] += half;
        w[k + 1] += half;
    }
    w
}

impl DensityGrid {
    pub fn new(grid: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("density grid must be strictly increasing with at least 2 points".into()));
        }
        let w = trapezoid_weights(&grid);
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != grid.len() {
                    return Err(Error::GridMismatch);
                }
                if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::Domain(format!("density row {i} has negative or non-finite values")));
                }
                let mass: f64 = row.iter().zip(&w).map(|(v, w)| v * w).sum();
                if !(mass > 0.0) {
                    return Err(Error::Domain(format!("density row {i} has no mass on the grid")));
                }
                Ok(row.into_iter().map(|v| v / mass).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DensityGrid { grid, rows })
    }

    /// Evaluates fitted models on a common grid of `points` abscissae.
    ///
    /// Models may use different log offsets; all are expressed in the
    /// coordinate `z = ln(x + ε_ref)` with `ε_ref` the smallest offset, and
    /// the grid spans every model's sample range extended by three
    /// bandwidths.
    pub fn from_models(models: &[DensityModel], points: usize) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::TooFewObservations { needed: 1, got: 0 });
        }
        let eps_ref = models.iter().map(|m| m.offset()).fold(f64::INFINITY, f64::min);
        let to_ref = |m: &DensityModel, y: f64| ((y.exp() - m.offset()).max(0.0) + eps_ref).ln();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for m in models {
            let (a, b) = m.log_range();
            lo = lo.min(to_ref(m, a - 3.0 * m.bandwidth()));
            hi = hi.max(to_ref(m, b + 3.0 * m.bandwidth()));
        }
        let step = (hi - lo) / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|k| lo + step * k as f64).collect();
        let rows = par::map_indexed(models.len(), |j| {
            let m = &models[j];
            grid.iter()
                .map(|&z| {
                    let x = z.exp() - eps_ref;
                    let shifted = x + m.offset();
                    if shifted <= 0.0 {
                        0.0
                    } else {
                        m.pdf_log(shifted.ln()) * (x + eps_ref) / shifted
                    }
                })
                .collect::<Vec<f64>>()
        });
        DensityGrid::new(grid, rows)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        hellinger_on(&self.rows[i], &self.rows[j], &trapezoid_weights(&self.grid))
    }

    /// Symmetric pairwise distance matrix with zero diagonal.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        let w = trapezoid_weights(&self.grid);
        let n = self.rows.len();
        let upper = par::map_indexed(n, |i| {
            (i + 1..n).map(|j| hellinger_on(&self.rows[i], &self.rows[j], &w)).collect::<Vec<f64>>()
        });
        let mut d = vec![vec![0.0; n]; n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                d[i][i + 1 + off] = v;
                d[i + 1 + off][i] = v;
            }
        }
        d
    }
}

fn hellinger_on(f: &[f64], g: &[f64], w: &[f64]) -> f64 {
    let s: f64 = f
        .iter()
        .zip(g)
        .zip(w)
        .map(|((a, b), w)| {
            let d = a.sqrt() - b.sqrt();
            w * d * d
        })
        .sum();
    (0.5 * s).clamp(0.0, 1.0)
}

/// Squared Hellinger distance `½ ∫ (√f − √g)²` by the trapezoid rule.
pub fn hellinger_sq(f: &[f64], g: &[f64], grid: &[f64]) -> Result<f64> {
    if f.len() != grid.len() || g.len() != grid.len() || grid.len() < 2 {
        return Err(Error::GridMismatch);
    }
    Ok(hellinger_on(f, g, &trapezoid_weights(grid)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CentroidMode {
    /// Normalized mean of member square-root densities.
    #[default]
    SqrtMean,
    /// Member density with the smallest within-cluster distance sum.
    Medoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub centroid: CentroidMode,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { restarts: DEFAULT_RESTARTS, max_iter: DEFAULT_MAX_ITER, centroid: CentroidMode::SqrtMean }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Sum of member-to-centroid distances.
    pub objective: f64,
    /// Objective after every assignment step of the winning restart.
    pub history: Vec<f64>,
    pub converged: bool,
    pub restart: usize,
}

/// Number of pairwise-distinct densities.
fn distinct_count(dist: &[Vec<f64>]) -> usize {
    let n = dist.len();
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..n {
        if reps.iter().all(|&r| dist[i][r] > IDENTICAL_TOL) {
            reps.push(i);
        }
    }
    reps.len()
}

struct Lloyd<'a> {
    sqrt_rows: &'a [Vec<f64>],
    weights: &'a [f64],
    dist: &'a [Vec<f64>],
    mode: CentroidMode,
}

impl Lloyd<'_> {
    fn to_centroid(&self, i: usize, c: &[f64]) -> f64 {
        let s: f64 = self.sqrt_rows[i]
            .iter()
            .zip(c)
            .zip(self.weights)
            .map(|((a, b), w)| {
                let d = a - b;
                w * d * d
            })
            .sum();
        (0.5 * s).clamp(0.0, 1.0)
    }

    fn centroid(&self, members: &[usize]) -> Vec<f64> {
        match self.mode {
            CentroidMode::SqrtMean => {
                let g = self.weights.len();
                let mut c = vec![0.0; g];
                for &m in members {
                    for (ck, v) in c.iter_mut().zip(&self.sqrt_rows[m]) {
                        *ck += v;
                    }
                }
                let norm: f64 = c.iter().zip(self.weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
                c.iter_mut().for_each(|v| *v /= norm);
                c
            }
            CentroidMode::Medoid => {
                let best = members
                    .iter()
                    .copied()
                    .min_by(|&a, &b| {
                        let sa: f64 = members.iter().map(|&m| self.dist[a][m]).sum();
                        let sb: f64 = members.iter().map(|&m| self.dist[b][m]).sum();
                        sa.total_cmp(&sb)
                    })
                    .expect("non-empty cluster");
                self.sqrt_rows[best].clone()
            }
        }
    }

    /// Farthest-point seeding: first centre uniform, then each next centre
    /// drawn with probability proportional to its distance from the
    /// nearest chosen centre.
    fn seed_centres<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        let n = self.sqrt_rows.len();
        let mut chosen = vec![rng.random_range(0..n)];
        let mut nearest: Vec<f64> = (0..n).map(|i| self.dist[i][chosen[0]]).collect();
        while chosen.len() < k {
            let total: f64 = nearest.iter().sum();
            let next = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (i, &w) in nearest.iter().enumerate() {
                    if w > 0.0 && target < w {
                        pick = i;
                        break;
                    }
                    target -= w;
                }
                if nearest[pick] <= 0.0 {
                    pick = (0..n).rev().find(|&i| nearest[i] > 0.0).unwrap_or(pick);
                }
                pick
            } else {
                (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
            };
            chosen.push(next);
            for i in 0..n {
                nearest[i] = nearest[i].min(self.dist[i][next]);
            }
        }
        chosen
    }

    fn run<R: Rng>(&self, k: usize, max_iter: usize, rng: &mut R) -> (Vec<usize>, f64, Vec<f64>, bool) {
        let n = self.sqrt_rows.len();
        let mut centroids: Vec<Vec<f64>> = self.seed_centres(k, rng).into_iter().map(|i| self.sqrt_rows[i].clone()).collect();
        let mut labels = vec![usize::MAX; n];
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..max_iter {
            let mut point_cost = vec![0.0; n];
            let mut changed = false;
            for i in 0..n {
                let (best, cost) = centroids
                    .iter()
                    .enumerate()
                    .map(|(c, cen)| (c, self.to_centroid(i, cen)))
                    .fold((0, f64::INFINITY), |acc, (c, d)| if d < acc.1 { (c, d) } else { acc });
                if labels[i] != best {
                    changed = true;
                    labels[i] = best;
                }
                point_cost[i] = cost;
            }
            // re-seed empty clusters at the farthest density
            let mut counts = vec![0usize; k];
            labels.iter().for_each(|&l| counts[l] += 1);
            for c in 0..k {
                if counts[c] > 0 {
                    continue;
                }
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| point_cost[a].total_cmp(&point_cost[b]).then(b.cmp(&a)))
                    .expect("k <= distinct densities");
                counts[labels[far]] -= 1;
                counts[c] = 1;
                labels[far] = c;
                point_cost[far] = 0.0;
                centroids[c] = self.sqrt_rows[far].clone();
                changed = true;
            }
            history.push(point_cost.iter().sum());
            if !changed {
                converged = true;
                break;
            }
            for (c, cen) in centroids.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                *cen = self.centroid(&members);
            }
        }
        let objective = (0..n).map(|i| self.to_centroid(i, &centroids[labels[i]])).sum();
        (labels, objective, history, converged)
    }
}

/// Relabels clusters by order of first appearance.
fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn kmeans_with_matrix(densities: &DensityGrid, dist: &[Vec<f64>], k: usize, config: &KMeansConfig, seed: u64) -> Result<KMeansFit> {
    let n = densities.len();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, reason: format!("must lie in 1..={n}") });
    }
    let distinct = distinct_count(dist);
    if k > distinct {
        return Err(Error::InvalidClusterCount { k, reason: format!("only {distinct} distinct densities") });
    }
    let sqrt_rows: Vec<Vec<f64>> = densities.rows.iter().map(|r| r.iter().map(|v| v.sqrt()).collect()).collect();
    let weights = trapezoid_weights(&densities.grid);
    let lloyd = Lloyd { sqrt_rows: &sqrt_rows, weights: &weights, dist, mode: config.centroid };
    let runs = par::map_indexed(config.restarts.max(1), |r| {
        let mut rng = rng::substream(rng::stage_seed(seed, &format!("k{k}")), STAGE_CLUSTER, r as u64);
        lloyd.run(k, config.max_iter, &mut rng)
    });
    let (restart, (labels, objective, history, converged)) = runs
        .into_iter()
        .enumerate()
        .fold(None, |best: Option<(usize, (Vec<usize>, f64, Vec<f64>, bool))>, (r, run)| match best {
            Some(b) if b.1 .1 <= run.1 => Some(b),
            _ => Some((r, run)),
        })
        .expect("at least one restart");
    Ok(KMeansFit { k, labels: canonical_labels(&labels), objective, history, converged, restart })
}

/// k-means in density space with seeded farthest-point restarts; the best
/// restart by within-cluster distance sum wins.
pub fn kmeans_hellinger(densities: &DensityGrid, k: usize, config: &KMeansConfig, seed: u64) -> Result<KMeansFit> {
    kmeans_with_matrix(densities, &densities.distance_matrix(), k, config, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub per_density: Vec<f64>,
    pub per_cluster: Vec<f64>,
    /// Mean of the per-cluster coefficients.
    pub average: f64,
}

/// Silhouette coefficients for labels `0..K` over a distance matrix.
/// Members of singleton clusters score 0.
pub fn silhouette(labels: &[usize], dist: &[Vec<f64>]) -> Result<Silhouette> {
    let n = labels.len();
    if dist.len() != n || dist.iter().any(|r| r.len() != n) {
        return Err(Error::Mismatch(format!("{n} labels for a {}-row distance matrix", dist.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::InvalidClusterCount { k, reason: "silhouette needs at least two clusters".into() });
    }
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidClusterCount { k, reason: format!("cluster {c} is empty") });
    }
    let per_density: Vec<f64> = (0..n)
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += dist[i][j];
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            silhouette_value(a, b)
        })
        .collect();
    let mut per_cluster = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        per_cluster[l] += per_density[i];
    }
    for (c, s) in per_cluster.iter_mut().enumerate() {
        *s /= sizes[c] as f64;
    }
    let average = per_cluster.iter().sum::<f64>() / k as f64;
    Ok(Silhouette { per_density, per_cluster, average })
}

/// `1 − a/b` when `a ≤ b`, else `b/a − 1`.
pub fn silhouette_value(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a < b {
        1.0 - a / b
    } else {
        b / a - 1.0
    }
}

/// Verbal homogeneity band for a cluster silhouette.
pub fn homogeneity(s: f64) -> &'static str {
    if s > 0.75 {
        "very homogeneous"
    } else if s > 0.5 {
        "good to moderate homogeneity"
    } else {
        "poor structure"
    }
}

/// Run of consecutive slots sharing a cluster; `end` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub cluster: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn slots(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

pub fn contiguous_segments(labels: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (slot, &c) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.cluster == c => seg.end = slot,
            _ => out.push(Segment { start: slot, end: slot, cluster: c }),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    pub per_density_silhouette: Vec<f64>,
    pub per_cluster_silhouette: Vec<f64>,
    pub average_silhouette: f64,
    pub segments: Vec<Segment>,
    /// `(K, average silhouette)` for every K that could be evaluated.
    pub silhouette_curve: Vec<(usize, f64)>,
}

impl ClusterAssignment {
    /// Single-cluster assignment covering all slots (no selection).
    pub fn single(n: usize) -> Self {
        let labels = vec![0; n];
        ClusterAssignment {
            k: 1,
            segments: contiguous_segments(&labels),
            labels,
            per_density_silhouette: vec![0.0; n],
            per_cluster_silhouette: vec![0.0],
            average_silhouette: 0.0,
            silhouette_curve: Vec::new(),
        }
    }
}

/// Picks the K in `k_range` with the largest average silhouette, ties to
/// the smaller K.
pub fn select_k(densities: &DensityGrid, k_range: std::ops::RangeInclusive<usize>, config: &KMeansConfig, seed: u64) -> Result<ClusterAssignment> {
    let n = densities.len();
    if *k_range.start() < 2 || *k_range.end() >= n || k_range.is_empty() {
        return Err(Error::InvalidClusterCount {
            k: *k_range.end(),
            reason: format!("K range must lie within [2, {}]", n.saturating_sub(1)),
        });
    }
    let dist = densities.distance_matrix();
    let mut best: Option<(KMeansFit, Silhouette)> = None;
    let mut curve = Vec::new();
    for k in k_range {
        let fit = match kmeans_with_matrix(densities, &dist, k, config, seed) {
            Ok(f) => f,
            Err(Error::InvalidClusterCount { .. }) => continue,
            Err(e) => return Err(e),
        };
        let sil = silhouette(&fit.labels, &dist)?;
        curve.push((k, sil.average));
        if best.as_ref().is_none_or(|(_, b)| sil.average > b.average) {
            best = Some((fit, sil));
        }
    }
    let (fit, sil) = best.ok_or_else(|| Error::NoClusterStructure("densities are indistinguishable; all silhouettes vanish".into()))?;
    if !(sil.average > 1e-9) {
        return Err(Error::NoClusterStructure(format!("best average silhouette {:.3e} is not positive", sil.average)));
    }
    Ok(ClusterAssignment {
        k: fit.k,
        segments: contiguous_segments(&fit.labels),
        labels: fit.labels,
        per_density_silhouette: sil.per_density,
        per_cluster_silhouette: sil.per_cluster,
        average_silhouette: sil.average,
        silhouette_curve: curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::norm_pdf;
    use proptest::prelude::*;

    fn gaussian_grid(means: &[f64], sd: f64) -> DensityGrid {
        let grid: Vec<f64> = (0..512).map(|k| -10.0 + 25.0 * k as f64 / 511.0).collect();
        let rows = means.iter().map(|&m| grid.iter().map(|&x| norm_pdf((x - m) / sd) / sd).collect()).collect();
        DensityGrid::new(grid, rows).unwrap()
    }

    #[test]
    fn identity_and_disjoint() {
        let grid: Vec<f64> = (0..101).map(|k| k as f64 / 100.0).collect();
        let f: Vec<f64> = grid.iter().map(|&x| if x < 0.5 { 2.0 } else { 0.0 }).collect();
        let g: Vec<f64> = grid.iter().map(|&x| if x > 0.5 { 2.0 } else { 0.0 }).collect();
        let dg = DensityGrid::new(grid.clone(), vec![f, g]).unwrap();
        assert_eq!(dg.distance(0, 0), 0.0);
        assert!((dg.distance(0, 1) - 1.0).abs() < 1e-6);
        assert!(matches!(hellinger_sq(&[1.0; 3], &[1.0; 4], &[0.0, 1.0, 2.0]), Err(Error::GridMismatch)));
    }

    #[test]
    fn silhouette_formula_branches() {
        assert!((silhouette_value(0.2, 0.8) - 0.75).abs() < 1e-15);
        assert_eq!(silhouette_value(0.4, 0.4), 0.0);
        assert!((silhouette_value(0.8, 0.2) + 0.75).abs() < 1e-15);
    }

    #[test]
    fn silhouette_rejects_single_cluster() {
        let d = vec![vec![0.0, 0.1], vec![0.1, 0.0]];
        assert!(matches!(silhouette(&[0, 0], &d), Err(Error::InvalidClusterCount { k: 1, .. })));
        let s = silhouette(&[0, 1], &d).unwrap();
        assert_eq!(s.per_density, vec![0.0, 0.0]);
    }

    #[test]
    fn k_one_is_global_barycentre() {
        let dg = gaussian_grid(&[0.0, 0.5, 1.0, 2.0], 1.0);
        let fit = kmeans_hellinger(&dg, 1, &KMeansConfig::default(), 1).unwrap();
        assert!(fit.labels.iter().all(|&l| l == 0));
        let w = trapezoid_weights(dg.grid());
        let mut c = vec![0.0; 512];
        for r in dg.rows() {
            for (ck, v) in c.iter_mut().zip(r) {
                *ck += v.sqrt();
            }
        }
        let norm: f64 = c.iter().zip(&w).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
        let bary: Vec<f64> = c.iter().map(|v| (v / norm).powi(2)).collect();
        let expected: f64 = dg.rows().iter().map(|r| hellinger_sq(r, &bary, dg.grid()).unwrap()).sum();
        assert!((fit.objective - expected).abs() < 1e-12);
    }

    #[test]
    fn k_equal_n_has_zero_objective() {
        let means: Vec<f64> = (0..8).map(|i| i as f64 * 0.7).collect();
        let dg = gaussian_grid(&means, 0.8);
        let fit = kmeans_hellinger(&dg, 8, &KMeansConfig::default(), 9).unwrap();
        assert!(fit.objective < 1e-12);
        let mut l = fit.labels.clone();
        l.sort();
        l.dedup();
        assert_eq!(l.len(), 8);
    }

    #[test]
    fn too_many_clusters_for_duplicates() {
        let dg = gaussian_grid(&[0.0, 0.0, 0.0, 3.0], 1.0);
        assert!(matches!(
            kmeans_hellinger(&dg, 3, &KMeansConfig::default(), 0),
            Err(Error::InvalidClusterCount { k: 3, .. })
        ));
    }

    #[test]
    fn objective_history_non_increasing() {
        let means: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64 * 0.6).collect();
        let dg = gaussian_grid(&means, 0.9);
        for mode in [CentroidMode::SqrtMean, CentroidMode::Medoid] {
            let cfg = KMeansConfig { centroid: mode, ..Default::default() };
            for seed in 0..5 {
                let fit = kmeans_hellinger(&dg, 4, &cfg, seed).unwrap();
                assert!(fit.history.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", fit.history);
                assert!(fit.history.len() <= DEFAULT_MAX_ITER);
            }
        }
    }

    #[test]
    fn planted_groups_separate() {
        let mut means = vec![0.0; 10];
        means.extend(vec![5.0; 10]);
        let means: Vec<f64> = means.iter().enumerate().map(|(i, m)| m + 0.05 * (i % 5) as f64).collect();
        let dg = gaussian_grid(&means, 1.0);
        for seed in 0..20 {
            let fit = kmeans_hellinger(&dg, 2, &KMeansConfig { restarts: 1, ..Default::default() }, seed).unwrap();
            assert!(fit.labels[..10].iter().all(|&l| l == 0));
            assert!(fit.labels[10..].iter().all(|&l| l == 1));
        }
    }

    #[test]
    fn segments_partition_in_order() {
        let labels = [0, 0, 1, 1, 1, 0, 2, 2];
        let segs = contiguous_segments(&labels);
        assert_eq!(
            segs,
            vec![
                Segment { start: 0, end: 1, cluster: 0 },
                Segment { start: 2, end: 4, cluster: 1 },
                Segment { start: 5, end: 5, cluster: 0 },
                Segment { start: 6, end: 7, cluster: 2 },
            ]
        );
        assert_eq!(segs.iter().map(Segment::len).sum::<usize>(), labels.len());
    }

    #[test]
    fn identical_densities_have_no_structure() {
        let dg = gaussian_grid(&[1.0; 48], 1.0);
        assert!(matches!(select_k(&dg, 2..=8, &KMeansConfig::default(), 1), Err(Error::NoClusterStructure(_))));
    }

    #[test]
    fn homogeneity_bands() {
        assert_eq!(homogeneity(0.8), "very homogeneous");
        assert_eq!(homogeneity(0.61), "good to moderate homogeneity");
        assert_eq!(homogeneity(0.5), "poor structure");
    }

    proptest! {
        #[test]
        fn hellinger_metric_properties(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
                                       sa in 0.3f64..2.0, sb in 0.3f64..2.0, sc in 0.3f64..2.0) {
            let grid: Vec<f64> = (0..800).map(|k| -15.0 + 30.0 * k as f64 / 799.0).collect();
            let row = |m: f64, s: f64| grid.iter().map(|&x| norm_pdf((x - m) / s) / s).collect::<Vec<_>>();
            let dg = DensityGrid::new(grid.clone(), vec![row(a, sa), row(b, sb), row(c, sc)]).unwrap();
            let d = dg.distance_matrix();
            for i in 0..3 {
                prop_assert_eq!(d[i][i], 0.0);
                for j in 0..3 {
                    prop_assert!(d[i][j] >= 0.0 && d[i][j] <= 1.0);
                    prop_assert_eq!(d[i][j], d[j][i]);
                }
            }
            let h = |i: usize, j: usize| d[i][j].sqrt();
            prop_assert!(h(0, 2) <= h(0, 1) + h(1, 2) + 1e-9);
            prop_assert!(h(0, 1) <= h(0, 2) + h(2, 1) + 1e-9);
        }

        #[test]
        fn silhouettes_bounded(labels in proptest::collection::vec(0usize..3, 6..20), seed in 0u64..100) {
            prop_assume!((0..3).all(|c| labels.contains(&c)));
            let n = labels.len();
            let mut d = vec![vec![0.0; n]; n];
            let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for i in 0..n {
                for j in (i + 1)..n {
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let v = (x >> 11) as f64 / (1u64 << 53) as f64;
                    d[i][j] = v;
                    d[j][i] = v;
                }
            }
            let s = silhouette(&labels, &d).unwrap();
            prop_assert!(s.per_density.iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert!((-1.0..=1.0).contains(&s.average));
        }
    }
}
