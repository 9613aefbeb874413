//! End-to-end household fit: slot densities, clustering, vines.

use serde::{Deserialize, Serialize};

use crate::clustering::{select_k, CentroidMode, ClusterAssignment, DensityGrid, KMeansConfig, DEFAULT_GRID_POINTS};
use crate::copula::{fit_dvine, pit, CandidateSet, Family, VineModel};
use crate::density::{fit_kde, BandwidthRule, DensityModel, Kernel, OffsetPolicy};
use crate::error::{Error, Result};
use crate::ingest::{SlotMatrix, SLOTS_PER_DAY};
use crate::model::{FitMetadata, HouseholdModel, MarginalMode, SCHEMA_VERSION};
use crate::par;
use crate::rng::{stage_seed, STAGE_CLUSTER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub kernel: Kernel,
    pub bandwidth: BandwidthRule,
    pub offset: OffsetPolicy,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub centroid: CentroidMode,
    pub grid_points: usize,
    pub families: Vec<Family>,
    pub rotations: bool,
    /// Highest fitted vine tree; `None` fits every tree.
    pub truncation: Option<usize>,
    pub marginal_mode: MarginalMode,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let km = KMeansConfig::default();
        FitConfig {
            kernel: Kernel::Gaussian,
            bandwidth: BandwidthRule::SheatherJones,
            offset: OffsetPolicy::Adaptive,
            k_min: 2,
            k_max: 8,
            restarts: km.restarts,
            max_iter: km.max_iter,
            centroid: km.centroid,
            grid_points: DEFAULT_GRID_POINTS,
            families: Family::ALL.to_vec(),
            rotations: true,
            truncation: None,
            marginal_mode: MarginalMode::PerSlot,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig { restarts: self.restarts, max_iter: self.max_iter, centroid: self.centroid }
    }

    pub fn candidates(&self) -> CandidateSet {
        CandidateSet { families: self.families.clone(), rotations: self.rotations }
    }
}

/// Fits one KDE per slot column.
pub fn fit_slot_densities(matrix: &SlotMatrix, config: &FitConfig) -> Result<Vec<DensityModel>> {
    par::try_map_indexed(SLOTS_PER_DAY, |s| {
        let col = matrix.slot_column(s)?;
        fit_kde(&col, config.kernel, config.bandwidth, config.offset)
            .map_err(|e| e.in_stage(format!("density for slot {}", s + 1)))
    })
}

fn pooled_marginals(matrix: &SlotMatrix, clusters: &ClusterAssignment, config: &FitConfig) -> Result<Vec<DensityModel>> {
    let pooled = par::try_map_indexed(clusters.k, |c| {
        let mut values = Vec::new();
        for (s, _) in clusters.labels.iter().enumerate().filter(|(_, &l)| l == c) {
            values.extend(matrix.slot_column(s)?);
        }
        fit_kde(&values, config.kernel, config.bandwidth, config.offset)
            .map_err(|e| e.in_stage(format!("pooled density for cluster {c}")))
    })?;
    Ok(clusters.labels.iter().map(|&c| pooled[c].clone()).collect())
}

/// Runs the full fit for one household's filtered days.
pub fn fit_household(matrix: &SlotMatrix, customer_id: u64, config: &FitConfig) -> Result<HouseholdModel> {
    if config.k_min < 2 || config.k_max < config.k_min {
        return Err(Error::InvalidClusterCount {
            k: config.k_max,
            reason: format!("K range {}..={} must start at 2 or above and be non-empty", config.k_min, config.k_max),
        });
    }
    let mut warnings = Vec::new();
    let densities = fit_slot_densities(matrix, config)?;
    for (s, d) in densities.iter().enumerate() {
        if d.bandwidth_fallback() {
            warnings.push(format!("slot {}: Sheather-Jones had no root, used Silverman", s + 1));
        }
    }

    let grid = DensityGrid::from_models(&densities, config.grid_points).map_err(|e| e.in_stage("clustering"))?;
    let k_max = config.k_max.min(SLOTS_PER_DAY - 1);
    let clusters = match select_k(&grid, config.k_min..=k_max, &config.kmeans(), stage_seed(config.seed, STAGE_CLUSTER)) {
        Ok(c) => c,
        Err(Error::NoClusterStructure(msg)) => {
            warnings.push(format!("no cluster structure ({msg}); using one segment"));
            ClusterAssignment::single(SLOTS_PER_DAY)
        }
        Err(e) => return Err(e.in_stage("clustering")),
    };

    let (marginals, slot_densities) = match config.marginal_mode {
        MarginalMode::PerSlot => (densities, None),
        MarginalMode::PooledPerCluster => (pooled_marginals(matrix, &clusters, config)?, Some(densities)),
    };

    let candidates = config.candidates();
    let mut vines = Vec::with_capacity(clusters.segments.len());
    for seg in &clusters.segments {
        let slots: Vec<usize> = seg.slots().collect();
        if slots.len() == 1 {
            vines.push(VineModel::trivial(slots[0]));
            continue;
        }
        let cols = slots.iter().map(|&s| matrix.slot_column(s)).collect::<Result<Vec<_>>>()?;
        let col_refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let margs: Vec<&DensityModel> = slots.iter().map(|&s| &marginals[s]).collect();
        let stage = format!("vine for slots {}-{}", seg.start + 1, seg.end + 1);
        let pseudo = pit(&col_refs, &margs).map_err(|e| e.in_stage(stage.clone()))?;
        let vine = fit_dvine(&pseudo, &slots, config.truncation, &candidates).map_err(|e| e.in_stage(stage.clone()))?;
        let flagged = vine.flagged_edges();
        if flagged > 0 {
            warnings.push(format!("{stage}: {flagged} flagged edge fits"));
        }
        vines.push(vine);
    }

    let model = HouseholdModel {
        schema_version: SCHEMA_VERSION,
        customer_id,
        marginals,
        slot_densities,
        clusters,
        vines,
        metadata: FitMetadata {
            seed: config.seed,
            filter: matrix.provenance.filter.clone(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            source_digest: matrix.provenance.source_digest.clone(),
            n_days: matrix.n_days(),
            marginal_mode: config.marginal_mode,
            settings: serde_json::to_value(config)?,
            warnings,
        },
    };
    model.validate()?;
    Ok(model)
}
