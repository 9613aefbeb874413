//! The fitted household model and its on-disk form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::copula::VineModel;
use crate::density::DensityModel;
use crate::error::{Error, Result};

/// Version of the JSON model layout. Bumped on incompatible changes.
pub const SCHEMA_VERSION: u32 = 1;

/// How slot marginals are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMode {
    /// One KDE per slot.
    #[default]
    PerSlot,
    /// One KDE per cluster, pooled over the cluster's slots.
    PooledPerCluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub seed: u64,
    pub filter: String,
    pub library_version: String,
    pub source_digest: Option<String>,
    pub n_days: usize,
    pub marginal_mode: MarginalMode,
    /// Resolved fit settings, echoed for provenance.
    pub settings: serde_json::Value,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdModel {
    pub schema_version: u32,
    pub customer_id: u64,
    /// One marginal per slot.
    pub marginals: Vec<DensityModel>,
    /// Slot densities used for clustering, when they differ from
    /// `marginals` (pooled mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_densities: Option<Vec<DensityModel>>,
    pub clusters: ClusterAssignment,
    /// One vine per entry of `clusters.segments`, in the same order.
    pub vines: Vec<VineModel>,
    pub metadata: FitMetadata,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<u32>,
}

impl HouseholdModel {
    pub fn slot_count(&self) -> usize {
        self.marginals.len()
    }

    /// Per-slot offsets ε.
    pub fn offsets(&self) -> Vec<f64> {
        self.marginals.iter().map(DensityModel::offset).collect()
    }

    /// Densities the clustering was run on.
    pub fn clustering_densities(&self) -> &[DensityModel] {
        self.slot_densities.as_deref().unwrap_or(&self.marginals)
    }

    /// Checks the structural invariants: segments partition the slots and
    /// every segment has a matching vine.
    pub fn validate(&self) -> Result<()> {
        let n = self.slot_count();
        if n == 0 {
            return Err(Error::Format("model has no marginals".into()));
        }
        if self.clusters.labels.len() != n {
            return Err(Error::Mismatch(format!("{} cluster labels for {n} slots", self.clusters.labels.len())));
        }
        let mut next = 0;
        for s in &self.clusters.segments {
            if s.start != next || s.end < s.start || s.end >= n {
                return Err(Error::Format(format!("segment {}-{} breaks the slot partition", s.start, s.end)));
            }
            next = s.end + 1;
        }
        if next != n {
            return Err(Error::Format("segments do not cover every slot".into()));
        }
        if self.vines.len() != self.clusters.segments.len() {
            return Err(Error::Mismatch(format!(
                "{} vines for {} segments",
                self.vines.len(),
                self.clusters.segments.len()
            )));
        }
        for (v, s) in self.vines.iter().zip(&self.clusters.segments) {
            if v.slots != s.slots().collect::<Vec<_>>() {
                return Err(Error::Mismatch(format!("vine slots do not match segment {}-{}", s.start, s.end)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        match probe.schema_version {
            Some(SCHEMA_VERSION) => {}
            found => return Err(Error::SchemaVersion { found: found.unwrap_or(0), expected: SCHEMA_VERSION }),
        }
        let model: HouseholdModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
