//! Run configuration: TOML file merged under command-line flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use loadvine::density::BandwidthRule;
use loadvine::ingest::{CalendarFilter, Category, CsvSchema, DateFormat, WeekdayId};
use loadvine::model::MarginalMode;
use loadvine::pipeline::FitConfig;
use loadvine::validate::PermutationConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// Ausgrid solar home export: customer, category, date, 48 readings.
    #[default]
    Ausgrid,
    /// `date` column followed by 48 readings, one household.
    Simple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub band: Option<[f64; 2]>,
    pub max_attempts: usize,
    pub levels: Vec<f64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { n: 1000, band: None, max_attempts: 100_000, levels: vec![0.01, 0.25, 0.5, 0.75, 0.99] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub permutations: usize,
    pub repetitions: usize,
    pub add_one: bool,
    pub freeze_covariance: bool,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection { permutations: 10_000, repetitions: 100, add_one: false, freeze_covariance: false }
    }
}

impl ValidateSection {
    pub fn permutation_config(&self) -> PermutationConfig {
        PermutationConfig {
            permutations: self.permutations,
            add_one: self.add_one,
            freeze_covariance: self.freeze_covariance,
        }
    }
}

/// Everything a command may need. Fields left `None` fall back to
/// defaults or are reported as missing by the command that needs them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    /// Pre-filtered slot matrix written by `ingest`; replaces `input`.
    pub slots: Option<PathBuf>,
    pub format: InputFormat,
    pub customer_id: Option<u64>,
    pub months: Option<Vec<u32>>,
    pub weekdays: Option<Vec<String>>,
    pub category: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub seed: Option<u64>,
    pub fit: FitConfig,
    pub simulate: SimulateSection,
    pub validate: ValidateSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn schema(&self) -> CsvSchema {
        match self.format {
            InputFormat::Ausgrid => CsvSchema::ausgrid(),
            InputFormat::Simple => CsvSchema {
                date_format: DateFormat::Auto,
                ..CsvSchema::simple(self.customer_id.unwrap_or(0))
            },
        }
    }

    pub fn filter(&self) -> Result<CalendarFilter, CliError> {
        let customer = self.customer_id.ok_or_else(|| CliError::Usage("customer id is required (--customer)".into()))?;
        let mut f = CalendarFilter::winter_workdays(customer);
        if let Some(m) = &self.months {
            f.months = m.iter().copied().collect();
        }
        if let Some(w) = &self.weekdays {
            f.weekdays = parse_weekdays(w)?;
        }
        if let Some(c) = &self.category {
            f.category = Category::parse(c).ok_or_else(|| CliError::Usage(format!("unknown category {c}")))?;
        }
        f.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(f)
    }

    pub fn output_dir(&self) -> Result<&Path, CliError> {
        self.output_dir.as_deref().ok_or_else(|| CliError::Usage("output directory is required (--out-dir)".into()))
    }

    pub fn model_path(&self) -> Result<&Path, CliError> {
        self.model.as_deref().ok_or_else(|| CliError::Usage("model file is required (--model)".into()))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Usage("a seed is required (--seed)".into()))
    }
}

/// Flags shared by the data-reading commands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct DataArgs {
    /// Raw meter-data CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Slot matrix CSV written by `ingest` (already filtered).
    #[arg(long, conflicts_with = "input")]
    pub slots: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    #[arg(long = "customer")]
    pub customer_id: Option<u64>,
    /// Months to keep, e.g. `6,7,8`.
    #[arg(long, value_delimiter = ',')]
    pub months: Option<Vec<u32>>,
    /// Weekdays to keep, e.g. `mon,tue,wed,thu` or `1,2,3,4`.
    #[arg(long, value_delimiter = ',')]
    pub weekdays: Option<Vec<String>>,
    /// Consumption category: GC, CL or GG.
    #[arg(long)]
    pub category: Option<String>,
}

/// Flags for the fit stage.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct FitArgs {
    /// `sheather-jones`, `silverman`, `scott` or a fixed positive number.
    #[arg(long)]
    pub bandwidth: Option<String>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Candidate copula families, e.g. `independence,gaussian,clayton`.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// Highest vine tree to fit; upper trees become independence.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Use one marginal per cluster instead of one per slot.
    #[arg(long)]
    pub pooled_marginals: bool,
}

impl DataArgs {
    pub fn apply(&self, c: &mut PipelineConfig) {
        if self.input.is_some() {
            c.input.clone_from(&self.input);
            c.slots = None;
        }
        if self.slots.is_some() {
            c.slots.clone_from(&self.slots);
            c.input = None;
        }
        if let Some(f) = self.format {
            c.format = f;
        }
        if self.customer_id.is_some() {
            c.customer_id = self.customer_id;
        }
        if self.months.is_some() {
            c.months.clone_from(&self.months);
        }
        if self.weekdays.is_some() {
            c.weekdays.clone_from(&self.weekdays);
        }
        if self.category.is_some() {
            c.category.clone_from(&self.category);
        }
    }
}

impl FitArgs {
    pub fn apply(&self, c: &mut PipelineConfig) -> Result<(), CliError> {
        if let Some(b) = &self.bandwidth {
            c.fit.bandwidth = parse_bandwidth(b)?;
        }
        if let Some(k) = self.k_min {
            c.fit.k_min = k;
        }
        if let Some(k) = self.k_max {
            c.fit.k_max = k;
        }
        if let Some(r) = self.restarts {
            c.fit.restarts = r;
        }
        if let Some(fams) = &self.families {
            c.fit.families = fams
                .iter()
                .map(|f| {
                    serde_json::from_value(serde_json::Value::String(f.trim().to_ascii_lowercase()))
                        .map_err(|_| CliError::Usage(format!("unknown copula family {f}")))
                })
                .collect::<Result<_, _>>()?;
        }
        if self.truncation.is_some() {
            c.fit.truncation = self.truncation;
        }
        if self.pooled_marginals {
            c.fit.marginal_mode = MarginalMode::PooledPerCluster;
        }
        Ok(())
    }
}

pub fn parse_bandwidth(s: &str) -> Result<BandwidthRule, CliError> {
    match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "sheather-jones" | "sj" => Ok(BandwidthRule::SheatherJones),
        "silverman" => Ok(BandwidthRule::Silverman),
        "scott" => Ok(BandwidthRule::Scott),
        other => match other.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(BandwidthRule::Fixed(h)),
            _ => Err(CliError::Usage(format!("unknown bandwidth rule {s}"))),
        },
    }
}

fn parse_weekdays(days: &[String]) -> Result<BTreeSet<WeekdayId>, CliError> {
    days.iter()
        .map(|d| WeekdayId::parse(d).ok_or_else(|| CliError::Usage(format!("unknown weekday {d}"))))
        .collect()
}
