//! Output directory handling and CSV writers shared by the commands.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use loadvine::clustering::homogeneity;
use loadvine::ingest::SLOTS_PER_DAY;
use loadvine::model::HouseholdModel;

use crate::CliError;

pub const LOCK_FILE: &str = ".loadvine.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    lock: PathBuf,
}

impl OutputDir {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let lock = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputDir { dir: dir.to_path_buf(), lock })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(lock)),
            Err(e) => Err(CliError::io(&lock, e)),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&self, name: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
        let path = self.path(name);
        let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(csv::Writer::from_writer(BufWriter::new(f)))
    }

    pub fn json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(loadvine::Error::from)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// Label of 0-based slot `s`: the clock time its half hour ends, as in
/// the meter data (`00:30` for the first slot, `24:00` for the last).
pub fn slot_label(s: usize) -> String {
    let minutes = (s + 1) * 30;
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

pub fn slot_header() -> Vec<String> {
    (0..SLOTS_PER_DAY).map(|s| format!("slot_{}", s + 1)).collect()
}

pub fn fmt(x: f64) -> String {
    x.to_string()
}

/// Segment table: 1-based slot range, first and last slot label, cluster.
pub fn write_segments(out: &OutputDir, model: &HouseholdModel) -> Result<(), CliError> {
    let mut w = out.csv("segments.csv")?;
    w.write_record(["start_slot", "end_slot", "start_label", "end_label", "cluster", "cluster_silhouette", "homogeneity"])?;
    for seg in &model.clusters.segments {
        let s = model.clusters.per_cluster_silhouette.get(seg.cluster).copied().unwrap_or(0.0);
        w.write_record([
            (seg.start + 1).to_string(),
            (seg.end + 1).to_string(),
            slot_label(seg.start),
            slot_label(seg.end),
            (seg.cluster + 1).to_string(),
            fmt(s),
            homogeneity(s).to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&out.path("segments.csv"), e))
}

/// One row per vine edge; slots are 1-based.
pub fn write_vine_edges(out: &OutputDir, model: &HouseholdModel) -> Result<(), CliError> {
    let mut w = out.csv("vine_edges.csv")?;
    w.write_record([
        "segment", "tree", "left_slot", "right_slot", "conditioning", "family", "rotation", "parameter", "tau", "loglik",
        "aic", "flagged",
    ])?;
    for (i, vine) in model.vines.iter().enumerate() {
        for e in vine.edges() {
            let c = &e.copula;
            let cond: Vec<String> = e.conditioning.iter().map(|s| (s + 1).to_string()).collect();
            w.write_record([
                (i + 1).to_string(),
                e.tree.to_string(),
                (e.conditioned.0 + 1).to_string(),
                (e.conditioned.1 + 1).to_string(),
                cond.join(" "),
                c.family.name().to_string(),
                c.rotation.degrees().to_string(),
                c.theta().map(fmt).unwrap_or_default(),
                fmt(c.tau()),
                fmt(c.loglik),
                fmt(c.aic),
                c.flagged.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| CliError::io(&out.path("vine_edges.csv"), e))
}
