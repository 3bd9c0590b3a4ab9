//! Cycling data: per-cycle records, health-feature extraction, labels,
//! z-score standardization and the Case A/B/C splits.

mod features;
mod io;
mod splits;
mod standardize;

pub use features::{
    assemble_features, ic_features, moving_average_trailing, quadratic_trend_fit, FeatureConfig, IcStats,
    QuadraticFit, VoltageWindow, FEATURE_NAMES,
};
pub use io::{
    ingest_flat_export, read_dataset, read_feature_csv, write_dataset, write_feature_csv, DatasetManifest,
    ManifestCell,
};
pub use splits::{make_splits, Case, Splits};
pub use standardize::StandardizationFactors;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal capacity of the A123 APR18650M1A cells, in Ah.
pub const NOMINAL_CAPACITY_AH: f64 = 1.1;
/// End of life: first cycle whose capacity loss reaches this fraction.
pub const EOL_PCL: f64 = 0.20;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("capacity {0} Ah is negative")]
    NegativeCapacity(f64),
    #[error("nominal capacity {0} Ah must be positive")]
    InvalidNominal(f64),
    #[error("need at least {need} samples inside the voltage window, found {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("voltage is not strictly monotone at sample {index} after removing duplicates")]
    NonMonotoneVoltage { index: usize },
    #[error("voltage and capacity arrays differ in length ({voltage} vs {capacity})")]
    RaggedCurve { voltage: usize, capacity: usize },
    #[error("channel {channel} has zero standard deviation in the fit set")]
    ZeroStd { channel: String },
    #[error("cannot fit standardization on an empty set")]
    EmptyFit,
    #[error("required cells missing from the dataset: {}", .0.join(", "))]
    MissingCells(Vec<String>),
    #[error("cell {0} never reaches end of life; no RUL labels")]
    NoEol(String),
    #[error("cell {cell}: records are not sorted by cycle (cycle {cycle} follows {previous})")]
    UnsortedCycles { cell: String, previous: u32, cycle: u32 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
}

/// Percentage capacity loss `u = 1 - Q_k / Q_nom`, as a fraction.
pub fn compute_pcl(capacity: f64, nominal: f64) -> Result<f64, DataError> {
    if !(nominal > 0.0) {
        return Err(DataError::InvalidNominal(nominal));
    }
    if capacity < 0.0 {
        return Err(DataError::NegativeCapacity(capacity));
    }
    Ok(1.0 - capacity / nominal)
}

/// Prediction target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// State of health; the model regresses PCL.
    Soh,
    /// Remaining useful life in cycles.
    Rul,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Soh => "soh",
            Task::Rul => "rul",
        })
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "soh" => Ok(Task::Soh),
            "rul" => Ok(Task::Rul),
            other => Err(format!("unknown task `{other}` (expected soh or rul)")),
        }
    }
}

/// Discharge sweep of one cycle: voltage (V) against cumulative discharged
/// capacity (Ah).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DischargeCurve {
    pub voltage: Vec<f64>,
    pub capacity: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellCycleRecord {
    pub cycle: u32,
    pub curve: DischargeCurve,
    pub charge_time_min: f64,
    pub internal_resistance_ohm: f64,
    pub avg_temperature_c: f64,
    pub discharge_capacity_ah: f64,
}

/// All cycles of one cell, sorted by cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct CellRecords {
    pub id: String,
    pub batch: String,
    pub records: Vec<CellCycleRecord>,
}

/// One sample: health features at a cycle plus its labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub cell_id: String,
    pub batch: String,
    pub cycle: u32,
    pub x: Vec<f64>,
    pub pcl: f64,
    /// `None` when the cell never reaches end of life.
    pub rul: Option<f64>,
}

impl FeatureRow {
    pub fn t(&self) -> f64 {
        self.cycle as f64
    }

    pub fn label(&self, task: Task) -> Option<f64> {
        match task {
            Task::Soh => Some(self.pcl),
            Task::Rul => self.rul,
        }
    }

    pub fn sample(&self, task: Task) -> Option<Sample> {
        Some(Sample { x: self.x.clone(), t: self.t(), y: self.label(task)? })
    }
}

/// Network-facing view of a row: inputs `(x, t)` and target `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub t: f64,
    pub y: f64,
}

/// Feature rows of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFeatures {
    pub id: String,
    pub batch: String,
    pub eol: Option<u32>,
    pub rows: Vec<FeatureRow>,
}

/// Feature extraction for every cell, in parallel; output order follows input.
pub fn featurize(cells: &[CellRecords], cfg: &FeatureConfig) -> Result<Vec<CellFeatures>, DataError> {
    use rayon::prelude::*;
    cells.par_iter().map(|c| assemble_features(c, cfg)).collect()
}

/// Regroups rows by cell, in order of first appearance. End of life is
/// recovered as `cycle + rul` from the first labelled row.
pub fn group_rows(rows: Vec<FeatureRow>) -> Vec<CellFeatures> {
    let mut cells: Vec<CellFeatures> = Vec::new();
    for row in rows {
        let i = match cells.iter().position(|c| c.id == row.cell_id) {
            Some(i) => i,
            None => {
                cells.push(CellFeatures { id: row.cell_id.clone(), batch: row.batch.clone(), eol: None, rows: Vec::new() });
                cells.len() - 1
            }
        };
        let cell = &mut cells[i];
        if cell.eol.is_none() {
            cell.eol = row.rul.map(|r| row.cycle + r as u32);
        }
        cell.rows.push(row);
    }
    cells
}
