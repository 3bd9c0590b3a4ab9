use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Generator, SynthError, Trajectory};
use crate::data::{CellFeatures, FeatureRow, EOL_PCL};

/// `(a, b)` of the feature channels `x = a u + b u^2`, monotone on `[0, 1]`.
pub const CHANNEL_COEFFS: [(f64, f64); 4] = [(1.0, 0.0), (0.5, 1.0), (-0.8, 0.3), (2.0, -0.8)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub generator: Generator,
    pub cells: usize,
    pub cycles: u32,
    /// Relative half-width of the uniform spread of each cell's rate constant.
    pub heterogeneity: f64,
    /// Std of the Gaussian noise on the PCL labels.
    pub noise_std: f64,
    pub feature_noise_std: f64,
    pub channels: usize,
    pub seed: u64,
    /// Drop rows after the first cycle whose PCL reaches `eol_pcl`.
    pub truncate_at_eol: bool,
    pub eol_pcl: f64,
    /// Cell ids; numbered from 1 when empty.
    pub ids: Vec<String>,
    pub batch: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            generator: Generator::default(),
            cells: 3,
            cycles: 500,
            heterogeneity: 0.0,
            noise_std: 1e-3,
            feature_noise_std: 1e-3,
            channels: 3,
            seed: 0,
            truncate_at_eol: true,
            eol_pcl: EOL_PCL,
            ids: Vec::new(),
            batch: "2".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        self.generator.validate()?;
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.cells == 0 || self.cycles == 0 {
            return bad("need at least one cell and one cycle".into());
        }
        if !(0.0..1.0).contains(&self.heterogeneity) {
            return bad(format!("heterogeneity {} outside [0, 1)", self.heterogeneity));
        }
        if !(self.noise_std >= 0.0 && self.feature_noise_std >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if self.channels == 0 || self.channels > CHANNEL_COEFFS.len() {
            return bad(format!("channels must be in 1..={}", CHANNEL_COEFFS.len()));
        }
        if !self.ids.is_empty() && self.ids.len() != self.cells {
            return bad(format!("{} ids for {} cells", self.ids.len(), self.cells));
        }
        Ok(())
    }

    fn id(&self, i: usize) -> String {
        self.ids.get(i).cloned().unwrap_or_else(|| (i + 1).to_string())
    }
}

/// Generated cells with their noiseless truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub cells: Vec<CellFeatures>,
    /// Noiseless trajectory of each cell, over every generated cycle.
    pub truth: Vec<Trajectory>,
    /// Per-cell law after the heterogeneity draw.
    pub generators: Vec<Generator>,
}

impl SyntheticDataset {
    pub fn rows(&self) -> Vec<FeatureRow> {
        self.cells.iter().flat_map(|c| c.rows.iter().cloned()).collect()
    }

    /// Noiseless PCL of `cell` at `cycle`.
    pub fn true_pcl(&self, cell: &str, cycle: u32) -> Option<f64> {
        let i = self.cells.iter().position(|c| c.id == cell)?;
        let tr = &self.truth[i];
        let k = tr.times.iter().position(|&t| t == f64::from(cycle))?;
        Some(tr.values[k])
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("std validated non-negative")
}

/// Cells whose PCL follows `cfg.generator` with per-cell rate spread, label
/// noise and feature channels derived from the noiseless PCL.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SyntheticDataset, SynthError> {
    cfg.validate()?;
    let mut cells = Vec::with_capacity(cfg.cells);
    let mut truth = Vec::with_capacity(cfg.cells);
    let mut generators = Vec::with_capacity(cfg.cells);
    for i in 0..cfg.cells {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64 + 1);
        let factor = if cfg.heterogeneity > 0.0 {
            1.0 + rng.random_range(-cfg.heterogeneity..=cfg.heterogeneity)
        } else {
            1.0
        };
        let generator = cfg.generator.with_rate_factor(factor);
        let tr = generator.trajectory(cfg.cycles)?;
        let label_noise = normal(cfg.noise_std);
        let feature_noise = normal(cfg.feature_noise_std);

        let mut observed = Vec::with_capacity(tr.len());
        for (&t, &u) in tr.times.iter().zip(&tr.values) {
            let pcl = u + label_noise.sample(&mut rng);
            let x: Vec<f64> = CHANNEL_COEFFS[..cfg.channels]
                .iter()
                .map(|&(a, b)| a * u + b * u * u + feature_noise.sample(&mut rng))
                .collect();
            observed.push((t as u32, x, pcl));
        }
        let eol = observed.iter().find(|(_, _, p)| *p >= cfg.eol_pcl - 1e-12).map(|(k, _, _)| *k);
        let id = cfg.id(i);
        let rows = observed
            .into_iter()
            .take_while(|(k, _, _)| !cfg.truncate_at_eol || eol.is_none_or(|e| *k <= e))
            .map(|(k, x, pcl)| FeatureRow {
                cell_id: id.clone(),
                batch: cfg.batch.clone(),
                cycle: k,
                x,
                pcl,
                rul: eol.filter(|&e| k <= e).map(|e| f64::from(e - k)),
            })
            .collect();
        cells.push(CellFeatures { id, batch: cfg.batch.clone(), eol, rows });
        truth.push(tr);
        generators.push(generator);
    }
    Ok(SyntheticDataset { cells, truth, generators })
}
