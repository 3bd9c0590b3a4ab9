use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{SynthConfig, SynthError};
use crate::data::{CellCycleRecord, CellRecords, DatasetManifest, DischargeCurve, ManifestCell, NOMINAL_CAPACITY_AH};

/// Raw per-cycle records whose discharge curves deform with the PCL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RawConfig {
    pub synth: SynthConfig,
    /// Samples per discharge curve, from 3.5 V down to 2.0 V.
    pub points: usize,
    pub nominal_capacity_ah: f64,
    /// Noise scale on charge time, resistance and temperature.
    pub summary_noise: f64,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig { synth: SynthConfig::default(), points: 48, nominal_capacity_ah: NOMINAL_CAPACITY_AH, summary_noise: 0.01 }
    }
}

const V_TOP: f64 = 3.5;
const V_BOTTOM: f64 = 2.0;

/// Discharge curve of a cell with `capacity` Ah left at aging level `u`.
///
/// The capacity drawn follows a tanh plateau whose centre sinks and widens
/// as the cell ages, so the incremental-capacity peak moves with `u`.
fn discharge_curve(capacity: f64, u: f64, points: usize) -> DischargeCurve {
    let mid = 3.0 - 0.3 * u;
    let width = 0.10 + 0.20 * u;
    let g = |v: f64| -((v - mid) / width).tanh();
    let (g_top, g_bottom) = (g(V_TOP), g(V_BOTTOM));
    let voltage: Vec<f64> =
        (0..points).map(|i| V_TOP - (V_TOP - V_BOTTOM) * i as f64 / (points - 1) as f64).collect();
    let capacity = voltage.iter().map(|&v| capacity * (g(v) - g_top) / (g_bottom - g_top)).collect();
    DischargeCurve { voltage, capacity }
}

/// Cells in the raw schema, plus their manifest.
///
/// The measured discharge capacity is `Q_nom (1 - pcl)` with the noisy PCL of
/// the underlying synthetic trajectory; curves and summary channels follow
/// the noiseless PCL.
pub fn generate_raw(cfg: &RawConfig) -> Result<(DatasetManifest, Vec<CellRecords>), SynthError> {
    if cfg.points < 8 {
        return Err(SynthError::InvalidParams(format!("need at least 8 curve points, got {}", cfg.points)));
    }
    if !(cfg.nominal_capacity_ah > 0.0 && cfg.summary_noise >= 0.0) {
        return Err(SynthError::InvalidParams("nominal capacity and noise must be positive".into()));
    }
    let mut synth = cfg.synth.clone();
    synth.truncate_at_eol = false;
    let ds = super::generate_dataset(&synth)?;
    let noise = Normal::new(0.0, cfg.summary_noise).expect("validated non-negative");
    let mut cells = Vec::with_capacity(ds.cells.len());
    for (i, (cell, truth)) in ds.cells.iter().zip(&ds.truth).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.synth.seed ^ 0x5eed);
        rng.set_stream(i as u64 + 1);
        let records = cell
            .rows
            .iter()
            .zip(&truth.values)
            .map(|(row, &u)| {
                let q = cfg.nominal_capacity_ah * (1.0 - row.pcl);
                CellCycleRecord {
                    cycle: row.cycle,
                    curve: discharge_curve(q, u, cfg.points),
                    charge_time_min: 10.0 + 8.0 * u + 0.5 * noise.sample(&mut rng),
                    internal_resistance_ohm: 0.016 + 0.01 * u + 1e-3 * noise.sample(&mut rng),
                    avg_temperature_c: 31.0 + 4.0 * u + 0.5 * noise.sample(&mut rng),
                    discharge_capacity_ah: q,
                }
            })
            .collect();
        cells.push(CellRecords { id: cell.id.clone(), batch: cell.batch.clone(), records });
    }
    let manifest = DatasetManifest {
        nominal_capacity_ah: cfg.nominal_capacity_ah,
        cells: cells
            .iter()
            .map(|c| ManifestCell { id: c.id.clone(), batch: c.batch.clone(), source: Some("synthetic".into()) })
            .collect(),
    };
    Ok((manifest, cells))
}
