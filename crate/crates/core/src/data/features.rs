use serde::{Deserialize, Serialize};

use super::{compute_pcl, CellFeatures, CellRecords, DataError, DischargeCurve, FeatureRow, EOL_PCL, NOMINAL_CAPACITY_AH};

/// Column order of the health-feature vector.
pub const FEATURE_NAMES: [&str; 8] = [
    "trend_omega",
    "trend_b",
    "ic_max",
    "ic_min",
    "ic_var",
    "avg_temperature_c",
    "internal_resistance_ohm",
    "charge_time_min",
];

// Grid voltages such as 2.7 + 60 * 0.01 land a few ulps outside the bounds.
const WINDOW_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageWindow {
    pub low: f64,
    pub high: f64,
}

impl Default for VoltageWindow {
    fn default() -> Self {
        VoltageWindow { low: 2.7, high: 3.3 }
    }
}

impl VoltageWindow {
    fn contains(&self, v: f64) -> bool {
        v >= self.low - WINDOW_SLACK && v <= self.high + WINDOW_SLACK
    }

    /// In-window samples in sweep order.
    fn select(&self, curve: &DischargeCurve) -> Result<(Vec<f64>, Vec<f64>), DataError> {
        if curve.voltage.len() != curve.capacity.len() {
            return Err(DataError::RaggedCurve { voltage: curve.voltage.len(), capacity: curve.capacity.len() });
        }
        Ok(curve
            .voltage
            .iter()
            .zip(&curve.capacity)
            .filter(|(v, _)| self.contains(**v))
            .map(|(v, q)| (*v, *q))
            .unzip())
    }
}

/// Parameters of the trend model `dQ = -omega * Q^2 + b + eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub omega: f64,
    pub b: f64,
    pub residual_std: f64,
}

/// Least-squares fit of consecutive capacity differences against `-Q^2`.
pub fn quadratic_trend_fit(curve: &DischargeCurve, window: VoltageWindow) -> Result<QuadraticFit, DataError> {
    let (_, q) = window.select(curve)?;
    if q.len() < 3 {
        return Err(DataError::TooFewSamples { need: 3, got: q.len() });
    }
    let z: Vec<f64> = q[..q.len() - 1].iter().map(|qi| -qi * qi).collect();
    let d: Vec<f64> = q.windows(2).map(|w| w[1] - w[0]).collect();
    let m = d.len() as f64;
    let z_bar = z.iter().sum::<f64>() / m;
    let d_bar = d.iter().sum::<f64>() / m;
    let szz: f64 = z.iter().map(|zi| (zi - z_bar).powi(2)).sum();
    let szd: f64 = z.iter().zip(&d).map(|(zi, di)| (zi - z_bar) * (di - d_bar)).sum();
    // a constant regressor carries no curvature information
    let omega = if szz > 0.0 { szd / szz } else { 0.0 };
    let b = d_bar - omega * z_bar;
    let ssr: f64 = z.iter().zip(&d).map(|(zi, di)| (di - omega * zi - b).powi(2)).sum();
    let residual_std = if d.len() > 2 { (ssr / (m - 2.0)).sqrt() } else { 0.0 };
    Ok(QuadraticFit { omega, b, residual_std })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcStats {
    pub max: f64,
    pub min: f64,
    pub variance: f64,
}

/// Derivative at `x` of the parabola through three points.
fn lagrange3_slope(xs: [f64; 3], fs: [f64; 3], x: f64) -> f64 {
    let [x0, x1, x2] = xs;
    let [f0, f1, f2] = fs;
    f0 * ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2))
        + f1 * ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2))
        + f2 * ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1))
}

/// Centered moving average whose window shrinks symmetrically at the ends,
/// so linear sequences pass through unchanged.
fn centered_average(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let span = &values[i - h..=i + h];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

/// Max, min and population variance of dQ/dV over the voltage window.
///
/// dQ/dV is taken from three-point Lagrange stencils on the (possibly
/// non-uniform) voltage grid, then smoothed by a centered moving average of
/// `smoothing` samples (1 disables it).
pub fn ic_features(curve: &DischargeCurve, window: VoltageWindow, smoothing: usize) -> Result<IcStats, DataError> {
    let (v_raw, q_raw) = window.select(curve)?;
    let mut v = Vec::with_capacity(v_raw.len());
    let mut q = Vec::with_capacity(q_raw.len());
    for (vi, qi) in v_raw.into_iter().zip(q_raw) {
        if v.last() != Some(&vi) {
            v.push(vi);
            q.push(qi);
        }
    }
    let n = v.len();
    if n < 3 {
        return Err(DataError::TooFewSamples { need: 3, got: n });
    }
    let ascending = v[1] > v[0];
    for i in 1..n {
        if (v[i] > v[i - 1]) != ascending {
            return Err(DataError::NonMonotoneVoltage { index: i });
        }
    }
    let dq: Vec<f64> = (0..n)
        .map(|i| {
            let j = i.clamp(1, n - 2) - 1;
            lagrange3_slope([v[j], v[j + 1], v[j + 2]], [q[j], q[j + 1], q[j + 2]], v[i])
        })
        .collect();
    let dq = centered_average(&dq, smoothing.max(1));
    let mean = dq.iter().sum::<f64>() / n as f64;
    let variance = dq.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
    let max = dq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = dq.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(IcStats { max, min, variance })
}

/// Causal moving average over the last `width` values (fewer at the start).
pub fn moving_average_trailing(series: &[f64], width: usize) -> Vec<f64> {
    let width = width.max(1);
    (0..series.len())
        .map(|k| {
            let span = &series[(k + 1).saturating_sub(width)..=k];
            // shifted by the first value so constant runs come back exactly
            let a = span[0];
            a + span.iter().map(|v| v - a).sum::<f64>() / span.len() as f64
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub window: VoltageWindow,
    /// Trailing moving-average width over cycles.
    pub moving_average: usize,
    /// Centered smoothing width applied to dQ/dV.
    pub ic_smoothing: usize,
    pub eol_pcl: f64,
    pub nominal_capacity_ah: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: VoltageWindow::default(),
            moving_average: 10,
            ic_smoothing: 5,
            eol_pcl: EOL_PCL,
            nominal_capacity_ah: NOMINAL_CAPACITY_AH,
        }
    }
}

/// Feature rows for one cell.
///
/// Cycles whose curve cannot be featurised are dropped. Features are smoothed
/// by a trailing moving average; rows after end of life are dropped.
pub fn assemble_features(cell: &CellRecords, cfg: &FeatureConfig) -> Result<CellFeatures, DataError> {
    for w in cell.records.windows(2) {
        if w[1].cycle <= w[0].cycle {
            return Err(DataError::UnsortedCycles { cell: cell.id.clone(), previous: w[0].cycle, cycle: w[1].cycle });
        }
    }
    let mut eol = None;
    for rec in &cell.records {
        // tolerate rounding at the threshold capacity
        if compute_pcl(rec.discharge_capacity_ah, cfg.nominal_capacity_ah)? >= cfg.eol_pcl - 1e-12 {
            eol = Some(rec.cycle);
            break;
        }
    }

    let mut cycles = Vec::new();
    let mut raw: Vec<[f64; 8]> = Vec::new();
    let mut pcl = Vec::new();
    for rec in &cell.records {
        let fit = quadratic_trend_fit(&rec.curve, cfg.window);
        let ic = ic_features(&rec.curve, cfg.window, cfg.ic_smoothing);
        let (fit, ic) = match (fit, ic) {
            (Ok(f), Ok(i)) => (f, i),
            (Err(e), _) | (_, Err(e)) => {
                log::debug!("cell {} cycle {}: dropped ({e})", cell.id, rec.cycle);
                continue;
            }
        };
        let x = [
            fit.omega,
            fit.b,
            ic.max,
            ic.min,
            ic.variance,
            rec.avg_temperature_c,
            rec.internal_resistance_ohm,
            rec.charge_time_min,
        ];
        if x.iter().any(|v| !v.is_finite()) {
            log::debug!("cell {} cycle {}: dropped (non-finite feature)", cell.id, rec.cycle);
            continue;
        }
        cycles.push(rec.cycle);
        raw.push(x);
        pcl.push(compute_pcl(rec.discharge_capacity_ah, cfg.nominal_capacity_ah)?);
    }

    let smoothed: Vec<Vec<f64>> = (0..FEATURE_NAMES.len())
        .map(|s| {
            let series: Vec<f64> = raw.iter().map(|x| x[s]).collect();
            moving_average_trailing(&series, cfg.moving_average)
        })
        .collect();

    let rows = cycles
        .iter()
        .enumerate()
        .take_while(|(_, &k)| eol.is_none_or(|e| k <= e))
        .map(|(i, &k)| FeatureRow {
            cell_id: cell.id.clone(),
            batch: cell.batch.clone(),
            cycle: k,
            x: smoothed.iter().map(|s| s[i]).collect(),
            pcl: pcl[i],
            rul: eol.map(|e| f64::from(e - k)),
        })
        .collect();
    Ok(CellFeatures { id: cell.id.clone(), batch: cell.batch.clone(), eol, rows })
}
