use serde::{Deserialize, Serialize};

use super::{DataError, Sample};

/// Per-channel z-score factors for x, t and the label u.
///
/// Population standard deviations are used, so the fit set maps to exactly
/// zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationFactors {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub t_mean: f64,
    pub t_std: f64,
    pub u_mean: f64,
    pub u_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, channel: impl FnOnce() -> String) -> Result<(f64, f64), DataError> {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let std = (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(std > 0.0) {
        return Err(DataError::ZeroStd { channel: channel() });
    }
    Ok((mean, std))
}

impl StandardizationFactors {
    /// Fits on training samples only.
    pub fn fit(samples: &[Sample]) -> Result<Self, DataError> {
        let first = samples.first().ok_or(DataError::EmptyFit)?;
        let s = first.x.len();
        let mut x_mean = Vec::with_capacity(s);
        let mut x_std = Vec::with_capacity(s);
        for j in 0..s {
            let (m, sd) = mean_std(samples.iter().map(|r| r.x[j]), || format!("x[{j}]"))?;
            x_mean.push(m);
            x_std.push(sd);
        }
        let (t_mean, t_std) = mean_std(samples.iter().map(|r| r.t), || "t".into())?;
        let (u_mean, u_std) = mean_std(samples.iter().map(|r| r.y), || "u".into())?;
        Ok(StandardizationFactors { x_mean, x_std, t_mean, t_std, u_mean, u_std })
    }

    /// Identity factors for `features` channels.
    pub fn identity(features: usize) -> Self {
        StandardizationFactors {
            x_mean: vec![0.0; features],
            x_std: vec![1.0; features],
            t_mean: 0.0,
            t_std: 1.0,
            u_mean: 0.0,
            u_std: 1.0,
        }
    }

    pub fn features(&self) -> usize {
        self.x_mean.len()
    }

    pub fn apply(&self, s: &Sample) -> Sample {
        Sample {
            x: s.x.iter().zip(&self.x_mean).zip(&self.x_std).map(|((v, m), sd)| (v - m) / sd).collect(),
            t: (s.t - self.t_mean) / self.t_std,
            y: self.scale_u(s.y),
        }
    }

    pub fn apply_all(&self, samples: &[Sample]) -> Vec<Sample> {
        samples.iter().map(|s| self.apply(s)).collect()
    }

    pub fn invert(&self, s: &Sample) -> Sample {
        Sample {
            x: s.x.iter().zip(&self.x_mean).zip(&self.x_std).map(|((v, m), sd)| v * sd + m).collect(),
            t: s.t * self.t_std + self.t_mean,
            y: self.unscale_u(s.y),
        }
    }

    /// Standardized inputs `[x.., t]` for the surrogate.
    pub fn inputs(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out: Vec<f64> = x.iter().zip(&self.x_mean).zip(&self.x_std).map(|((v, m), sd)| (v - m) / sd).collect();
        out.push((t - self.t_mean) / self.t_std);
        out
    }

    pub fn scale_u(&self, u: f64) -> f64 {
        (u - self.u_mean) / self.u_std
    }

    pub fn unscale_u(&self, u: f64) -> f64 {
        u * self.u_std + self.u_mean
    }

    /// Factor taking `d u~/d t~` in standardized units to `du/dt`.
    pub fn du_dt_scale(&self) -> f64 {
        self.u_std / self.t_std
    }
}
