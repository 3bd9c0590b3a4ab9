use serde::{Deserialize, Serialize};

use super::HarnessError;

fn check_lengths(predictions: &[f64], labels: &[f64]) -> Result<(), HarnessError> {
    if predictions.len() != labels.len() {
        return Err(HarnessError::Usage(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(HarnessError::Usage("no samples to score".into()));
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64, HarnessError> {
    check_lengths(predictions, labels)?;
    let sse: f64 = predictions.iter().zip(labels).map(|(p, y)| (p - y).powi(2)).sum();
    Ok((sse / labels.len() as f64).sqrt())
}

/// Root mean square of relative errors, in percent.
pub fn rmspe(predictions: &[f64], labels: &[f64]) -> Result<f64, HarnessError> {
    check_lengths(predictions, labels)?;
    if let Some(index) = labels.iter().position(|&y| y == 0.0) {
        return Err(HarnessError::ZeroLabel { index });
    }
    let s: f64 = predictions.iter().zip(labels).map(|(p, y)| ((p - y) / y).powi(2)).sum();
    Ok((s / labels.len() as f64).sqrt() * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    /// Undefined when a label is zero (RUL at end of life).
    pub rmspe: Option<f64>,
    pub n: usize,
}

impl Metrics {
    pub fn compute(predictions: &[f64], labels: &[f64]) -> Result<Self, HarnessError> {
        let rmse = rmse(predictions, labels)?;
        let rmspe = match rmspe(predictions, labels) {
            Ok(v) => Some(v),
            Err(HarnessError::ZeroLabel { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Metrics { rmse, rmspe, n: labels.len() })
    }

    /// Arithmetic mean of each metric; RMSPE only if every entry has one.
    pub fn mean(all: &[Metrics]) -> Option<Metrics> {
        if all.is_empty() {
            return None;
        }
        let k = all.len() as f64;
        let rmspe = all.iter().map(|m| m.rmspe).sum::<Option<f64>>().map(|s| s / k);
        Some(Metrics {
            rmse: all.iter().map(|m| m.rmse).sum::<f64>() / k,
            rmspe,
            n: all.iter().map(|m| m.n).sum::<usize>() / all.len(),
        })
    }
}
