use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_round, HarnessError, RunSpec, Variant};
use crate::data::{Case, CellFeatures, Task};
use crate::dynamics::HpmInputs;
use crate::pinn::{Balancing, DynamicsConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Hidden layers x neurons of the baseline network.
    Structure,
    /// DeepHPM input sets with summed losses.
    HpmInputs,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Structure => "structure",
            SweepAxis::HpmInputs => "hpm-inputs",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structure" => Ok(SweepAxis::Structure),
            "hpm-inputs" => Ok(SweepAxis::HpmInputs),
            other => Err(format!("unknown sweep axis `{other}` (structure, hpm-inputs)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub layers: Vec<usize>,
    pub neurons: Vec<usize>,
    pub library: Vec<HpmInputs>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid { layers: vec![2, 4, 6, 8, 10], neurons: vec![8, 16, 32, 64, 128], library: HpmInputs::library() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub layers: usize,
    pub neurons: usize,
    pub inputs: Option<HpmInputs>,
    /// Position in the input library, for tie-breaking.
    pub library_index: usize,
    /// Round-averaged validation metric: RMSPE (%) for SoH, RMSE for RUL.
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub case: Case,
    pub task: Task,
    pub layers: Vec<usize>,
    pub neurons: Vec<usize>,
    pub cells: Vec<SweepCell>,
    pub argmin: usize,
}

fn order(a: &SweepCell, b: &SweepCell) -> Ordering {
    let m = |c: &SweepCell| if c.metric.is_nan() { f64::INFINITY } else { c.metric };
    m(a).total_cmp(&m(b))
        .then(a.layers.cmp(&b.layers))
        .then(a.neurons.cmp(&b.neurons))
        .then(a.library_index.cmp(&b.library_index))
}

/// Lowest metric; ties go to fewer layers, then fewer neurons, then the
/// earlier library entry. NaN ranks last.
pub fn argmin(cells: &[SweepCell]) -> Option<usize> {
    (0..cells.len()).min_by(|&i, &j| order(&cells[i], &cells[j]))
}

fn format_metric(task: Task, v: f64) -> String {
    match task {
        Task::Soh => format!("{v:.2e}"),
        Task::Rul => format!("{v:.2}"),
    }
}

impl SweepTable {
    pub fn best(&self) -> &SweepCell {
        &self.cells[self.argmin]
    }

    /// Layers as rows and neurons as columns, or one row per input set; the
    /// argmin is marked with `*`.
    pub fn to_csv(&self) -> String {
        let mark = |i: usize| {
            let v = format_metric(self.task, self.cells[i].metric);
            if i == self.argmin {
                format!("{v}*")
            } else {
                v
            }
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        let write = |w: &mut csv::Writer<Vec<u8>>, rec: Vec<String>| w.write_record(rec).expect("in-memory write");
        match self.axis {
            SweepAxis::Structure => {
                let mut head = vec!["layers\\neurons".to_string()];
                head.extend(self.neurons.iter().map(|n| n.to_string()));
                write(&mut w, head);
                for &l in &self.layers {
                    let mut rec = vec![l.to_string()];
                    for &n in &self.neurons {
                        let i = self.cells.iter().position(|c| c.layers == l && c.neurons == n).expect("full grid");
                        rec.push(mark(i));
                    }
                    write(&mut w, rec);
                }
            }
            SweepAxis::HpmInputs => {
                write(&mut w, vec!["inputs".into(), "metric".into()]);
                for (i, c) in self.cells.iter().enumerate() {
                    let name = c.inputs.as_ref().map(|x| x.to_string()).unwrap_or_default();
                    write(&mut w, vec![name, mark(i)]);
                }
            }
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
    }
}

/// Validation metric of every configuration on `axis`, rounds averaged.
///
/// The structure sweep trains the baseline; the input sweep trains DeepHPM
/// with summed losses on the structure of `base`.
pub fn sweep(
    axis: SweepAxis,
    base: &RunSpec,
    grid: &SweepGrid,
    cells: &[CellFeatures],
) -> Result<SweepTable, HarnessError> {
    let mut configs: Vec<(SweepCell, RunSpec)> = Vec::new();
    match axis {
        SweepAxis::Structure => {
            for &l in &grid.layers {
                for &n in &grid.neurons {
                    let mut spec = base.clone();
                    spec.variant = Variant::Baseline;
                    spec.train.dynamics = DynamicsConfig::Baseline;
                    spec.train.balancing = spec.balancing;
                    spec.train.surrogate.hidden_layers = l;
                    spec.train.surrogate.neurons = n;
                    let cell = SweepCell { layers: l, neurons: n, inputs: None, library_index: 0, metric: f64::NAN };
                    configs.push((cell, spec));
                }
            }
        }
        SweepAxis::HpmInputs => {
            let (l, n) = (base.train.surrogate.hidden_layers, base.train.surrogate.neurons);
            let (hl, hn) = match &base.train.dynamics {
                DynamicsConfig::Deephpm { hidden_layers, neurons, .. } => (*hidden_layers, *neurons),
                _ => (l, n),
            };
            for (k, inputs) in grid.library.iter().enumerate() {
                let mut spec = base.clone();
                spec.variant = Variant::PinnDeephpm;
                spec.balancing = Balancing::Sum;
                spec.train.balancing = Balancing::Sum;
                spec.train.dynamics = DynamicsConfig::deephpm(inputs.clone(), hl, hn);
                let cell =
                    SweepCell { layers: l, neurons: n, inputs: Some(inputs.clone()), library_index: k, metric: f64::NAN };
                configs.push((cell, spec));
            }
        }
    }
    if configs.is_empty() {
        return Err(HarnessError::Usage("empty sweep grid".into()));
    }
    for (_, spec) in &configs {
        spec.validate()?;
    }

    let jobs: Vec<(usize, usize)> =
        (0..configs.len()).flat_map(|c| (0..base.rounds).map(move |r| (c, r))).collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, r)| -> Result<f64, HarnessError> {
            let spec = &configs[c].1;
            let (res, _) = run_round(spec, cells, r)?;
            let m = res.validation.ok_or_else(|| HarnessError::Usage("sweeps need a validation split".into()))?;
            Ok(spec.headline(&m).unwrap_or(f64::NAN))
        })
        .collect::<Result<_, _>>()?;

    let mut out: Vec<SweepCell> = configs.into_iter().map(|(c, _)| c).collect();
    for (c, cell) in out.iter_mut().enumerate() {
        let s = &scores[c * base.rounds..(c + 1) * base.rounds];
        cell.metric = s.iter().sum::<f64>() / s.len() as f64;
    }
    let best = argmin(&out).expect("non-empty");
    Ok(SweepTable {
        axis,
        case: base.case,
        task: base.task,
        layers: grid.layers.clone(),
        neurons: grid.neurons.clone(),
        cells: out,
        argmin: best,
    })
}
