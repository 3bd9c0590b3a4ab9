use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{case_schedule, case_settings, reference_value, HarnessError, Metrics, Variant};
use crate::data::{
    featurize, group_rows, make_splits, read_dataset, read_feature_csv, Case, CellFeatures, FeatureConfig,
    FeatureRow, Sample, StandardizationFactors, Task,
};
use crate::pinn::{train, Balancing, DynamicsConfig, LossWeights, SurrogateConfig, TrainConfig, TrainedModel};

/// One case experiment: which model to train, how often and with what settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub case: Case,
    pub task: Task,
    pub variant: Variant,
    pub balancing: Balancing,
    pub rounds: usize,
    pub seed: u64,
    /// Base seed of the data split when it should differ from `seed`.
    #[serde(default)]
    pub split_seed: Option<u64>,
    pub train: TrainConfig,
}

impl RunSpec {
    /// Tuned structure and schedule for the case, five rounds.
    pub fn new(case: Case, task: Task, variant: Variant, balancing: Balancing) -> Result<Self, HarnessError> {
        let s = case_settings(case, task)?;
        let (epochs, batch_size) = case_schedule(case);
        let dynamics = match variant {
            Variant::Baseline => DynamicsConfig::Baseline,
            Variant::PinnVerhulst => DynamicsConfig::verhulst(),
            Variant::PinnDeephpm => DynamicsConfig::deephpm(s.hpm_inputs, s.hidden_layers, s.neurons),
        };
        let spec = RunSpec {
            case,
            task,
            variant,
            balancing,
            rounds: 5,
            seed: 0,
            split_seed: None,
            train: TrainConfig {
                epochs,
                batch_size,
                balancing,
                dynamics,
                surrogate: SurrogateConfig { hidden_layers: s.hidden_layers, neurons: s.neurons, ..Default::default() },
                ..Default::default()
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rounds == 0 {
            return Err(HarnessError::Usage("rounds must be at least 1".into()));
        }
        if self.task == Task::Rul && matches!(self.train.dynamics, DynamicsConfig::Verhulst { .. }) {
            return Err(HarnessError::Usage("the Verhulst law describes capacity loss, not RUL".into()));
        }
        let expected = match self.variant {
            Variant::Baseline => "baseline",
            Variant::PinnVerhulst => "verhulst",
            Variant::PinnDeephpm => "deephpm",
        };
        if self.train.dynamics.name() != expected {
            return Err(HarnessError::Usage(format!(
                "variant {} does not match dynamics `{}`",
                self.variant,
                self.train.dynamics.name()
            )));
        }
        if self.train.balancing != self.balancing {
            return Err(HarnessError::Usage("balancing differs from the training config".into()));
        }
        Ok(())
    }

    /// Training seed of a round; rounds never share one.
    pub fn round_seed(&self, round: usize) -> u64 {
        self.seed.wrapping_add(round as u64)
    }

    /// Cases A and B fix their cells and validation rows across rounds; the
    /// random test cells of case C are redrawn every round.
    pub fn split_seed(&self, round: usize) -> u64 {
        let base = self.split_seed.unwrap_or(self.seed);
        match self.case {
            Case::A | Case::B => base,
            Case::C => base.wrapping_add(round as u64),
        }
    }

    /// Headline metric: RMSPE (%) of SoH for SoH, RMSE in cycles for RUL.
    pub fn headline(&self, m: &Metrics) -> Option<f64> {
        match self.task {
            Task::Soh => m.rmspe,
            Task::Rul => Some(m.rmse),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: usize,
    pub seed: u64,
    pub test: Metrics,
    pub validation: Option<Metrics>,
    pub seconds: f64,
    pub best_epoch: usize,
    pub loss_weights: LossWeights,
    pub test_cells: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: RunSpec,
    pub rounds: Vec<RoundResult>,
    pub mean: Metrics,
    pub mean_validation: Option<Metrics>,
    /// Published value of the headline metric for this case and variant.
    pub reference: Option<f64>,
}

impl ExperimentReport {
    pub fn headline(&self) -> Option<f64> {
        self.spec.headline(&self.mean)
    }
}

/// A trained model with the task and case it was trained for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub case: Case,
    pub task: Task,
    pub model: TrainedModel,
}

fn samples(rows: &[FeatureRow], task: Task) -> Vec<Sample> {
    rows.iter().filter_map(|r| r.sample(task)).collect()
}

/// Metrics of `model` on labelled `rows`; SoH tasks are scored as `1 - u`.
pub fn evaluate(model: &TrainedModel, rows: &[FeatureRow], task: Task) -> Result<Metrics, HarnessError> {
    let mut preds = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for r in rows {
        let Some(y) = r.label(task) else { continue };
        let p = model.predict(&r.x, r.t())?;
        match task {
            Task::Soh => {
                preds.push(1.0 - p);
                labels.push(1.0 - y);
            }
            Task::Rul => {
                preds.push(p);
                labels.push(y);
            }
        }
    }
    Metrics::compute(&preds, &labels)
}

/// Trains and scores one round. Standardization factors come from the
/// training rows only.
pub fn run_round(
    spec: &RunSpec,
    cells: &[CellFeatures],
    round: usize,
) -> Result<(RoundResult, TrainedModel), HarnessError> {
    spec.validate()?;
    let splits = make_splits(spec.case, cells, spec.task, spec.split_seed(round))?;
    let train_s = samples(&splits.train, spec.task);
    let val_s = samples(&splits.validation, spec.task);
    let factors = StandardizationFactors::fit(&train_s)?;
    let cfg = TrainConfig { seed: spec.round_seed(round), ..spec.train.clone() };

    let start = Instant::now();
    let model = train(&factors.apply_all(&train_s), &factors.apply_all(&val_s), &factors, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();

    let test = evaluate(&model, &splits.test, spec.task)?;
    let validation =
        if splits.validation.is_empty() { None } else { Some(evaluate(&model, &splits.validation, spec.task)?) };
    log::info!(
        "case {} {} {} round {round}: test {:?} in {seconds:.1}s",
        spec.case,
        spec.task,
        spec.variant,
        spec.headline(&test)
    );
    let result = RoundResult {
        round,
        seed: cfg.seed,
        test,
        validation,
        seconds,
        best_epoch: model.best_epoch,
        loss_weights: model.loss_weights,
        test_cells: splits.test_cells,
    };
    Ok((result, model))
}

/// All rounds, in parallel, averaged.
pub fn run_case(spec: &RunSpec, cells: &[CellFeatures]) -> Result<ExperimentReport, HarnessError> {
    spec.validate()?;
    let rounds: Vec<RoundResult> = (0..spec.rounds)
        .into_par_iter()
        .map(|i| run_round(spec, cells, i).map(|(r, _)| r))
        .collect::<Result<_, _>>()?;
    let tests: Vec<Metrics> = rounds.iter().map(|r| r.test).collect();
    let vals: Option<Vec<Metrics>> = rounds.iter().map(|r| r.validation).collect();
    Ok(ExperimentReport {
        spec: spec.clone(),
        mean: Metrics::mean(&tests).expect("at least one round"),
        mean_validation: vals.and_then(|v| Metrics::mean(&v)),
        reference: reference_value(spec.case, spec.task, spec.variant, spec.balancing),
        rounds,
    })
}

/// Feature rows per cell from a raw dataset directory (featurized on load),
/// a directory holding `features.csv`, or a feature CSV file.
pub fn load_cells(path: &Path) -> Result<Vec<CellFeatures>, HarnessError> {
    if path.join("manifest.json").is_file() {
        let (manifest, cells) = read_dataset(path)?;
        let cfg = FeatureConfig { nominal_capacity_ah: manifest.nominal_capacity_ah, ..Default::default() };
        return Ok(featurize(&cells, &cfg)?);
    }
    let csv = if path.is_dir() { path.join("features.csv") } else { path.to_path_buf() };
    if !csv.is_file() {
        return Err(HarnessError::MissingDataset(path.to_path_buf()));
    }
    Ok(group_rows(read_feature_csv(&csv)?))
}
