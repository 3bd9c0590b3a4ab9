use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_cells, run_round, HarnessError, RoundResult, RunCheckpoint, RunSpec, Variant};
use crate::data::{Case, Task};
use crate::pinn::{DynamicsConfig, EpochRecord, TrainConfig};

/// Configuration of a single `train` run. Relative paths resolve against
/// the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainFile {
    pub data: PathBuf,
    pub out: PathBuf,
    pub case: Case,
    pub task: Task,
    /// Split seed; the training seed is `train.seed`.
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Per-epoch losses with the log-weights `lambda'`.
pub fn write_losses_csv(path: &Path, history: &[EpochRecord]) -> Result<(), HarnessError> {
    let mut s = String::from("epoch,L_u,L_f,L_ft,lambda_prime_u,lambda_prime_f,lambda_prime_ft,total\n");
    for r in history {
        let l = r.lambda;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.l_u, r.l_f, r.l_ft, l.lambda_u, l.lambda_f, l.lambda_ft, r.total
        ));
    }
    write_text(path, &s)
}

fn variant_of(dynamics: &DynamicsConfig) -> Variant {
    match dynamics {
        DynamicsConfig::Baseline => Variant::Baseline,
        DynamicsConfig::Verhulst { .. } => Variant::PinnVerhulst,
        DynamicsConfig::Deephpm { .. } => Variant::PinnDeephpm,
    }
}

/// Parses a `TrainFile` and resolves its paths against `base`.
pub fn parse_train_file(text: &str, base: &Path) -> Result<TrainFile, HarnessError> {
    let mut file: TrainFile =
        toml::from_str(text).map_err(|e| HarnessError::Usage(format!("invalid train config: {e}")))?;
    file.data = base.join(&file.data);
    file.out = base.join(&file.out);
    Ok(file)
}

/// Trains once and writes `config.toml`, `losses.csv`, `checkpoint.json`
/// and `metrics.json` into `file.out`.
pub fn train_to_dir(file: &TrainFile) -> Result<RoundResult, HarnessError> {
    let cells = load_cells(&file.data)?;
    let spec = RunSpec {
        case: file.case,
        task: file.task,
        variant: variant_of(&file.train.dynamics),
        balancing: file.train.balancing,
        rounds: 1,
        seed: file.train.seed,
        split_seed: Some(file.split_seed),
        train: file.train.clone(),
    };
    let (result, model) = run_round(&spec, &cells, 0)?;

    fs::create_dir_all(&file.out).map_err(io_err(&file.out))?;
    let config = toml::to_string(file).map_err(|e| HarnessError::Usage(format!("config snapshot: {e}")))?;
    write_text(&file.out.join("config.toml"), &config)?;
    write_losses_csv(&file.out.join("losses.csv"), &model.history)?;
    let ckpt = RunCheckpoint { case: file.case, task: file.task, model };
    write_text(&file.out.join("checkpoint.json"), &serde_json::to_string(&ckpt)?)?;
    write_text(&file.out.join("metrics.json"), &serde_json::to_string_pretty(&result)?)?;
    Ok(result)
}
