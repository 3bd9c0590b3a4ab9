use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use pinn_battery::data::{featurize, ingest_flat_export, read_dataset, write_dataset, write_feature_csv, Case, FeatureConfig, Task};
use pinn_battery::harness::{
    evaluate, load_cells, parse_train_file, read_text, reference_inputs_argmin, reference_seconds,
    reference_structure_argmin, run_case, sweep, train_to_dir, write_text, RunCheckpoint, RunSpec, SweepAxis,
    SweepGrid, Variant,
};
use pinn_battery::pinn::{Balancing, TrainConfig};
use pinn_battery::synth::{generate_dataset, generate_raw, RawConfig, SynthConfig};

#[derive(Parser)]
#[command(name = "pinn-battery", version, about = "Battery SoH/RUL prognostics with physics-informed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a flat CSV export of the public cycling dataset.
    Ingest { src: PathBuf, out: PathBuf },
    /// Generate a synthetic dataset from a TOML config.
    Simulate { config: PathBuf, out: PathBuf },
    /// Extract health features from a raw dataset directory into a CSV.
    Features { data: PathBuf, out: PathBuf },
    /// Train one model from a TOML config and write a run directory.
    Train { config: PathBuf },
    /// Score a checkpoint on a dataset.
    Eval {
        checkpoint: PathBuf,
        data: PathBuf,
        /// Restrict to these cells (comma separated).
        #[arg(long, value_delimiter = ',')]
        cells: Vec<String>,
        /// Write per-row predictions here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a case several rounds and average the test metrics.
    RunCase {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        case: Case,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        variant: Variant,
        #[arg(long, default_value = "adpbal")]
        balancing: Balancing,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validation sweep over network structure or DeepHPM inputs.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        case: Case,
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        layers: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        neurons: Vec<usize>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Overrides {
    /// TOML training config replacing the tuned defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

impl Overrides {
    fn apply(&self, spec: &mut RunSpec) -> Result<()> {
        if let Some(path) = &self.config {
            let text = read_text(path)?;
            let cfg: TrainConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            spec.train = TrainConfig { balancing: spec.balancing, ..cfg };
        }
        if let Some(e) = self.epochs {
            spec.train.epochs = e;
        }
        if let Some(b) = self.batch_size {
            spec.train.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            spec.train.learning_rate = lr;
        }
        spec.validate()?;
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(default)]
struct SimulateFile {
    /// Write raw discharge curves instead of feature rows.
    raw: bool,
    synth: SynthConfig,
    points: usize,
    summary_noise: f64,
}

impl Default for SimulateFile {
    fn default() -> Self {
        let r = RawConfig::default();
        SimulateFile { raw: false, synth: r.synth, points: r.points, summary_noise: r.summary_noise }
    }
}

fn simulate(config: &Path, out: &Path) -> Result<()> {
    let text = read_text(config)?;
    let file: SimulateFile = toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    if file.raw {
        let cfg = RawConfig { synth: file.synth, points: file.points, summary_noise: file.summary_noise, ..Default::default() };
        let (manifest, cells) = generate_raw(&cfg)?;
        write_dataset(out, &manifest, &cells)?;
        println!("wrote {} raw cells to {}", cells.len(), out.display());
    } else {
        let ds = generate_dataset(&file.synth)?;
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_feature_csv(&out.join("features.csv"), &ds.rows())?;
        let mut truth = String::from("cell_id,cycle,u\n");
        for (cell, tr) in ds.cells.iter().zip(&ds.truth) {
            for (t, u) in tr.times.iter().zip(&tr.values) {
                truth.push_str(&format!("{},{},{}\n", cell.id, t, u));
            }
        }
        write_text(&out.join("truth.csv"), &truth)?;
        println!("wrote {} rows from {} cells to {}", ds.rows().len(), ds.cells.len(), out.display());
    }
    Ok(())
}

fn eval(checkpoint: &Path, data: &Path, only: &[String], out: Option<&Path>) -> Result<()> {
    let ckpt: RunCheckpoint = serde_json::from_str(&read_text(checkpoint)?)
        .with_context(|| format!("parsing checkpoint {}", checkpoint.display()))?;
    let cells = load_cells(data)?;
    let rows: Vec<_> = cells
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
        .flat_map(|c| c.rows.iter().cloned())
        .collect();
    if rows.is_empty() {
        bail!("no rows to evaluate");
    }
    let metrics = evaluate(&ckpt.model, &rows, ckpt.task)?;
    if let Some(path) = out {
        let mut s = String::from("cell_id,cycle,label,prediction\n");
        for r in &rows {
            let Some(y) = r.label(ckpt.task) else { continue };
            s.push_str(&format!("{},{},{},{}\n", r.cell_id, r.cycle, y, ckpt.model.predict(&r.x, r.t())?));
        }
        write_text(path, &s)?;
    }
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.4}"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest { src, out } => {
            let (manifest, cells) = ingest_flat_export(&src)?;
            write_dataset(&out, &manifest, &cells)?;
            println!("ingested {} cells into {}", cells.len(), out.display());
        }
        Command::Simulate { config, out } => simulate(&config, &out)?,
        Command::Features { data, out } => {
            let (manifest, cells) = read_dataset(&data)?;
            let cfg = FeatureConfig { nominal_capacity_ah: manifest.nominal_capacity_ah, ..Default::default() };
            let feats = featurize(&cells, &cfg)?;
            let rows: Vec<_> = feats.into_iter().flat_map(|c| c.rows).collect();
            write_feature_csv(&out, &rows)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Train { config } => {
            let base = config.parent().unwrap_or(Path::new("."));
            let file = parse_train_file(&read_text(&config)?, base)?;
            let result = train_to_dir(&file)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Eval { checkpoint, data, cells, out } => eval(&checkpoint, &data, &cells, out.as_deref())?,
        Command::RunCase { data, case, task, variant, balancing, rounds, seed, overrides, out } => {
            let mut spec = RunSpec::new(case, task, variant, balancing)?;
            spec.rounds = rounds;
            spec.seed = seed;
            overrides.apply(&mut spec)?;
            let cells = load_cells(&data)?;
            let report = run_case(&spec, &cells)?;
            let secs: f64 = report.rounds.iter().map(|r| r.seconds).sum::<f64>() / report.rounds.len() as f64;
            println!(
                "case {case} {task} {variant} ({balancing}): {} over {rounds} rounds, reference {}",
                fmt_opt(report.headline()),
                fmt_opt(report.reference)
            );
            if case == Case::B {
                println!("mean training time {secs:.1}s per round (reference {:.1}s)", reference_seconds(variant));
            }
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
                let mut s = String::from("round,seed,test_rmse,test_rmspe,validation_rmse,validation_rmspe,seconds,best_epoch\n");
                for r in &report.rounds {
                    let v = r.validation;
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        r.round,
                        r.seed,
                        r.test.rmse,
                        r.test.rmspe.map_or(String::new(), |x| x.to_string()),
                        v.map_or(String::new(), |m| m.rmse.to_string()),
                        v.and_then(|m| m.rmspe).map_or(String::new(), |x| x.to_string()),
                        r.seconds,
                        r.best_epoch
                    ));
                }
                write_text(&dir.join("rounds.csv"), &s)?;
            }
        }
        Command::Sweep { axis, data, case, task, rounds, seed, layers, neurons, overrides, out } => {
            let variant = match axis {
                SweepAxis::Structure => Variant::Baseline,
                SweepAxis::HpmInputs => Variant::PinnDeephpm,
            };
            let mut spec = RunSpec::new(case, task, variant, Balancing::Sum)?;
            spec.rounds = rounds;
            spec.seed = seed;
            overrides.apply(&mut spec)?;
            let mut grid = SweepGrid::default();
            if !layers.is_empty() {
                grid.layers = layers;
            }
            if !neurons.is_empty() {
                grid.neurons = neurons;
            }
            let cells = load_cells(&data)?;
            let table = sweep(axis, &spec, &grid, &cells)?;
            let csv = table.to_csv();
            print!("{csv}");
            let best = table.best();
            match axis {
                SweepAxis::Structure => {
                    println!("argmin: {} layers x {} neurons ({:.4})", best.layers, best.neurons, best.metric);
                    if let Some((l, n, v)) = reference_structure_argmin(case, task) {
                        println!("reference: {l} layers x {n} neurons ({v})");
                    }
                }
                SweepAxis::HpmInputs => {
                    let name = best.inputs.as_ref().map(|i| i.to_string()).unwrap_or_default();
                    println!("argmin: {{{name}}} ({:.4})", best.metric);
                    if let Some((i, v)) = reference_inputs_argmin(case, task) {
                        println!("reference: {{{i}}} ({v})");
                    }
                }
            }
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_text(&dir.join("sweep.csv"), &csv)?;
                write_text(&dir.join("sweep.json"), &serde_json::to_string_pretty(&table)?)?;
            }
        }
    }
    Ok(())
}
