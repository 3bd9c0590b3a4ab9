use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CellFeatures, DataError, FeatureRow, Task};

/// Train/test arrangements of the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Cells 91 and 100 for training, 124 for test.
    A,
    /// Cells 101, 108 and 120 for training, 116 for test.
    B,
    /// Batch 2, a random fifth of its cells held out for test.
    C,
}

impl Case {
    pub const C_BATCH: &'static str = "2";
    pub const C_TEST_FRACTION: f64 = 0.2;

    pub fn train_cells(self) -> &'static [&'static str] {
        match self {
            Case::A => &["91", "100"],
            Case::B => &["101", "108", "120"],
            Case::C => &[],
        }
    }

    pub fn test_cells(self) -> &'static [&'static str] {
        match self {
            Case::A => &["124"],
            Case::B => &["116"],
            Case::C => &[],
        }
    }

    /// Share of the training-validation rows held out for validation.
    pub fn validation_fraction(self) -> f64 {
        match self {
            Case::A | Case::B => 0.20,
            Case::C => 0.25,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::A => "A",
            Case::B => "B",
            Case::C => "C",
        })
    }
}

impl FromStr for Case {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Case::A),
            "B" => Ok(Case::B),
            "C" => Ok(Case::C),
            other => Err(format!("unknown case `{other}` (expected A, B or C)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<FeatureRow>,
    pub validation: Vec<FeatureRow>,
    pub test: Vec<FeatureRow>,
    pub test_cells: Vec<String>,
}

fn labelled(cell: &CellFeatures, task: Task) -> impl Iterator<Item = &FeatureRow> {
    cell.rows.iter().filter(move |r| r.label(task).is_some())
}

/// Deterministic split for `case` given `seed`.
///
/// For RUL, cells that never reach end of life are unusable: a named cell
/// without end of life is an error, and such Case C cells are skipped.
pub fn make_splits(case: Case, cells: &[CellFeatures], task: Task, seed: u64) -> Result<Splits, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let find = |id: &str| cells.iter().find(|c| c.id == id);

    let (train_cells, test_cells): (Vec<&CellFeatures>, Vec<&CellFeatures>) = match case {
        Case::A | Case::B => {
            let missing: Vec<String> = case
                .train_cells()
                .iter()
                .chain(case.test_cells())
                .filter(|id| find(id).is_none())
                .map(|id| format!("#{id}"))
                .collect();
            if !missing.is_empty() {
                return Err(DataError::MissingCells(missing));
            }
            let pick = |ids: &[&str]| -> Vec<&CellFeatures> { ids.iter().filter_map(|id| find(id)).collect() };
            let (tr, te) = (pick(case.train_cells()), pick(case.test_cells()));
            if task == Task::Rul {
                if let Some(c) = tr.iter().chain(&te).find(|c| c.eol.is_none()) {
                    return Err(DataError::NoEol(c.id.clone()));
                }
            }
            (tr, te)
        }
        Case::C => {
            let mut pool: Vec<&CellFeatures> = cells
                .iter()
                .filter(|c| c.batch == Case::C_BATCH && (task == Task::Soh || c.eol.is_some()))
                .collect();
            if pool.len() < 2 {
                return Err(DataError::MissingCells(vec![format!(
                    "at least two usable cells of batch {}",
                    Case::C_BATCH
                )]));
            }
            pool.shuffle(&mut rng);
            let n_test = ((Case::C_TEST_FRACTION * pool.len() as f64).round() as usize).clamp(1, pool.len() - 1);
            let test = pool.split_off(pool.len() - n_test);
            (pool, test)
        }
    };

    let pooled: Vec<FeatureRow> = train_cells.iter().flat_map(|c| labelled(c, task)).cloned().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (case.validation_fraction() * pooled.len() as f64).round() as usize;
    let mut is_val = vec![false; pooled.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (row, v) in pooled.into_iter().zip(is_val) {
        if v {
            validation.push(row);
        } else {
            train.push(row);
        }
    }
    let test = test_cells.iter().flat_map(|c| labelled(c, task)).cloned().collect();
    let test_cells = test_cells.iter().map(|c| c.id.clone()).collect();
    Ok(Splits { train, validation, test, test_cells })
}
