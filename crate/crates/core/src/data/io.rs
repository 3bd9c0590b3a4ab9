//! On-disk layouts.
//!
//! Dataset directory:
//!
//! ```text
//! manifest.json                        {"nominal_capacity_ah": 1.1, "cells": [{"id": "91", "batch": "3"}, ..]}
//! cells/<id>/summary.csv               cycle,discharge_capacity_ah,charge_time_min,internal_resistance_ohm,avg_temperature_c
//! cells/<id>/discharge/cycle_<k>.csv   voltage_v,capacity_ah
//! ```
//!
//! Feature table: `cell_id,batch,cycle,<FEATURE_NAMES..>,pcl,rul` with an
//! empty `rul` for cells that never reach end of life.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CellCycleRecord, CellRecords, DataError, DischargeCurve, FeatureRow, FEATURE_NAMES, NOMINAL_CAPACITY_AH};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub id: String,
    pub batch: String,
    /// Where the cell came from, e.g. the source directory name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub nominal_capacity_ah: f64,
    pub cells: Vec<ManifestCell>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    cycle: u32,
    discharge_capacity_ah: f64,
    charge_time_min: f64,
    internal_resistance_ohm: f64,
    avg_temperature_c: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    voltage_v: f64,
    capacity_ah: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv { path: path.to_path_buf(), source }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DataError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    rdr.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn cell_dir(root: &Path, id: &str) -> PathBuf {
    root.join("cells").join(id)
}

pub fn write_dataset(root: &Path, manifest: &DatasetManifest, cells: &[CellRecords]) -> Result<(), DataError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let mpath = root.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|source| DataError::Json { path: mpath.clone(), source })?;
    fs::write(&mpath, text).map_err(io_err(&mpath))?;
    for cell in cells {
        let dir = cell_dir(root, &cell.id);
        let ddir = dir.join("discharge");
        fs::create_dir_all(&ddir).map_err(io_err(&ddir))?;
        write_rows(
            &dir.join("summary.csv"),
            cell.records.iter().map(|r| SummaryRow {
                cycle: r.cycle,
                discharge_capacity_ah: r.discharge_capacity_ah,
                charge_time_min: r.charge_time_min,
                internal_resistance_ohm: r.internal_resistance_ohm,
                avg_temperature_c: r.avg_temperature_c,
            }),
        )?;
        for r in &cell.records {
            write_rows(
                &ddir.join(format!("cycle_{}.csv", r.cycle)),
                r.curve.voltage.iter().zip(&r.curve.capacity).map(|(&v, &q)| CurveRow { voltage_v: v, capacity_ah: q }),
            )?;
        }
    }
    Ok(())
}

/// Reads a dataset directory. A cycle whose discharge file is absent gets an
/// empty curve and is later dropped by feature extraction.
pub fn read_dataset(root: &Path) -> Result<(DatasetManifest, Vec<CellRecords>), DataError> {
    let mpath = root.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| DataError::Json { path: mpath.clone(), source })?;
    let mut cells = Vec::with_capacity(manifest.cells.len());
    for mc in &manifest.cells {
        let dir = cell_dir(root, &mc.id);
        let summary: Vec<SummaryRow> = read_rows(&dir.join("summary.csv"))?;
        let mut records = Vec::with_capacity(summary.len());
        for s in summary {
            let cpath = dir.join("discharge").join(format!("cycle_{}.csv", s.cycle));
            let curve = if cpath.exists() {
                let rows: Vec<CurveRow> = read_rows(&cpath)?;
                DischargeCurve {
                    voltage: rows.iter().map(|r| r.voltage_v).collect(),
                    capacity: rows.iter().map(|r| r.capacity_ah).collect(),
                }
            } else {
                DischargeCurve::default()
            };
            records.push(CellCycleRecord {
                cycle: s.cycle,
                curve,
                charge_time_min: s.charge_time_min,
                internal_resistance_ohm: s.internal_resistance_ohm,
                avg_temperature_c: s.avg_temperature_c,
                discharge_capacity_ah: s.discharge_capacity_ah,
            });
        }
        cells.push(CellRecords { id: mc.id.clone(), batch: mc.batch.clone(), records });
    }
    Ok((manifest, cells))
}

const KEY_COLUMNS: [&str; 5] = ["cell_id", "batch", "cycle", "pcl", "rul"];

/// Feature rows as CSV. The eight health features get their names; any
/// other width is written as `x0, x1, ..`.
pub fn write_feature_csv(path: &Path, rows: &[FeatureRow]) -> Result<(), DataError> {
    let width = rows.first().map_or(FEATURE_NAMES.len(), |r| r.x.len());
    if let Some(i) = rows.iter().position(|r| r.x.len() != width) {
        return Err(DataError::Schema {
            path: path.to_path_buf(),
            message: format!("row {i} has {} features, expected {width}", rows[i].x.len()),
        });
    }
    let names: Vec<String> = if width == FEATURE_NAMES.len() {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..width).map(|j| format!("x{j}")).collect()
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["cell_id", "batch", "cycle"];
    header.extend(names.iter().map(String::as_str));
    header.extend(["pcl", "rul"]);
    w.write_record(&header).map_err(csv_err(path))?;
    for r in rows {
        let mut rec = vec![r.cell_id.clone(), r.batch.clone(), r.cycle.to_string()];
        rec.extend(r.x.iter().map(|v| v.to_string()));
        rec.push(r.pcl.to_string());
        rec.push(r.rul.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads rows written by [`write_feature_csv`]; every non-key column is a
/// feature, in file order.
pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>, DataError> {
    let schema = |message: String| DataError::Schema { path: path.to_path_buf(), message };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| schema(format!("missing column `{name}`")));
    let (ci, bi, ki, pi, ri) = (col("cell_id")?, col("batch")?, col("cycle")?, col("pcl")?, col("rul")?);
    let xi: Vec<usize> = (0..header.len()).filter(|&i| !KEY_COLUMNS.contains(&&header[i])).collect();
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let num = |i: usize| -> Result<f64, DataError> {
            rec[i].parse().map_err(|_| schema(format!("row {}: `{}` is not a number", line + 2, &rec[i])))
        };
        out.push(FeatureRow {
            cell_id: rec[ci].to_string(),
            batch: rec[bi].to_string(),
            cycle: rec[ki].parse().map_err(|_| schema(format!("row {}: bad cycle `{}`", line + 2, &rec[ki])))?,
            x: xi.iter().map(|&i| num(i)).collect::<Result<_, _>>()?,
            pcl: num(pi)?,
            rul: if rec[ri].is_empty() { None } else { Some(num(ri)?) },
        });
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct ExportSummary {
    cycle: u32,
    #[serde(rename = "QDischarge")]
    q_discharge: f64,
    chargetime: f64,
    #[serde(rename = "IR")]
    ir: f64,
    #[serde(rename = "Tavg")]
    tavg: f64,
}

#[derive(Debug, Deserialize)]
struct ExportCycle {
    cycle: u32,
    #[serde(rename = "V")]
    v: f64,
    #[serde(rename = "Qd")]
    qd: f64,
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

/// Converts a flat CSV export of the public fast-charging dataset.
///
/// Expected layout, one directory per batch in chronological order and one
/// per cell inside it:
///
/// ```text
/// <src>/<batch>/<cell>/summary.csv   cycle,QDischarge,chargetime,IR,Tavg
/// <src>/<batch>/<cell>/cycles.csv    cycle,V,Qd
/// ```
///
/// Field names follow the `summary` and `cycles` structs of the published
/// MATLAB files. Batches are labelled 1, 2, .. and cells numbered 1..N in
/// sorted order. Cycle 0 and summaries with capacity outside
/// (0, 1.5 Q_nom] are skipped.
pub fn ingest_flat_export(src: &Path) -> Result<(DatasetManifest, Vec<CellRecords>), DataError> {
    let mut manifest = DatasetManifest { nominal_capacity_ah: NOMINAL_CAPACITY_AH, cells: Vec::new() };
    let mut cells = Vec::new();
    let mut next_id = 1;
    for (b, bdir) in sorted_dirs(src)?.into_iter().enumerate() {
        for cdir in sorted_dirs(&bdir)? {
            let summary: Vec<ExportSummary> = read_rows(&cdir.join("summary.csv"))?;
            let points: Vec<ExportCycle> = read_rows(&cdir.join("cycles.csv"))?;
            let mut curves: BTreeMap<u32, DischargeCurve> = BTreeMap::new();
            for p in points {
                let c = curves.entry(p.cycle).or_default();
                c.voltage.push(p.v);
                c.capacity.push(p.qd);
            }
            let mut records = Vec::new();
            for s in summary {
                let q = s.q_discharge;
                if s.cycle == 0 || !(q > 0.0 && q <= 1.5 * NOMINAL_CAPACITY_AH) {
                    log::debug!("{}: skipping cycle {} (capacity {q})", cdir.display(), s.cycle);
                    continue;
                }
                records.push(CellCycleRecord {
                    cycle: s.cycle,
                    curve: curves.remove(&s.cycle).unwrap_or_default(),
                    charge_time_min: s.chargetime,
                    internal_resistance_ohm: s.ir,
                    avg_temperature_c: s.tavg,
                    discharge_capacity_ah: q,
                });
            }
            records.sort_by_key(|r| r.cycle);
            records.dedup_by_key(|r| r.cycle);
            let id = next_id.to_string();
            next_id += 1;
            let batch = (b + 1).to_string();
            let source = cdir.strip_prefix(src).ok().map(|p| p.display().to_string());
            manifest.cells.push(ManifestCell { id: id.clone(), batch: batch.clone(), source });
            cells.push(CellRecords { id, batch, records });
        }
    }
    Ok((manifest, cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cell(id: &str) -> CellRecords {
        let records = (1..=3)
            .map(|k| CellCycleRecord {
                cycle: k,
                curve: DischargeCurve { voltage: vec![3.3, 3.0, 2.7], capacity: vec![0.0, 0.5, 1.0 + 0.1 / k as f64] },
                charge_time_min: 9.5 + k as f64,
                internal_resistance_ohm: 0.0165,
                avg_temperature_c: 31.25,
                discharge_capacity_ah: 1.07 - 0.001 * k as f64,
            })
            .collect();
        CellRecords { id: id.into(), batch: "2".into(), records }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cells = vec![tiny_cell("4"), tiny_cell("17")];
        let manifest = DatasetManifest {
            nominal_capacity_ah: 1.1,
            cells: cells.iter().map(|c| ManifestCell { id: c.id.clone(), batch: c.batch.clone(), source: None }).collect(),
        };
        write_dataset(dir.path(), &manifest, &cells).unwrap();
        let (m2, c2) = read_dataset(dir.path()).unwrap();
        assert_eq!(m2, manifest);
        assert_eq!(c2, cells);
    }

    #[test]
    fn feature_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let rows = vec![
            FeatureRow { cell_id: "1".into(), batch: "1".into(), cycle: 5, x: (0..8).map(|i| i as f64 * 0.1 + 1e-17).collect(), pcl: 0.0123456789, rul: Some(42.0) },
            FeatureRow { cell_id: "2".into(), batch: "1".into(), cycle: 6, x: vec![-3.5e-7; 8], pcl: 0.1, rul: None },
        ];
        write_feature_csv(&path, &rows).unwrap();
        assert_eq!(read_feature_csv(&path).unwrap(), rows);
    }

    #[test]
    fn feature_csv_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "cell_id,batch,cycle,pcl\n1,1,1,0.1\n").unwrap();
        assert!(matches!(read_feature_csv(&path), Err(DataError::Schema { .. })));
    }

    #[test]
    fn ingest_flat_export_layout() {
        let dir = tempfile::tempdir().unwrap();
        for (batch, cell) in [("2017-05-12", "b1c0"), ("2017-05-12", "b1c1"), ("2017-06-30", "b2c0")] {
            let cdir = dir.path().join(batch).join(cell);
            fs::create_dir_all(&cdir).unwrap();
            fs::write(
                cdir.join("summary.csv"),
                "cycle,QDischarge,chargetime,IR,Tavg\n0,0,0,0,0\n1,1.07,10.1,0.0167,31.2\n2,1.069,10.0,0.0166,31.3\n3,2.5,10.0,0.0166,31.3\n",
            )
            .unwrap();
            fs::write(cdir.join("cycles.csv"), "cycle,V,Qd\n1,3.3,0.0\n1,3.0,0.5\n1,2.7,1.0\n2,3.3,0.0\n2,2.8,0.9\n").unwrap();
        }
        let (manifest, cells) = ingest_flat_export(dir.path()).unwrap();
        assert_eq!(manifest.cells.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["1", "2", "3"]);
        assert_eq!(manifest.cells.iter().map(|c| c.batch.as_str()).collect::<Vec<_>>(), ["1", "1", "2"]);
        let c = &cells[2];
        assert_eq!(c.records.len(), 2);
        assert_eq!(c.records[0].curve.voltage, vec![3.3, 3.0, 2.7]);
        assert_eq!(c.records[1].curve.capacity, vec![0.0, 0.9]);
        assert_eq!(c.records[1].internal_resistance_ohm, 0.0166);
    }
}
