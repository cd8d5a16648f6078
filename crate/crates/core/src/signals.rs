//! Time-series types shared by every stage of the pipeline, plus CSV
//! ingestion and export.
//!
//! The canonical interchange format is a UTF-8 CSV with header
//! `run_id,t,wheel_speed,gps_speed,train_speed`. Ground truth may be empty.
//! Per-run metadata (WSP flag and dataset role) does not fit the five
//! columns, so it travels in a JSON sidecar next to the CSV
//! (`runs.csv` -> `runs.meta.json`). A CSV without a sidecar loads with
//! every run marked as training data without WSP.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["run_id", "t", "wheel_speed", "gps_speed", "train_speed"];

/// Nominal sample spacing in seconds.
pub const NOMINAL_DT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub t: f64,
    pub wheel_speed: f64,
    pub gps_speed: f64,
    /// Ground truth. `None` for inference-only data, never a placeholder 0.0.
    pub train_speed: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunRole {
    #[default]
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub run_id: String,
    pub samples: Vec<SensorSample>,
    pub has_wsp: bool,
    pub role: RunRole,
}

impl TrainRun {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.samples.iter().all(|s| s.train_speed.is_some())
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    /// Ground truth at `t`, if the run has a sample at that timestamp.
    pub fn truth_at(&self, t: f64) -> Option<f64> {
        let idx = self
            .samples
            .binary_search_by(|s| s.t.total_cmp(&t))
            .ok()
            .or_else(|| {
                // tolerate representation noise in externally produced timestamps
                let pos = self.samples.partition_point(|s| s.t < t);
                [pos.checked_sub(1), Some(pos)]
                    .into_iter()
                    .flatten()
                    .find(|&i| i < self.samples.len() && (self.samples[i].t - t).abs() <= 1e-9)
            })?;
        self.samples[idx].train_speed
    }

    /// Checks the run invariants: non-empty, finite non-negative speeds,
    /// strictly increasing time.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Validation(format!("run {} has no samples", self.run_id)));
        }
        let mut prev: Option<f64> = None;
        for (i, s) in self.samples.iter().enumerate() {
            check_sample(s).map_err(|m| {
                Error::Validation(format!("run {} sample {i}: {m}", self.run_id))
            })?;
            if let Some(p) = prev {
                if s.t <= p {
                    return Err(Error::Validation(format!(
                        "run {} sample {i}: time {} not after {}",
                        self.run_id, s.t, p
                    )));
                }
            }
            prev = Some(s.t);
        }
        Ok(())
    }
}

fn check_sample(s: &SensorSample) -> std::result::Result<(), String> {
    if !s.t.is_finite() || s.t < 0.0 {
        return Err(format!("time {} must be finite and non-negative", s.t));
    }
    let speeds = [
        ("wheel_speed", Some(s.wheel_speed)),
        ("gps_speed", Some(s.gps_speed)),
        ("train_speed", s.train_speed),
    ];
    for (name, v) in speeds {
        if let Some(v) = v {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} {v} must be finite and non-negative"));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunMeta {
    run_id: String,
    has_wsp: bool,
    role: RunRole,
}

/// Sidecar path holding run metadata for a CSV file.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Loads runs from the CSV format. Runs appear in order of first occurrence;
/// rows of different runs may interleave, but each run's own rows must be
/// strictly increasing in time.
pub fn load_runs(path: impl AsRef<Path>) -> Result<Vec<TrainRun>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut runs = read_runs(file)?;

    let meta = meta_path(path);
    if meta.exists() {
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let metas: Vec<RunMeta> = serde_json::from_str(&text)?;
        let by_id: HashMap<&str, &RunMeta> =
            metas.iter().map(|m| (m.run_id.as_str(), m)).collect();
        for run in &mut runs {
            if let Some(m) = by_id.get(run.run_id.as_str()) {
                run.has_wsp = m.has_wsp;
                run.role = m.role;
            }
        }
    }
    Ok(runs)
}

/// Parses the CSV body from any reader. Metadata defaults apply.
pub fn read_runs<R: std::io::Read>(reader: R) -> Result<Vec<TrainRun>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut records = rdr.records();
    match records.next() {
        None => return Err(Error::Parse { line: 1, message: "missing header row".into() }),
        Some(header) => {
            let header = header?;
            let cols: Vec<&str> = header.iter().map(str::trim).collect();
            if cols != CSV_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {:?}, found {:?}", CSV_HEADER.join(","), cols.join(",")),
                });
            }
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Vec<SensorSample>, u64)> = HashMap::new();
    for record in records {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let num = |idx: usize| -> Result<f64> {
            let raw = record[idx].trim();
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column {} is not a number: {raw:?}", CSV_HEADER[idx]),
            })
        };
        let truth_raw = record[4].trim();
        let sample = SensorSample {
            t: num(1)?,
            wheel_speed: num(2)?,
            gps_speed: num(3)?,
            train_speed: if truth_raw.is_empty() { None } else { Some(num(4)?) },
        };
        check_sample(&sample)
            .map_err(|m| Error::Validation(format!("line {line}: {m}")))?;

        let id = record[0].trim().to_string();
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (Vec::new(), line)
        });
        if let Some(prev) = entry.0.last() {
            if sample.t <= prev.t {
                return Err(Error::Validation(format!(
                    "line {line}: time {} in run {id} is not after previous time {} (line {})",
                    sample.t, prev.t, entry.1
                )));
            }
        }
        entry.0.push(sample);
        entry.1 = line;
    }

    let runs: Vec<TrainRun> = order
        .into_iter()
        .map(|id| {
            let (samples, _) = groups.remove(&id).expect("grouped run");
            TrainRun { run_id: id, samples, has_wsp: false, role: RunRole::Train }
        })
        .collect();
    for run in &runs {
        warn_on_jitter(run);
    }
    Ok(runs)
}

fn warn_on_jitter(run: &TrainRun) {
    let worst = run
        .samples
        .windows(2)
        .map(|w| ((w[1].t - w[0].t) - NOMINAL_DT).abs() / NOMINAL_DT)
        .fold(0.0_f64, f64::max);
    if worst > 0.10 {
        log::warn!(
            "run {}: sample spacing deviates from {NOMINAL_DT} s by up to {:.0}%",
            run.run_id,
            worst * 100.0
        );
    }
}

/// Writes runs in the CSV format plus the metadata sidecar.
pub fn save_runs(runs: &[TrainRun], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for run in runs {
        run.validate()?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_runs(runs, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))?;

    let metas: Vec<RunMeta> = runs
        .iter()
        .map(|r| RunMeta { run_id: r.run_id.clone(), has_wsp: r.has_wsp, role: r.role })
        .collect();
    let meta = meta_path(path);
    let text = serde_json::to_string_pretty(&metas)?;
    std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
    Ok(())
}

/// Writes the CSV body. `f64` Display is the shortest representation that
/// parses back to the same bits, so the output round-trips exactly.
pub fn write_runs<W: Write>(runs: &[TrainRun], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for run in runs {
        for s in &run.samples {
            write!(out, "{},{},{},{},", run.run_id, s.t, s.wheel_speed, s.gps_speed)?;
            if let Some(v) = s.train_speed {
                write!(out, "{v}")?;
            }
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
