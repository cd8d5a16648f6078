//! Fixed-length normalized windows for the CNN regressors.
//!
//! A run of length `L` yields `L - n` windows: window `k` (for
//! `k = n..L`) holds samples `k-n..k` and predicts the train speed at `k`.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{RunRole, TrainRun};

/// Highest wheel/GPS reading in the reference data, m/s.
pub const SPEED_DIVISOR: f64 = 31.3877;

/// Channels per timestep: window-relative time, wheel speed, GPS speed.
pub const CHANNELS: usize = 3;

pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub speed_divisor: f64,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig { speed_divisor: SPEED_DIVISOR }
    }
}

impl NormalizationConfig {
    pub fn new(speed_divisor: f64) -> Result<Self> {
        if !(speed_divisor > 0.0 && speed_divisor.is_finite()) {
            return Err(Error::Config(format!("speed divisor must be positive, got {speed_divisor}")));
        }
        Ok(NormalizationConfig { speed_divisor })
    }

    pub fn normalize(&self, speed: f64) -> f64 {
        speed / self.speed_divisor
    }

    pub fn denormalize(&self, value: f64) -> f64 {
        value * self.speed_divisor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Row-major `(n, CHANNELS)` matrix.
    pub inputs: Vec<f64>,
    pub n: usize,
    pub target: f64,
    pub source_run: String,
    pub t_target: f64,
    pub role: RunRole,
}

impl WindowSample {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * CHANNELS..(i + 1) * CHANNELS]
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub split_seed: u64,
}

impl DatasetSplit {
    pub fn history_len(&self) -> Option<usize> {
        self.train.first().or(self.validation.first()).map(|w| w.n)
    }
}

/// Total windows produced by `num_runs` runs spanning `total_timestamps`
/// samples at history length `n`.
pub fn count_windows(total_timestamps: usize, num_runs: usize, n: usize) -> Result<usize> {
    match total_timestamps.checked_sub(num_runs * n) {
        Some(c) if c > 0 => Ok(c),
        _ => Err(Error::Validation(format!(
            "{num_runs} runs totalling {total_timestamps} samples are too short for history length {n}"
        ))),
    }
}

/// Builds windows for every run. All failing runs are listed in one error.
pub fn make_windows(runs: &[TrainRun], n: usize, norm: &NormalizationConfig) -> Result<Vec<WindowSample>> {
    if n == 0 {
        return Err(Error::Config("history length must be at least 1".into()));
    }
    let mut problems = Vec::new();
    for run in runs {
        if run.len() < n + 1 {
            problems.push(format!("{} (length {} < {})", run.run_id, run.len(), n + 1));
        } else if !run.has_ground_truth() {
            problems.push(format!("{} (missing ground truth)", run.run_id));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(format!(
            "cannot window runs at history length {n}: {}",
            problems.join(", ")
        )));
    }

    let mut out = Vec::with_capacity(runs.iter().map(|r| r.len() - n).sum());
    for run in runs {
        for k in n..run.len() {
            out.push(window_at(run, k, n, norm));
        }
    }
    Ok(out)
}

/// Inputs for the window ending just before sample `k`.
pub fn window_inputs(run: &TrainRun, k: usize, n: usize, norm: &NormalizationConfig) -> Vec<f64> {
    let rows = &run.samples[k - n..k];
    let t0 = rows[0].t;
    let span = rows[n - 1].t - t0;
    let mut inputs = Vec::with_capacity(n * CHANNELS);
    for s in rows {
        let time = if span > 0.0 { (s.t - t0) / span } else { 0.0 };
        inputs.extend_from_slice(&[time, norm.normalize(s.wheel_speed), norm.normalize(s.gps_speed)]);
    }
    inputs
}

fn window_at(run: &TrainRun, k: usize, n: usize, norm: &NormalizationConfig) -> WindowSample {
    let truth = run.samples[k].train_speed.expect("checked ground truth");
    WindowSample {
        inputs: window_inputs(run, k, n, norm),
        n,
        target: norm.normalize(truth),
        source_run: run.run_id.clone(),
        t_target: run.samples[k].t,
        role: run.role,
    }
}

/// Shuffled train/validation split. Windows from test runs bypass the
/// shuffle and land in `test`. `|train| = floor(ratio * N)` over the
/// non-test windows.
pub fn split(windows: Vec<WindowSample>, ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    if windows.is_empty() {
        return Err(Error::Validation("cannot split an empty window list".into()));
    }
    let (test, mut pool): (Vec<_>, Vec<_>) = windows.into_iter().partition(|w| w.role == RunRole::Test);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let n_train = (ratio * pool.len() as f64 + 1e-9).floor() as usize;
    let validation = pool.split_off(n_train);
    Ok(DatasetSplit { train: pool, validation, test, split_seed: seed })
}

const CACHE_MAGIC: &[u8; 4] = b"TSWC";
const CACHE_VERSION: u32 = 1;

/// Writes windows to a versioned little-endian binary cache.
pub fn save_window_cache(windows: &[WindowSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(windows.len() as u64).to_le_bytes());
    for w in windows {
        buf.extend_from_slice(&(w.n as u64).to_le_bytes());
        buf.extend_from_slice(&(w.source_run.len() as u64).to_le_bytes());
        buf.extend_from_slice(w.source_run.as_bytes());
        buf.push(match w.role {
            RunRole::Train => 0,
            RunRole::Validation => 1,
            RunRole::Test => 2,
        });
        buf.extend_from_slice(&w.t_target.to_le_bytes());
        buf.extend_from_slice(&w.target.to_le_bytes());
        for v in &w.inputs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_window_cache(path: impl AsRef<Path>) -> Result<Vec<WindowSample>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != CACHE_MAGIC {
        return Err(Error::Validation("not a window cache file".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::Validation(format!("unsupported window cache version {version}")));
    }
    let count = cur.u64()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let n = cur.u64()? as usize;
        let id_len = cur.u64()? as usize;
        let source_run = String::from_utf8(cur.take(id_len)?.to_vec())
            .map_err(|_| Error::Validation("run id is not UTF-8".into()))?;
        let role = match cur.take(1)?[0] {
            0 => RunRole::Train,
            1 => RunRole::Validation,
            2 => RunRole::Test,
            other => return Err(Error::Validation(format!("bad role tag {other}"))),
        };
        let t_target = cur.f64()?;
        let target = cur.f64()?;
        let inputs = (0..n * CHANNELS).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        out.push(WindowSample { inputs, n, target, source_run, t_target, role });
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Validation("truncated window cache".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::SensorSample;

    fn run(id: &str, len: usize, speed: f64) -> TrainRun {
        TrainRun {
            run_id: id.into(),
            samples: (0..len)
                .map(|i| SensorSample {
                    t: i as f64,
                    wheel_speed: speed,
                    gps_speed: speed,
                    train_speed: Some(speed),
                })
                .collect(),
            has_wsp: false,
            role: RunRole::Train,
        }
    }

    #[test]
    fn published_window_counts() {
        assert_eq!(count_windows(5205, 15, 10).unwrap(), 5055);
        assert_eq!(count_windows(5205, 15, 20).unwrap(), 4905);
        assert_eq!(count_windows(5205, 15, 30).unwrap(), 4755);
        assert!(count_windows(100, 10, 10).is_err());
    }

    #[test]
    fn length_twelve_gives_two_windows() {
        let w = make_windows(&[run("a", 12, 5.0)], 10, &NormalizationConfig::default()).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].t_target, 10.0);
        assert_eq!(w[1].t_target, 11.0);
        assert_eq!(w[0].row(0)[0], 0.0);
        assert_eq!(w[0].row(9)[0], 1.0);
    }

    #[test]
    fn peak_speed_normalizes_to_one() {
        let w = make_windows(&[run("a", 15, SPEED_DIVISOR)], 10, &NormalizationConfig::default()).unwrap();
        for win in &w {
            assert_eq!(win.target, 1.0);
            for i in 0..win.n {
                assert_eq!(win.row(i)[1], 1.0);
                assert_eq!(win.row(i)[2], 1.0);
            }
        }
    }

    #[test]
    fn short_runs_listed_in_error() {
        let err = make_windows(
            &[run("ok", 20, 1.0), run("short1", 10, 1.0), run("short2", 3, 1.0)],
            10,
            &NormalizationConfig::default(),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("short1") && err.contains("short2") && !err.contains("ok ("), "{err}");
    }

    #[test]
    fn missing_truth_rejected() {
        let mut r = run("a", 20, 1.0);
        r.samples[3].train_speed = None;
        assert!(make_windows(&[r], 5, &NormalizationConfig::default()).is_err());
    }

    #[test]
    fn hundred_windows_split() {
        let w = make_windows(&[run("a", 110, 1.0)], 10, &NormalizationConfig::default()).unwrap();
        let s = split(w.clone(), 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (80, 20));
        let again = split(w, 0.8, 1).unwrap();
        assert_eq!(s.train, again.train);
        assert!(split(vec![], 0.8, 1).is_err());
    }

    #[test]
    fn floor_split_count() {
        let w = make_windows(&[run("a", 5065, 1.0)], 10, &NormalizationConfig::default()).unwrap();
        assert_eq!(w.len(), 5055);
        let s = split(w, 0.8, 3).unwrap();
        // floor(0.8 * 5055) = 4044
        assert_eq!(s.train.len(), 4044);
        assert_eq!(s.validation.len(), 1011);
    }

    #[test]
    fn test_windows_bypass_shuffle() {
        let mut t = run("t", 30, 2.0);
        t.role = RunRole::Test;
        let w = make_windows(&[run("a", 30, 1.0), t], 10, &NormalizationConfig::default()).unwrap();
        let s = split(w, 0.8, 9).unwrap();
        assert_eq!(s.test.len(), 20);
        assert!(s.test.iter().all(|w| w.source_run == "t"));
        assert!(s.train.iter().chain(&s.validation).all(|w| w.source_run == "a"));
        assert_eq!(s.test[0].t_target, 10.0);
    }

    #[test]
    fn cache_round_trip() {
        let w = make_windows(&[run("a", 30, 3.3)], 10, &NormalizationConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        save_window_cache(&w, &p).unwrap();
        assert_eq!(load_window_cache(&p).unwrap(), w);
    }
}
