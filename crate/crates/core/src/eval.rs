//! RMSE metrics, estimator comparison and static report artifacts.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::TrainRun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Akf,
    Single2d,
    Single1d,
    Multibranch,
    WheelBaseline,
    GpsBaseline,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Akf,
        Estimator::Single2d,
        Estimator::Single1d,
        Estimator::Multibranch,
        Estimator::WheelBaseline,
        Estimator::GpsBaseline,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Akf => "akf",
            Estimator::Single2d => "single2d",
            Estimator::Single1d => "single1d",
            Estimator::Multibranch => "multibranch",
            Estimator::WheelBaseline => "wheel-baseline",
            Estimator::GpsBaseline => "gps-baseline",
        }
    }

    fn color(self) -> &'static str {
        match self {
            Estimator::Akf => "#d62728",
            Estimator::Single2d => "#9467bd",
            Estimator::Single1d => "#8c564b",
            Estimator::Multibranch => "#e377c2",
            Estimator::WheelBaseline => "#1f77b4",
            Estimator::GpsBaseline => "#2ca02c",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimateTrace {
    pub run_id: String,
    pub estimator: Estimator,
    pub entries: Vec<TraceEntry>,
}

impl SpeedEstimateTrace {
    /// Raw sensor channel used directly as the speed estimate.
    pub fn wheel_baseline(run: &TrainRun) -> Self {
        Self::from_channel(run, Estimator::WheelBaseline, |s| s.wheel_speed)
    }

    pub fn gps_baseline(run: &TrainRun) -> Self {
        Self::from_channel(run, Estimator::GpsBaseline, |s| s.gps_speed)
    }

    fn from_channel(run: &TrainRun, estimator: Estimator, f: impl Fn(&crate::signals::SensorSample) -> f64) -> Self {
        SpeedEstimateTrace {
            run_id: run.run_id.clone(),
            estimator,
            entries: run.samples.iter().map(|s| TraceEntry { t: s.t, estimate: f(s) }).collect(),
        }
    }
}

/// Index of the truth sample matching `t`, if any.
fn truth_index(truth: &TrainRun, t: f64) -> Option<usize> {
    let pos = truth.samples.partition_point(|s| s.t < t - 1e-9);
    (pos < truth.samples.len() && (truth.samples[pos].t - t).abs() <= 1e-9).then_some(pos)
}

/// `(truth index, estimate)` pairs where both truth and a finite estimate exist.
fn aligned(trace: &SpeedEstimateTrace, truth: &TrainRun) -> Vec<(usize, f64)> {
    trace
        .entries
        .iter()
        .filter(|e| e.estimate.is_finite())
        .filter_map(|e| {
            let i = truth_index(truth, e.t)?;
            truth.samples[i].train_speed.map(|_| (i, e.estimate))
        })
        .collect()
}

fn rmse_of(errors: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = errors.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Root mean square error over timestamps present in both trace and truth.
pub fn rmse(trace: &SpeedEstimateTrace, truth: &TrainRun) -> Result<f64> {
    let pairs = aligned(trace, truth);
    rmse_of(pairs.iter().map(|&(i, est)| est - truth.samples[i].train_speed.unwrap())).ok_or_else(|| {
        Error::Validation(format!(
            "{} trace has no timestamps in common with run {}",
            trace.estimator, truth.run_id
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    pub estimator: Estimator,
    /// Over the timestamps shared by every compared trace.
    pub rmse: f64,
    pub max_abs_error: f64,
    /// Over every timestamp this trace shares with the truth.
    pub full_overlap_rmse: f64,
    /// `(t, estimate - truth)` on the shared timestamps.
    pub error_trace: Vec<(f64, f64)>,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub has_wsp: bool,
    pub common_timestamps: usize,
    pub estimators: Vec<EstimatorMetrics>,
}

/// Metrics for every trace over their common timestamp set, sorted by RMSE.
pub fn compare(traces: &[SpeedEstimateTrace], truth: &TrainRun) -> Result<EvalReport> {
    if traces.is_empty() {
        return Err(Error::Validation("no traces to compare".into()));
    }
    let aligned_all: Vec<Vec<(usize, f64)>> = traces.iter().map(|t| aligned(t, truth)).collect();
    let mut common: BTreeSet<usize> = aligned_all[0].iter().map(|p| p.0).collect();
    for a in &aligned_all[1..] {
        let idx: BTreeSet<usize> = a.iter().map(|p| p.0).collect();
        common = common.intersection(&idx).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::Validation(format!("traces share no timestamps on run {}", truth.run_id)));
    }

    let mut estimators = Vec::with_capacity(traces.len());
    for (trace, pairs) in traces.iter().zip(&aligned_all) {
        let truth_of = |i: usize| truth.samples[i].train_speed.unwrap();
        let error_trace: Vec<(f64, f64)> = pairs
            .iter()
            .filter(|(i, _)| common.contains(i))
            .map(|&(i, est)| (truth.samples[i].t, est - truth_of(i)))
            .collect();
        let rmse = rmse_of(error_trace.iter().map(|e| e.1)).unwrap();
        let max_abs_error = error_trace.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        let full_overlap_rmse = rmse_of(pairs.iter().map(|&(i, est)| est - truth_of(i))).unwrap();
        estimators.push(EstimatorMetrics {
            estimator: trace.estimator,
            rmse,
            max_abs_error,
            full_overlap_rmse,
            error_trace,
            trace: trace.entries.clone(),
        });
    }
    estimators.sort_by(|a, b| a.rmse.total_cmp(&b.rmse));
    Ok(EvalReport {
        run_id: truth.run_id.clone(),
        has_wsp: truth.has_wsp,
        common_timestamps: common.len(),
        estimators,
    })
}

pub const REPORT_CSV_HEADER: &str = "run_id,estimator,rmse_mps,max_abs_error_mps";

pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    out.push_str(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for e in &r.estimators {
            let _ = writeln!(out, "{},{},{},{}", r.run_id, e.estimator, e.rmse, e.max_abs_error);
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `speeds_<run>.svg`, `errors_<run>.svg`, `report_<run>.csv` and
/// `report_<run>.json` into `out_dir`, returning their paths.
pub fn render_plots(report: &EvalReport, truth: &TrainRun, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    if report.estimators.is_empty() {
        return Err(Error::Validation("report has no estimators".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let run = &report.run_id;

    let mut speed_series = vec![
        Series::new("truth", "#000000", truth.samples.iter().filter_map(|s| s.train_speed.map(|v| (s.t, v)))),
        Series::new("wheel", "#1f77b4", truth.samples.iter().map(|s| (s.t, s.wheel_speed))),
        Series::new("gps", "#2ca02c", truth.samples.iter().map(|s| (s.t, s.gps_speed))),
    ];
    let mut error_series = Vec::new();
    for e in &report.estimators {
        if matches!(e.estimator, Estimator::WheelBaseline | Estimator::GpsBaseline) {
            // already drawn as raw channels
        } else {
            speed_series.push(Series::new(e.estimator.label(), e.estimator.color(), e.trace.iter().map(|p| (p.t, p.estimate))));
        }
        error_series.push(Series::new(e.estimator.label(), e.estimator.color(), e.error_trace.iter().copied()));
    }

    let speeds = line_chart(&format!("Train speed: {run}"), "speed (m/s)", &speed_series);
    let errors = line_chart(&format!("Estimation error: {run}"), "error (m/s)", &error_series);

    let paths = [
        out_dir.join(format!("speeds_{run}.svg")),
        out_dir.join(format!("errors_{run}.svg")),
        out_dir.join(format!("report_{run}.csv")),
        out_dir.join(format!("report_{run}.json")),
    ];
    write_file(&paths[0], &speeds)?;
    write_file(&paths[1], &errors)?;
    write_file(&paths[2], &report_csv(std::slice::from_ref(report)))?;
    write_file(&paths[3], &serde_json::to_string_pretty(report)?)?;
    Ok(paths.to_vec())
}

pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: &str, color: &str, points: impl Iterator<Item = (f64, f64)>) -> Self {
        Series {
            name: name.to_string(),
            color: color.to_string(),
            points: points.filter(|(x, y)| x.is_finite() && y.is_finite()).collect(),
        }
    }
}

const WIDTH: f64 = 1200.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 35.0;
const BOTTOM: f64 = 50.0;

/// Round tick step covering `span` in roughly `target` intervals.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Static SVG line chart, one polyline per series. Series with fewer than
/// two points are skipped with a warning.
pub fn line_chart(title: &str, y_label: &str, series: &[Series]) -> String {
    let drawn: Vec<&Series> = series
        .iter()
        .filter(|s| {
            if s.points.len() < 2 {
                log::warn!("omitting series {:?} from {title:?}: fewer than 2 points", s.name);
                false
            } else {
                true
            }
        })
        .collect();

    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in &drawn {
        for &(x, y) in &s.points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let ystep = nice_step(y1 - y0, 6.0);
    let y0 = (y0 / ystep).floor() * ystep;
    let y1 = (y1 / ystep).ceil() * ystep;
    let xstep = nice_step(x1 - x0, 10.0);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(title));

    // grid and ticks
    let mut y = y0;
    while y <= y1 + ystep * 1e-9 {
        let py = sy(y);
        let _ = writeln!(svg, r##"<line x1="{LEFT:.1}" y1="{py:.2}" x2="{:.1}" y2="{py:.2}" stroke="#e0e0e0"/>"##, LEFT + pw);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, py + 4.0, tick_label(y, ystep));
        y += ystep;
    }
    let mut x = (x0 / xstep).ceil() * xstep;
    while x <= x1 + xstep * 1e-9 {
        let px = sx(x);
        let _ = writeln!(svg, r##"<line x1="{px:.2}" y1="{TOP:.1}" x2="{px:.2}" y2="{:.1}" stroke="#f0f0f0"/>"##, TOP + ph);
        let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick_label(x, xstep));
        x += xstep;
    }
    let _ = writeln!(svg, r#"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time (s)</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for s in &drawn {
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            s.color,
            pts.join(" "),
            escape(&s.name)
        );
    }

    // legend
    let lx = LEFT + pw + 15.0;
    for (i, s) in drawn.iter().enumerate() {
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="3"/>"#, lx + 25.0, s.color);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 32.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize };
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
