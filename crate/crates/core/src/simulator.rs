//! Synthetic train runs: piecewise speed profiles with wheel-slide
//! oscillation, GPS bias/noise and odometer scale faults.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::SPEED_DIVISOR;
use crate::error::{Error, Result};
use crate::signals::{RunRole, SensorSample, TrainRun};

/// Speed decay applied during a coast phase, m/s².
pub const COAST_DECEL: f64 = 0.02;

/// Default GPS bias preset, m/s.
pub const GPS_BIAS_PRESET: f64 = 1.0;

/// Noise draws are truncated at this many standard deviations.
pub const NOISE_TRUNCATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKind {
    Accelerate,
    Constant,
    Coast,
    Brake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub duration: f64,
    /// End speed for accelerate and brake phases; ignored otherwise.
    #[serde(default)]
    pub target_speed: f64,
}

impl Phase {
    pub fn accelerate(duration: f64, target_speed: f64) -> Self {
        Phase { kind: PhaseKind::Accelerate, duration, target_speed }
    }
    pub fn constant(duration: f64) -> Self {
        Phase { kind: PhaseKind::Constant, duration, target_speed: 0.0 }
    }
    pub fn coast(duration: f64) -> Self {
        Phase { kind: PhaseKind::Coast, duration, target_speed: 0.0 }
    }
    pub fn brake(duration: f64, target_speed: f64) -> Self {
        Phase { kind: PhaseKind::Brake, duration, target_speed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdometerError {
    pub start_t: f64,
    pub factor: f64,
}

/// Wheel slide protection window. Inside `[start_t, end_t)` the wheel speed
/// follows periodic raised-cosine dips down to `1 - max_slip_fraction` of
/// the train speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WspSpec {
    pub start_t: f64,
    pub end_t: f64,
    #[serde(default = "default_slip")]
    pub max_slip_fraction: f64,
    #[serde(default = "default_cycle")]
    pub cycle_period: f64,
}

fn default_slip() -> f64 {
    0.5
}
fn default_cycle() -> f64 {
    3.0
}
fn default_dt() -> f64 {
    1.0
}
fn default_run_id() -> String {
    "sim".into()
}

impl WspSpec {
    /// Multiplicative slip factor at time `t`; 1 outside the window.
    pub fn slip(&self, t: f64) -> f64 {
        if t < self.start_t || t >= self.end_t {
            return 1.0;
        }
        let phase = ((t - self.start_t) / self.cycle_period).fract();
        let dip = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * phase).cos());
        1.0 - self.max_slip_fraction * dip
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_t && t < self.end_t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default)]
    pub role: RunRole,
    pub phases: Vec<Phase>,
    #[serde(default)]
    pub gps_noise_sigma: f64,
    #[serde(default)]
    pub gps_bias: f64,
    #[serde(default)]
    pub wheel_noise_sigma: f64,
    #[serde(default)]
    pub odometer_error: Option<OdometerError>,
    #[serde(default)]
    pub wsp: Option<WspSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl ScenarioSpec {
    pub fn new(run_id: impl Into<String>, phases: Vec<Phase>) -> Self {
        ScenarioSpec {
            run_id: run_id.into(),
            role: RunRole::Train,
            phases,
            gps_noise_sigma: 0.0,
            gps_bias: 0.0,
            wheel_noise_sigma: 0.0,
            odometer_error: None,
            wsp: None,
            seed: 0,
            dt: 1.0,
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    /// Steepest speed change rate implied by any phase, m/s².
    pub fn max_rate(&self) -> f64 {
        let mut v = 0.0;
        let mut rate = COAST_DECEL;
        for p in &self.phases {
            let end = self.phase_end_speed(p, v);
            rate = f64::max(rate, (end - v).abs() / p.duration);
            v = end;
        }
        rate
    }

    fn phase_end_speed(&self, p: &Phase, v0: f64) -> f64 {
        match p.kind {
            PhaseKind::Accelerate | PhaseKind::Brake => p.target_speed,
            PhaseKind::Constant => v0,
            PhaseKind::Coast => (v0 - COAST_DECEL * p.duration).max(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Validation("scenario has no phases".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.duration > 0.0 && p.duration.is_finite()) {
                return Err(Error::Validation(format!("phase {i} duration must be positive")));
            }
            if !(p.target_speed >= 0.0 && p.target_speed.is_finite()) {
                return Err(Error::Validation(format!("phase {i} target speed must be non-negative")));
            }
        }
        for (name, s) in [
            ("gps_noise_sigma", self.gps_noise_sigma),
            ("wheel_noise_sigma", self.wheel_noise_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Validation(format!("{name} must be non-negative")));
            }
        }
        if !self.gps_bias.is_finite() {
            return Err(Error::Validation("gps_bias must be finite".into()));
        }
        if let Some(odo) = &self.odometer_error {
            if !(odo.factor > 0.0 && odo.factor.is_finite()) {
                return Err(Error::Validation("odometer factor must be positive".into()));
            }
        }
        if let Some(wsp) = &self.wsp {
            if !(wsp.start_t < wsp.end_t) {
                return Err(Error::Validation("wsp start_t must precede end_t".into()));
            }
            if !(wsp.max_slip_fraction > 0.0 && wsp.max_slip_fraction < 1.0) {
                return Err(Error::Validation("wsp max_slip_fraction must lie in (0, 1)".into()));
            }
            if !(wsp.cycle_period > 0.0) {
                return Err(Error::Validation("wsp cycle_period must be positive".into()));
            }
            let end = self.total_duration();
            let final_speed = self.speed_at(end);
            if wsp.end_t > end && final_speed != 0.0 {
                return Err(Error::Validation(format!(
                    "wsp window ends at {} after the profile ends at {end} s with nonzero speed {final_speed}",
                    wsp.end_t
                )));
            }
        }
        Ok(())
    }

    /// Ground-truth speed at time `t` (clamped to the profile span).
    pub fn speed_at(&self, t: f64) -> f64 {
        let mut v0 = 0.0;
        let mut start = 0.0;
        for p in &self.phases {
            let end = start + p.duration;
            if t < end {
                let tau = (t - start).max(0.0);
                return match p.kind {
                    PhaseKind::Accelerate | PhaseKind::Brake => {
                        v0 + (p.target_speed - v0) * tau / p.duration
                    }
                    PhaseKind::Constant => v0,
                    PhaseKind::Coast => (v0 - COAST_DECEL * tau).max(0.0),
                };
            }
            v0 = self.phase_end_speed(p, v0);
            start = end;
        }
        v0
    }

    pub fn sample_count(&self) -> usize {
        (self.total_duration() / self.dt + 1e-9).floor() as usize + 1
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= NOISE_TRUNCATION {
            return sigma * z;
        }
    }
}

/// Generates one run from a scenario. Deterministic in `spec.seed`.
pub fn simulate(spec: &ScenarioSpec) -> Result<TrainRun> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples = (0..spec.sample_count())
        .map(|i| {
            let t = i as f64 * spec.dt;
            let truth = spec.speed_at(t);
            let slip = spec.wsp.as_ref().map_or(1.0, |w| w.slip(t));
            let odo = match &spec.odometer_error {
                Some(o) if t >= o.start_t => o.factor,
                _ => 1.0,
            };
            let wheel_noise = truncated_normal(&mut rng, spec.wheel_noise_sigma);
            let gps_noise = truncated_normal(&mut rng, spec.gps_noise_sigma);
            SensorSample {
                t,
                wheel_speed: (truth * slip * odo + wheel_noise).max(0.0),
                gps_speed: (truth + spec.gps_bias + gps_noise).max(0.0),
                train_speed: Some(truth),
            }
        })
        .collect();
    let run = TrainRun {
        run_id: spec.run_id.clone(),
        samples,
        has_wsp: spec.wsp.is_some(),
        role: spec.role,
    };
    run.validate()?;
    Ok(run)
}

/// Number of runs in the benchmark suite without and with WSP.
pub const SUITE_RUNS_WITHOUT_WSP: usize = 13;
pub const SUITE_RUNS_WITH_WSP: usize = 4;
/// Samples across the training/validation runs and the test runs.
pub const SUITE_TRAINVAL_SAMPLES: usize = 5205;
pub const SUITE_TEST_SAMPLES: usize = 947;

struct RunShape {
    id: &'static str,
    len: usize,
    vmax: f64,
    wsp: bool,
    odometer: bool,
    gps_bias: bool,
    role: RunRole,
}

const fn shape(id: &'static str, len: usize, vmax: f64, wsp: bool, odometer: bool, gps_bias: bool) -> RunShape {
    RunShape { id, len, vmax, wsp, odometer, gps_bias, role: RunRole::Train }
}

const SUITE: [RunShape; 17] = [
    shape("run01", 420, 12.0, false, false, false),
    shape("run02", 380, 18.0, false, true, true),
    shape("run03", 360, 25.0, false, false, false),
    shape("run04", 400, 30.0, false, false, false),
    shape("run05", 340, 15.0, false, false, true),
    shape("run06", 310, 10.0, false, true, false),
    shape("run07", 390, 28.0, false, false, true),
    shape("run08", 330, 20.0, false, false, false),
    shape("run09", 370, 22.0, false, false, false),
    shape("run10", 300, 9.0, false, true, false),
    shape("run11", 350, 26.0, false, false, false),
    shape("run12", 325, 17.0, false, false, false),
    shape("run13", 300, 13.0, true, false, false),
    shape("run14", 320, 16.0, true, false, false),
    shape("run15", 310, 11.0, true, false, false),
    RunShape { id: "test_nowsp", len: 520, vmax: 31.0, wsp: false, odometer: false, gps_bias: false, role: RunRole::Test },
    RunShape { id: "test_wsp", len: 427, vmax: 13.5, wsp: true, odometer: false, gps_bias: false, role: RunRole::Test },
];

fn suite_spec(s: &RunShape, seed: u64) -> ScenarioSpec {
    let total = (s.len - 1) as f64;
    let accel = (s.vmax / 0.55).round();
    let brake = if s.wsp { (s.vmax / 0.35).round() } else { (s.vmax / 0.75).round() };
    let coast = (0.15 * total).round();
    let standstill = 15.0;
    let cruise = total - accel - coast - brake - standstill;
    assert!(cruise > 0.0, "suite run {} too short for its profile", s.id);

    let brake_start = accel + cruise + coast;
    let mut spec = ScenarioSpec::new(
        s.id,
        vec![
            Phase::accelerate(accel, s.vmax),
            Phase::constant(cruise),
            Phase::coast(coast),
            Phase::brake(brake, 0.0),
            Phase::constant(standstill),
        ],
    );
    spec.role = s.role;
    spec.seed = seed;
    spec.gps_noise_sigma = 0.25;
    spec.wheel_noise_sigma = 0.1;
    if s.gps_bias {
        spec.gps_bias = GPS_BIAS_PRESET;
    }
    if s.odometer {
        spec.odometer_error = Some(OdometerError { start_t: brake_start, factor: 1.2 });
    }
    if s.wsp {
        spec.wsp = Some(WspSpec {
            start_t: brake_start + 5.0,
            end_t: brake_start + brake - 3.0,
            max_slip_fraction: default_slip(),
            cycle_period: default_cycle(),
        });
    }
    spec
}

/// Scenario specs used by [`make_benchmark_suite`], before peak scaling.
pub fn benchmark_specs(seed: u64) -> Vec<ScenarioSpec> {
    let mut root = ChaCha8Rng::seed_from_u64(seed);
    SUITE.iter().map(|s| suite_spec(s, root.random())).collect()
}

/// The 17-run benchmark suite: 13 runs without WSP, 4 with, two of them
/// (one per WSP condition) flagged as test runs. Speeds are rescaled so the
/// largest wheel/GPS reading in the suite equals [`SPEED_DIVISOR`] exactly.
pub fn make_benchmark_suite(seed: u64) -> Vec<TrainRun> {
    let mut runs: Vec<TrainRun> = benchmark_specs(seed)
        .iter()
        .map(|spec| simulate(spec).expect("suite specs are valid"))
        .collect();

    let peak = runs
        .iter()
        .flat_map(|r| r.samples.iter())
        .map(|s| s.wheel_speed.max(s.gps_speed))
        .fold(0.0_f64, f64::max);
    let scale = SPEED_DIVISOR / peak;
    let mut argmax = (0, 0, false);
    let mut best = f64::NEG_INFINITY;
    for (ri, run) in runs.iter_mut().enumerate() {
        for (si, s) in run.samples.iter_mut().enumerate() {
            s.wheel_speed = (s.wheel_speed * scale).min(SPEED_DIVISOR);
            s.gps_speed = (s.gps_speed * scale).min(SPEED_DIVISOR);
            s.train_speed = s.train_speed.map(|v| v * scale);
            if s.wheel_speed > best {
                best = s.wheel_speed;
                argmax = (ri, si, true);
            }
            if s.gps_speed > best {
                best = s.gps_speed;
                argmax = (ri, si, false);
            }
        }
    }
    let s = &mut runs[argmax.0].samples[argmax.1];
    if argmax.2 {
        s.wheel_speed = SPEED_DIVISOR;
    } else {
        s.gps_speed = SPEED_DIVISOR;
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cruise(v: f64, secs: f64) -> Vec<Phase> {
        vec![Phase::accelerate(10.0, v), Phase::constant(secs)]
    }

    #[test]
    fn fault_free_identity() {
        let spec = ScenarioSpec::new("a", vec![
            Phase::accelerate(20.0, 15.0),
            Phase::constant(30.0),
            Phase::coast(20.0),
            Phase::brake(25.0, 0.0),
        ]);
        let run = simulate(&spec).unwrap();
        for s in &run.samples {
            assert_eq!(s.wheel_speed, s.train_speed.unwrap());
            assert_eq!(s.gps_speed, s.train_speed.unwrap());
        }
    }

    #[test]
    fn odometer_error_scales_wheel() {
        let mut spec = ScenarioSpec::new("a", cruise(10.0, 40.0));
        spec.odometer_error = Some(OdometerError { start_t: 20.0, factor: 1.2 });
        let run = simulate(&spec).unwrap();
        for s in run.samples.iter().filter(|s| s.t >= 20.0) {
            assert!((s.wheel_speed - 12.0).abs() < 1e-12, "{}", s.wheel_speed);
        }
        for s in run.samples.iter().filter(|s| s.t >= 10.0 && s.t < 20.0) {
            assert_eq!(s.wheel_speed, 10.0);
        }
    }

    #[test]
    fn wsp_dips_within_bound() {
        let mut spec = ScenarioSpec::new("a", cruise(13.5, 40.0));
        spec.wsp = Some(WspSpec { start_t: 15.0, end_t: 45.0, max_slip_fraction: 0.5, cycle_period: 3.0 });
        let run = simulate(&spec).unwrap();
        let min = run
            .samples
            .iter()
            .filter(|s| s.t >= 15.0 && s.t < 45.0)
            .map(|s| s.wheel_speed)
            .fold(f64::INFINITY, f64::min);
        assert!((6.75..=13.5).contains(&min) && min < 13.5, "min {min}");
    }

    #[test]
    fn deterministic_given_seed() {
        let mut spec = ScenarioSpec::new("a", cruise(20.0, 100.0));
        spec.gps_noise_sigma = 0.3;
        spec.wheel_noise_sigma = 0.2;
        spec.seed = 99;
        assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
        let mut other = spec.clone();
        other.seed = 100;
        assert_ne!(simulate(&spec).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn rejects_empty_and_dangling_wsp() {
        assert!(simulate(&ScenarioSpec::new("a", vec![])).is_err());
        let mut spec = ScenarioSpec::new("a", cruise(10.0, 10.0));
        spec.wsp = Some(WspSpec { start_t: 5.0, end_t: 50.0, max_slip_fraction: 0.5, cycle_period: 3.0 });
        assert!(matches!(simulate(&spec), Err(Error::Validation(_))));
        let mut spec = ScenarioSpec::new("a", vec![Phase::constant(0.0)]);
        spec.seed = 1;
        assert!(simulate(&spec).is_err());
    }

    #[test]
    fn suite_composition() {
        let runs = make_benchmark_suite(42);
        assert_eq!(runs.len(), 17);
        assert_eq!(runs.iter().filter(|r| r.has_wsp).count(), SUITE_RUNS_WITH_WSP);
        assert_eq!(runs.iter().filter(|r| !r.has_wsp).count(), SUITE_RUNS_WITHOUT_WSP);
        let test: Vec<_> = runs.iter().filter(|r| r.role == RunRole::Test).collect();
        assert_eq!(test.len(), 2);
        assert_eq!(test.iter().filter(|r| r.has_wsp).count(), 1);
        let trainval: usize = runs.iter().filter(|r| r.role != RunRole::Test).map(|r| r.len()).sum();
        let testlen: usize = test.iter().map(|r| r.len()).sum();
        assert_eq!(trainval, SUITE_TRAINVAL_SAMPLES);
        assert_eq!(testlen, SUITE_TEST_SAMPLES);
    }

    #[test]
    fn suite_peak_is_normalization_constant() {
        let runs = make_benchmark_suite(42);
        let peak = runs
            .iter()
            .flat_map(|r| r.samples.iter())
            .map(|s| s.wheel_speed.max(s.gps_speed))
            .fold(0.0_f64, f64::max);
        assert_eq!(peak, SPEED_DIVISOR);
    }

    #[test]
    fn continuity_bound() {
        for spec in benchmark_specs(3) {
            let run = simulate(&spec).unwrap();
            let a_max = spec.max_rate();
            for w in run.samples.windows(2) {
                let dv = (w[1].train_speed.unwrap() - w[0].train_speed.unwrap()).abs();
                assert!(dv <= a_max * spec.dt + 1e-9);
            }
        }
    }
}
