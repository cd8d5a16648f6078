use proptest::prelude::*;
use trainspeed::dataset::{
    count_windows, load_window_cache, make_windows, save_window_cache, split, NormalizationConfig, SPEED_DIVISOR,
};
use trainspeed::signals::{load_runs, save_runs, RunRole, SensorSample, TrainRun};
use trainspeed::simulator::{
    make_benchmark_suite, simulate, Phase, ScenarioSpec, WspSpec, SUITE_RUNS_WITHOUT_WSP, SUITE_RUNS_WITH_WSP,
    SUITE_TEST_SAMPLES, SUITE_TRAINVAL_SAMPLES,
};

fn arb_run(id: usize) -> impl Strategy<Value = TrainRun> {
    (
        prop::collection::vec((0.01f64..5.0, 0.0f64..40.0, 0.0f64..40.0, prop::option::of(0.0f64..40.0)), 1..40),
        any::<bool>(),
        prop_oneof![Just(RunRole::Train), Just(RunRole::Validation), Just(RunRole::Test)],
        0.0f64..1000.0,
    )
        .prop_map(move |(rows, has_wsp, role, t0)| {
            let mut t = t0;
            let samples = rows
                .into_iter()
                .map(|(dt, w, g, truth)| {
                    t += dt;
                    SensorSample { t, wheel_speed: w, gps_speed: g, train_speed: truth }
                })
                .collect();
            TrainRun { run_id: format!("run_{id}"), samples, has_wsp, role }
        })
}

fn arb_runs() -> impl Strategy<Value = Vec<TrainRun>> {
    (1usize..5).prop_flat_map(|k| (0..k).map(arb_run).collect::<Vec<_>>())
}

fn truth_run(id: &str, len: usize, role: RunRole) -> TrainRun {
    TrainRun {
        run_id: id.into(),
        samples: (0..len)
            .map(|i| {
                let v = 10.0 + (i as f64 * 0.1).sin();
                SensorSample { t: i as f64, wheel_speed: v, gps_speed: v + 0.5, train_speed: Some(v) }
            })
            .collect(),
        has_wsp: false,
        role,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_bit_exact(runs in arb_runs()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        save_runs(&runs, &path).unwrap();
        let back = load_runs(&path).unwrap();
        prop_assert_eq!(back.len(), runs.len());
        for (a, b) in runs.iter().zip(&back) {
            prop_assert_eq!(&a.run_id, &b.run_id);
            prop_assert_eq!(a.has_wsp, b.has_wsp);
            prop_assert_eq!(a.role, b.role);
            prop_assert_eq!(a.samples.len(), b.samples.len());
            for (x, y) in a.samples.iter().zip(&b.samples) {
                prop_assert_eq!(x.t.to_bits(), y.t.to_bits());
                prop_assert_eq!(x.wheel_speed.to_bits(), y.wheel_speed.to_bits());
                prop_assert_eq!(x.gps_speed.to_bits(), y.gps_speed.to_bits());
                prop_assert_eq!(x.train_speed.map(f64::to_bits), y.train_speed.map(f64::to_bits));
            }
        }
    }

    #[test]
    fn normalization_inverts(v in 0.0f64..100.0, div in 0.1f64..100.0) {
        let norm = NormalizationConfig::new(div).unwrap();
        prop_assert!((norm.denormalize(norm.normalize(v)) - v).abs() <= 1e-12 * v.max(1.0));
    }

    #[test]
    fn window_count_law(lens in prop::collection::vec(1usize..80, 1..6), n in 1usize..30) {
        let runs: Vec<_> = lens.iter().enumerate().map(|(i, &l)| truth_run(&format!("r{i}"), l, RunRole::Train)).collect();
        let total: usize = lens.iter().sum();
        let result = make_windows(&runs, n, &NormalizationConfig::default());
        if lens.iter().all(|&l| l > n) {
            let w = result.unwrap();
            prop_assert_eq!(w.len(), count_windows(total, lens.len(), n).unwrap());
            for win in &w {
                prop_assert_eq!(win.inputs.len(), n * 3);
                prop_assert!(win.inputs.iter().all(|x| x.is_finite()));
            }
        } else {
            prop_assert!(result.is_err());
        }
    }

    #[test]
    fn split_has_no_leakage(lens in prop::collection::vec(12usize..60, 2..5), ratio in 0.1f64..0.9, seed: u64) {
        let mut runs: Vec<_> = lens.iter().enumerate().map(|(i, &l)| truth_run(&format!("r{i}"), l, RunRole::Train)).collect();
        runs.last_mut().unwrap().role = RunRole::Test;
        let windows = make_windows(&runs, 10, &NormalizationConfig::default()).unwrap();
        let total = windows.len();
        let s = split(windows, ratio, seed).unwrap();
        prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), total);
        prop_assert!(s.test.iter().all(|w| w.role == RunRole::Test));
        let key = |w: &trainspeed::dataset::WindowSample| (w.source_run.clone(), w.t_target.to_bits());
        let train: std::collections::HashSet<_> = s.train.iter().map(key).collect();
        prop_assert!(s.validation.iter().all(|w| !train.contains(&key(w)) && w.role != RunRole::Test));
        prop_assert!(s.train.iter().all(|w| w.role != RunRole::Test));
    }

    #[test]
    fn wsp_dips_stay_bounded(start in 0.0f64..20.0, len in 5.0f64..40.0, max_slip in 0.05f64..0.9, period in 1.0f64..6.0) {
        let mut spec = ScenarioSpec::new("w", vec![Phase::accelerate(20.0, 15.0), Phase::constant(40.0)]);
        spec.wsp = Some(WspSpec { start_t: start, end_t: start + len, max_slip_fraction: max_slip, cycle_period: period });
        let run = simulate(&spec).unwrap();
        for s in &run.samples {
            let v = s.train_speed.unwrap();
            prop_assert!(s.wheel_speed <= v + 1e-12);
            prop_assert!(s.wheel_speed >= (1.0 - max_slip) * v - 1e-12);
            if !(s.t >= start && s.t < start + len) {
                prop_assert_eq!(s.wheel_speed, v);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic(seed: u64, sigma in 0.0f64..1.0) {
        let mut spec = ScenarioSpec::new("d", vec![Phase::accelerate(30.0, 20.0), Phase::coast(10.0), Phase::brake(20.0, 0.0)]);
        spec.seed = seed;
        spec.gps_noise_sigma = sigma;
        spec.wheel_noise_sigma = sigma;
        prop_assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
    }
}

#[test]
fn benchmark_suite_shape() {
    let suite = make_benchmark_suite(42);
    assert_eq!(suite.len(), SUITE_RUNS_WITHOUT_WSP + SUITE_RUNS_WITH_WSP);
    assert_eq!(suite.iter().filter(|r| r.has_wsp).count(), SUITE_RUNS_WITH_WSP);
    let sum = |role: RunRole| suite.iter().filter(|r| (r.role == RunRole::Test) == (role == RunRole::Test)).map(|r| r.len()).sum::<usize>();
    assert_eq!(sum(RunRole::Train), SUITE_TRAINVAL_SAMPLES);
    assert_eq!(sum(RunRole::Test), SUITE_TEST_SAMPLES);
    let peak = suite
        .iter()
        .flat_map(|r| r.samples.iter())
        .flat_map(|s| [s.wheel_speed, s.gps_speed])
        .fold(0.0f64, f64::max);
    assert_eq!(peak, SPEED_DIVISOR);
    assert_eq!(suite, make_benchmark_suite(42));
    assert_ne!(suite, make_benchmark_suite(43));
}

#[test]
fn window_cache_regenerates_identically() {
    let suite = make_benchmark_suite(3);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    let norm = NormalizationConfig::default();
    save_window_cache(&make_windows(&suite, 20, &norm).unwrap(), &a).unwrap();
    save_window_cache(&make_windows(&make_benchmark_suite(3), 20, &norm).unwrap(), &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(load_window_cache(&a).unwrap().len(), count_windows(5205 + 947, 17, 20).unwrap());
}
