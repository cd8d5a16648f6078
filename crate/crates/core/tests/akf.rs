use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trainspeed::akf::{
    adapt_max_likelihood, predict, run_akf, run_akf_detailed, update, AdaptationMode, AkfConfig, FilterModel,
    FilterState, Innovation,
};
use trainspeed::eval::{rmse, SpeedEstimateTrace};
use trainspeed::signals::{RunRole, SensorSample, TrainRun};
use trainspeed::simulator::{benchmark_specs, make_benchmark_suite, simulate};

mod common;
use common::{ca_model, normal, recovered_r, reference, simulate_linear};

fn to_ref(m: &DMatrix<f64>) -> reference::M {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[test]
fn matches_reference_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 3;
    let m = 2;
    let rand_mat = |rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64| {
        DMatrix::from_fn(r, c, |_, _| scale * normal(rng))
    };
    let f = DMatrix::identity(n, n) + rand_mat(&mut rng, n, n, 0.1);
    let h = rand_mat(&mut rng, m, n, 1.0);
    let gq = rand_mat(&mut rng, n, n, 0.3);
    let gr = rand_mat(&mut rng, m, m, 0.5);
    let q = &gq * gq.transpose() + DMatrix::identity(n, n) * 0.01;
    let r = &gr * gr.transpose() + DMatrix::identity(m, m) * 0.1;
    let model = FilterModel::new(f.clone(), DMatrix::zeros(n, 1), h.clone(), q.clone(), r.clone()).unwrap();

    let mut state = FilterState::new(DVector::zeros(n), DMatrix::identity(n, n));
    let mut kf = reference::Kf {
        f: to_ref(&f),
        h: to_ref(&h),
        q: to_ref(&q),
        r: to_ref(&r),
        x: vec![vec![0.0]; n],
        p: reference::eye(n),
    };
    let mut truth = DVector::from_fn(n, |_, _| normal(&mut rng));
    let u = DVector::zeros(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        truth = &f * truth + &gq * DVector::from_fn(n, |_, _| normal(&mut rng));
        let z = &h * &truth + &gr * DVector::from_fn(m, |_, _| normal(&mut rng));
        let prior = predict(&model, &state, &u).unwrap();
        state = update(&model, &prior, &z).unwrap().state;
        kf.step(z.as_slice());
        for i in 0..n {
            worst = worst.max((state.x_hat[i] - kf.x[i][0]).abs());
            for j in 0..n {
                worst = worst.max((state.p[(i, j)] - kf.p[i][j]).abs());
            }
        }
    }
    assert!(worst <= 1e-10, "max deviation {worst:e}");
}

#[test]
fn covariance_matching_recovers_measurement_noise() {
    for seed in [17, 1, 2, 3, 4] {
        let r = recovered_r(seed);
        for (est, truth) in r.iter().zip([0.25, 1.0]) {
            assert!((est - truth).abs() <= 0.3 * truth, "seed {seed}: {r:?}");
        }
    }
}

#[test]
fn max_likelihood_prefers_nominal_scales() {
    let q = [0.01, 1e-4];
    let r = [0.25, 1.0];
    let zs = simulate_linear(500, q, r, 7);
    let init = FilterState::new(DVector::from_column_slice(&[zs[0][0], 0.0]), DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.1])));
    let u = DVector::zeros(1);
    let best = adapt_max_likelihood(&[0.5, 1.0, 2.0], |qs, rs| {
        let mut model = ca_model(q, r);
        model.q *= qs;
        model.r *= rs;
        let mut st = init.clone();
        let mut hist: Vec<Innovation> = Vec::new();
        for z in &zs {
            let prior = predict(&model, &st, &u)?;
            let out = update(&model, &prior, z)?;
            st = out.state;
            hist.push(out.innovation);
        }
        Ok(hist)
    })
    .unwrap();
    assert_eq!(best, (1.0, 1.0));
}

fn lag1_autocorr(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[test]
fn innovations_are_white_on_matched_model() {
    let q = [0.01, 1e-4];
    let r = [0.25, 1.0];
    let zs = simulate_linear(1000, q, r, 5);
    let model = ca_model(q, r);
    let mut st = FilterState::new(DVector::from_column_slice(&[10.0, 0.0]), DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.1])));
    let u = DVector::zeros(1);
    let mut whitened = [Vec::new(), Vec::new()];
    for z in &zs {
        let prior = predict(&model, &st, &u).unwrap();
        let out = update(&model, &prior, z).unwrap();
        st = out.state;
        let l = out.innovation.s.clone().cholesky().unwrap().l();
        let e = l.solve_lower_triangular(&out.innovation.nu).unwrap();
        whitened[0].push(e[0]);
        whitened[1].push(e[1]);
    }
    for w in &whitened {
        let rho = lag1_autocorr(&w[50..]);
        assert!((-0.15..=0.15).contains(&rho), "lag-1 autocorrelation {rho}");
    }
}

fn constant_run(v: f64, len: usize) -> TrainRun {
    TrainRun {
        run_id: "c".into(),
        samples: (0..len)
            .map(|i| SensorSample { t: i as f64, wheel_speed: v, gps_speed: v, train_speed: Some(v) })
            .collect(),
        has_wsp: false,
        role: RunRole::Test,
    }
}

#[test]
fn agreeing_sensors_converge() {
    let cfg = AkfConfig { mode: AdaptationMode::None, ..AkfConfig::default() };
    let trace = run_akf(&constant_run(5.0, 40), &cfg).unwrap();
    for e in &trace.entries[20..] {
        assert!((e.estimate - 5.0).abs() < 1e-6);
    }
}

#[test]
fn covariance_stays_psd_on_benchmark() {
    for mode in [AdaptationMode::None, AdaptationMode::CovarianceMatching, AdaptationMode::MaxLikelihood] {
        let cfg = AkfConfig { mode, ..AkfConfig::default() };
        for run in make_benchmark_suite(42) {
            let (trace, steps) = run_akf_detailed(&run, &cfg).unwrap();
            assert_eq!(trace.entries.len(), run.len());
            for s in &steps {
                let p = &s.posterior.p;
                assert_eq!(p, &p.transpose());
                let min = p.clone().symmetric_eigenvalues().min();
                assert!(min >= -1e-9, "{mode:?} {} t={} min eig {min}", run.run_id, s.t);
                assert!(s.r.clone().symmetric_eigenvalues().min() >= 0.0);
            }
            assert!(trace.entries.iter().all(|e| e.estimate >= 0.0 && e.estimate.is_finite()));
        }
    }
}

#[test]
fn beats_noisy_wheel_channel_on_fault_free_run() {
    let mut spec = benchmark_specs(42)
        .into_iter()
        .find(|s| s.run_id == "test_nowsp")
        .unwrap();
    spec.wheel_noise_sigma = 0.3;
    spec.gps_noise_sigma = 0.3;
    let run = simulate(&spec).unwrap();
    let akf = rmse(&run_akf(&run, &AkfConfig::default()).unwrap(), &run).unwrap();
    let wheel = rmse(&SpeedEstimateTrace::wheel_baseline(&run), &run).unwrap();
    println!("AKF {akf:.4} m/s vs raw wheel {wheel:.4} m/s");
    assert!(akf < wheel);
}

#[test]
fn wsp_run_rmse_is_reported() {
    let suite = make_benchmark_suite(42);
    let run = suite.iter().find(|r| r.run_id == "test_wsp").unwrap();
    for mode in [AdaptationMode::None, AdaptationMode::CovarianceMatching, AdaptationMode::MaxLikelihood] {
        let cfg = AkfConfig { mode, ..AkfConfig::default() };
        let v = rmse(&run_akf(run, &cfg).unwrap(), run).unwrap();
        println!("{mode:?}: WSP run AKF RMSE {v:.4} m/s");
        assert!(v.is_finite());
    }
}
