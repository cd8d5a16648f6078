use std::ffi::{CStr, CString};
use std::ptr;

use trainspeed::akf::{run_akf, AkfConfig};
use trainspeed::architectures::{self, predict_run, Arch, TrainedModel};
use trainspeed::eval::{rmse, SpeedEstimateTrace};
use trainspeed::simulator::make_benchmark_suite;
use trainspeed_ffi::*;

fn suite() -> *mut TsRunSet {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ts_runs_benchmark_suite(42, &mut h) }, TsStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let p = ts_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn test_index(h: *const TsRunSet, wsp: bool) -> usize {
    let mut n = 0;
    unsafe { ts_runs_count(h, &mut n) };
    (0..n)
        .find(|&i| {
            let mut info = TsRunInfo { len: 0, has_wsp: false, has_ground_truth: false, role: TsRole::Train };
            unsafe { ts_run_info(h, i, &mut info) };
            info.role == TsRole::Test && info.has_wsp == wsp
        })
        .unwrap()
}

#[test]
fn suite_counts_and_info() {
    let h = suite();
    let mut n = 0;
    assert_eq!(unsafe { ts_runs_count(h, &mut n) }, TsStatus::Ok);
    assert_eq!(n, 17);
    let mut wsp = 0;
    let mut tests = 0;
    for i in 0..n {
        let mut info = TsRunInfo { len: 0, has_wsp: false, has_ground_truth: false, role: TsRole::Train };
        assert_eq!(unsafe { ts_run_info(h, i, &mut info) }, TsStatus::Ok);
        assert!(info.len > 0 && info.has_ground_truth);
        wsp += info.has_wsp as usize;
        tests += (info.role == TsRole::Test) as usize;
    }
    assert_eq!((wsp, tests), (4, 2));
    unsafe { ts_runs_free(h) };
}

#[test]
fn run_id_and_samples_round_trip() {
    let h = suite();
    let runs = make_benchmark_suite(42);
    let mut len = 0;
    let mut small = [0 as std::ffi::c_char; 2];
    assert_eq!(unsafe { ts_run_id(h, 0, small.as_mut_ptr(), 2, &mut len) }, TsStatus::BufferTooSmall);
    assert_eq!(len, runs[0].run_id.len());
    let mut buf = vec![0 as std::ffi::c_char; len + 1];
    assert_eq!(unsafe { ts_run_id(h, 0, buf.as_mut_ptr(), buf.len(), &mut len) }, TsStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), runs[0].run_id);

    let n = runs[3].len();
    let (mut t, mut w, mut g, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut written = 0;
    let status = unsafe {
        ts_run_samples(h, 3, t.as_mut_ptr(), w.as_mut_ptr(), g.as_mut_ptr(), y.as_mut_ptr(), n, &mut written)
    };
    assert_eq!(status, TsStatus::Ok);
    assert_eq!(written, n);
    for (i, s) in runs[3].samples.iter().enumerate() {
        assert_eq!((t[i], w[i], g[i], y[i]), (s.t, s.wheel_speed, s.gps_speed, s.train_speed.unwrap()));
    }
    unsafe { ts_runs_free(h) };
}

#[test]
fn akf_matches_core_and_size_query() {
    let h = suite();
    let idx = test_index(h, true);
    let mut need = 0;
    let status = unsafe { ts_akf_run(h, idx, ptr::null(), ptr::null_mut(), ptr::null_mut(), 0, &mut need) };
    assert_eq!(status, TsStatus::BufferTooSmall);
    let (mut t, mut v) = (vec![0.0; need], vec![0.0; need]);
    let mut written = 0;
    let status = unsafe { ts_akf_run(h, idx, ptr::null(), t.as_mut_ptr(), v.as_mut_ptr(), need, &mut written) };
    assert_eq!(status, TsStatus::Ok);

    let runs = make_benchmark_suite(42);
    let core = run_akf(&runs[idx], &AkfConfig::default()).unwrap();
    assert_eq!(written, core.entries.len());
    for (i, e) in core.entries.iter().enumerate() {
        assert_eq!((t[i], v[i]), (e.t, e.estimate));
    }

    let mut r = 0.0;
    assert_eq!(unsafe { ts_rmse(h, idx, t.as_ptr(), v.as_ptr(), written, &mut r) }, TsStatus::Ok);
    assert_eq!(r, rmse(&core, &runs[idx]).unwrap());

    let json = CString::new(r#"{"mode": "covariance_matching", "window_N": 10, "adapt_process_noise": false}"#).unwrap();
    let status = unsafe { ts_akf_run(h, idx, json.as_ptr(), t.as_mut_ptr(), v.as_mut_ptr(), need, &mut written) };
    assert_eq!(status, TsStatus::Ok, "{}", last_error());
    let cfg = AkfConfig { window_n: 10, adapt_process_noise: false, ..AkfConfig::default() };
    assert_eq!(v[written - 1], run_akf(&runs[idx], &cfg).unwrap().entries.last().unwrap().estimate);

    let bad = CString::new(r#"{"window_N": 0}"#).unwrap();
    let status = unsafe { ts_akf_run(h, idx, bad.as_ptr(), t.as_mut_ptr(), v.as_mut_ptr(), need, &mut written) };
    assert_eq!(status, TsStatus::Validation);
    assert!(last_error().contains("window_N"));
    unsafe { ts_runs_free(h) };
}

#[test]
fn model_predictions_match_core() {
    let dir = tempfile::tempdir().unwrap();
    let runs = make_benchmark_suite(42);
    let config = Arch::Single1d.optimal();
    let model = TrainedModel {
        format_version: architectures::CHECKPOINT_VERSION,
        config: config.clone(),
        normalization: Default::default(),
        network: architectures::build(&config, 5).unwrap(),
        train_history: vec![],
        epochs_trained: 0,
        stopped_early: false,
    };
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ts_model_load(cpath.as_ptr(), &mut m) }, TsStatus::Ok);
    let mut hist = 0;
    assert_eq!(unsafe { ts_model_history_len(m, &mut hist) }, TsStatus::Ok);
    assert_eq!(hist, 10);

    let h = suite();
    let idx = test_index(h, false);
    let n = runs[idx].len();
    let (mut t, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut written = 0;
    let status = unsafe { ts_model_predict(m, h, idx, t.as_mut_ptr(), v.as_mut_ptr(), n, &mut written) };
    assert_eq!(status, TsStatus::Ok);
    let core: SpeedEstimateTrace = predict_run(&TrainedModel::load(&path).unwrap(), &runs[idx]).unwrap();
    assert_eq!(written, n - 10);
    assert_eq!(written, core.entries.len());
    assert!(core.entries.iter().enumerate().all(|(i, e)| t[i] == e.t && v[i] == e.estimate));
    unsafe {
        ts_model_free(m);
        ts_runs_free(h);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut h = ptr::null_mut();
    let missing = CString::new("/nonexistent/runs.csv").unwrap();
    assert_eq!(unsafe { ts_runs_load(missing.as_ptr(), &mut h) }, TsStatus::Io);
    assert!(h.is_null());
    assert!(last_error().contains("/nonexistent/runs.csv"));

    assert_eq!(unsafe { ts_runs_load(ptr::null(), &mut h) }, TsStatus::NullPointer);
    assert_eq!(unsafe { ts_runs_count(ptr::null(), ptr::null_mut()) }, TsStatus::NullPointer);

    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("bad.csv");
    std::fs::write(&garbage, "run_id,t,wheel_speed,gps_speed,train_speed\nr,0,abc,1,1\n").unwrap();
    let cpath = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ts_runs_load(cpath.as_ptr(), &mut h) }, TsStatus::Parse);
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ts_model_load(cpath.as_ptr(), &mut m) }, TsStatus::Parse);

    let s = suite();
    let mut info = TsRunInfo { len: 0, has_wsp: false, has_ground_truth: false, role: TsRole::Train };
    assert_eq!(unsafe { ts_run_info(s, 99, &mut info) }, TsStatus::InvalidArgument);
    assert!(last_error().contains("99"));
    let mut n = 0;
    assert_eq!(unsafe { ts_runs_count(s, &mut n) }, TsStatus::Ok);
    assert!(ts_last_error_message().is_null());
    unsafe {
        ts_runs_free(s);
        ts_runs_free(ptr::null_mut());
        ts_model_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_api_and_compiles_as_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/trainspeed.h")).unwrap();
    for f in [
        "ts_last_error_message", "ts_runs_load", "ts_runs_benchmark_suite", "ts_runs_free", "ts_runs_count",
        "ts_run_info", "ts_run_id", "ts_run_samples", "ts_akf_run", "ts_model_load", "ts_model_free",
        "ts_model_history_len", "ts_model_predict", "ts_rmse",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct TsRunSet TsRunSet;"));

    let Ok(tmp) = tempfile::tempdir() else { return };
    let src = tmp.path().join("check.c");
    std::fs::write(
        &src,
        "#include \"trainspeed.h\"\nint main(void) { TsRunSet *h = 0; return ts_runs_benchmark_suite(42, &h) == TS_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
    {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}
