//! Adaptive Kalman filter baseline.
//!
//! Linear predict/update with two optional noise-adaptation schemes:
//! innovation covariance matching over a moving window, and a
//! maximum-likelihood grid search over scalar multipliers of the nominal
//! process and measurement covariances.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Estimator, SpeedEstimateTrace, TraceEntry};
use crate::signals::TrainRun;

/// Eigenvalue floor applied when projecting an adapted covariance to PSD.
pub const PSD_FLOOR: f64 = 1e-9;

/// Condition number above which the innovation covariance counts as singular.
const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterModel {
    pub f: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl FilterModel {
    pub fn new(
        f: DMatrix<f64>,
        b: DMatrix<f64>,
        h: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let model = FilterModel { f, b, h, q, r };
        model.check()?;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    fn check(&self) -> Result<()> {
        let n = self.f.nrows();
        let m = self.h.nrows();
        let dims_ok = self.f.ncols() == n
            && self.b.nrows() == n
            && self.h.ncols() == n
            && self.q.shape() == (n, n)
            && self.r.shape() == (m, m);
        if !dims_ok {
            return Err(Error::Dimension(format!(
                "F {:?}, B {:?}, H {:?}, Q {:?}, R {:?}",
                self.f.shape(),
                self.b.shape(),
                self.h.shape(),
                self.q.shape(),
                self.r.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub step: usize,
}

impl FilterState {
    pub fn new(x_hat: DVector<f64>, p: DMatrix<f64>) -> Self {
        FilterState { x_hat, p, step: 0 }
    }
}

/// Innovation and its theoretical covariance at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub nu: DVector<f64>,
    pub s: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct UpdateOutput {
    pub state: FilterState,
    pub innovation: Innovation,
    pub gain: DMatrix<f64>,
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Ratio of extreme singular values; infinite when the matrix is singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn invert(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular { what, condition });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::Singular { what, condition })
}

/// A priori step: `x = F x + B u`, `P = F P F^T + Q`.
pub fn predict(model: &FilterModel, state: &FilterState, u: &DVector<f64>) -> Result<FilterState> {
    let n = model.state_dim();
    if state.x_hat.len() != n || state.p.shape() != (n, n) || u.len() != model.b.ncols() {
        return Err(Error::Dimension(format!(
            "predict: state {} / P {:?} / control {} against state dim {n}, control dim {}",
            state.x_hat.len(),
            state.p.shape(),
            u.len(),
            model.b.ncols()
        )));
    }
    let x_hat = &model.f * &state.x_hat + &model.b * u;
    let p = &model.f * &state.p * model.f.transpose() + &model.q;
    Ok(FilterState { x_hat, p: symmetrize(&p), step: state.step })
}

/// A posteriori step from the prior `state` and measurement `z`.
pub fn update(model: &FilterModel, state: &FilterState, z: &DVector<f64>) -> Result<UpdateOutput> {
    let n = model.state_dim();
    if z.len() != model.meas_dim() || state.x_hat.len() != n {
        return Err(Error::Dimension(format!(
            "update: measurement {} against meas dim {}",
            z.len(),
            model.meas_dim()
        )));
    }
    let h = &model.h;
    let nu = z - h * &state.x_hat;
    let s = symmetrize(&(h * &state.p * h.transpose() + &model.r));
    let s_inv = invert(&s, "innovation covariance")?;
    let gain = &state.p * h.transpose() * s_inv;
    let x_hat = &state.x_hat + &gain * &nu;
    let p = (DMatrix::identity(n, n) - &gain * h) * &state.p;
    Ok(UpdateOutput {
        state: FilterState { x_hat, p: symmetrize(&p), step: state.step + 1 },
        innovation: Innovation { nu, s },
        gain,
    })
}

/// Replaces eigenvalues below `floor` with `floor`.
pub fn project_psd(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|l| if l < floor { floor } else { l });
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&vals) * v.transpose()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationMode {
    None,
    #[default]
    CovarianceMatching,
    MaxLikelihood,
}

/// Moving window of innovations and the empirical innovation covariance.
#[derive(Debug, Clone)]
pub struct AdaptationState {
    pub mode: AdaptationMode,
    pub window_n: usize,
    pub window: VecDeque<DVector<f64>>,
    pub innovation_cov_estimate: DMatrix<f64>,
}

impl AdaptationState {
    pub fn new(mode: AdaptationMode, window_n: usize, meas_dim: usize) -> Self {
        AdaptationState {
            mode,
            window_n: window_n.max(1),
            window: VecDeque::with_capacity(window_n),
            innovation_cov_estimate: DMatrix::zeros(meas_dim, meas_dim),
        }
    }

    pub fn push(&mut self, nu: DVector<f64>) {
        if self.window.len() == self.window_n {
            self.window.pop_front();
        }
        self.window.push_back(nu);
    }
}

/// Covariance-matching adaptation. Updates the innovation covariance
/// estimate from the buffered innovations and returns the model with
/// `R = C - H P⁻ H^T` (PSD-projected) and `Q = K C K^T`.
pub fn adapt_covariance_matching(
    adapt: &mut AdaptationState,
    model: &FilterModel,
    gain: &DMatrix<f64>,
    p_prior: &DMatrix<f64>,
) -> Result<FilterModel> {
    let count = adapt.window.len();
    if count == 0 {
        return Err(Error::Validation("innovation window is empty".into()));
    }
    let m = model.meas_dim();
    let mut c = DMatrix::zeros(m, m);
    for nu in &adapt.window {
        c += nu * nu.transpose();
    }
    c /= count as f64;
    let c = symmetrize(&c);

    let h = &model.h;
    let r = project_psd(&(&c - h * p_prior * h.transpose()), PSD_FLOOR);
    let q = symmetrize(&(gain * &c * gain.transpose()));
    adapt.innovation_cov_estimate = c;

    let mut out = model.clone();
    out.r = r;
    out.q = q;
    Ok(out)
}

/// Gaussian innovation log-likelihood `-1/2 Σ (ln|S| + ν^T S^-1 ν)`.
pub fn log_likelihood(history: &[Innovation]) -> Result<f64> {
    let mut total = 0.0;
    for inn in history {
        let s_inv = invert(&inn.s, "innovation covariance")?;
        let det = inn.s.determinant();
        if det <= 0.0 {
            return Err(Error::Singular { what: "innovation covariance", condition: condition_number(&inn.s) });
        }
        let quad = (inn.nu.transpose() * s_inv * &inn.nu)[(0, 0)];
        total += det.ln() + quad;
    }
    Ok(-0.5 * total)
}

/// Grid search over `(q_scale, r_scale)` maximizing [`log_likelihood`].
///
/// `replay(q_scale, r_scale)` re-runs the filter over the adaptation window
/// with scaled nominal covariances and returns its innovations. Candidates
/// whose replay fails are skipped. Exact ties go to the candidate closest to
/// `(1, 1)` in log space.
pub fn adapt_max_likelihood<F>(scale_grid: &[f64], mut replay: F) -> Result<(f64, f64)>
where
    F: FnMut(f64, f64) -> Result<Vec<Innovation>>,
{
    if scale_grid.is_empty() || scale_grid.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Config("scale grid must be non-empty and positive".into()));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    let mut last_err = None;
    for &qs in scale_grid {
        for &rs in scale_grid {
            let history = replay(qs, rs)?;
            if history.len() < 2 {
                return Err(Error::Validation(format!(
                    "likelihood needs at least 2 innovations, got {}",
                    history.len()
                )));
            }
            let ll = match log_likelihood(&history) {
                Ok(v) if v.is_finite() => v,
                Ok(_) => continue,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let better = match best {
                None => true,
                Some((_, _, b)) => {
                    let tol = 1e-12 * b.abs().max(1.0);
                    if ll > b + tol {
                        true
                    } else if (ll - b).abs() <= tol {
                        let (bq, br, _) = best.unwrap();
                        distance_from_unit(qs, rs) < distance_from_unit(bq, br)
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((qs, rs, ll));
            }
        }
    }
    match best {
        Some((q, r, _)) => Ok((q, r)),
        None => Err(last_err.unwrap_or(Error::Singular {
            what: "innovation covariance",
            condition: f64::INFINITY,
        })),
    }
}

fn distance_from_unit(q: f64, r: f64) -> f64 {
    q.ln().abs() + r.ln().abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AkfConfig {
    pub mode: AdaptationMode,
    #[serde(rename = "window_N")]
    pub window_n: usize,
    /// Diagonal of the initial process covariance (speed, acceleration).
    pub q_init: [f64; 2],
    /// Diagonal of the initial measurement covariance (wheel, GPS).
    pub r_init: [f64; 2],
    pub dt: f64,
    /// Multipliers tried by the maximum-likelihood mode.
    pub ml_grid: Vec<f64>,
    /// Whether covariance matching also replaces Q with `K C K^T`. When
    /// false only R adapts and Q stays at `q_init`.
    pub adapt_process_noise: bool,
}

impl Default for AkfConfig {
    fn default() -> Self {
        AkfConfig {
            mode: AdaptationMode::CovarianceMatching,
            window_n: 30,
            q_init: [0.01, 0.01],
            r_init: [0.25, 0.25],
            dt: 1.0,
            ml_grid: vec![0.5, 1.0, 2.0],
            adapt_process_noise: true,
        }
    }
}

impl AkfConfig {
    /// Constant-acceleration model observing speed through both sensors.
    pub fn model(&self) -> FilterModel {
        let dt = self.dt;
        FilterModel {
            f: DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
            b: DMatrix::zeros(2, 1),
            h: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]),
            q: DMatrix::from_diagonal(&DVector::from_column_slice(&self.q_init)),
            r: DMatrix::from_diagonal(&DVector::from_column_slice(&self.r_init)),
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.q_init) || !positive(&self.r_init) || !(self.dt > 0.0) || self.window_n == 0 {
            return Err(Error::Config(
                "AKF config needs positive q_init, r_init, dt and window_N".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the filter produced at one timestep.
#[derive(Debug, Clone)]
pub struct AkfStep {
    pub t: f64,
    pub posterior: FilterState,
    pub innovation: Innovation,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Runs the filter over `run` and returns the speed trace.
pub fn run_akf(run: &TrainRun, config: &AkfConfig) -> Result<SpeedEstimateTrace> {
    Ok(run_akf_detailed(run, config)?.0)
}

/// Like [`run_akf`] but also returns the per-step filter history.
pub fn run_akf_detailed(run: &TrainRun, config: &AkfConfig) -> Result<(SpeedEstimateTrace, Vec<AkfStep>)> {
    config.validate()?;
    let first = run
        .samples
        .first()
        .ok_or_else(|| Error::Validation(format!("run {} is empty", run.run_id)))?;
    let nominal = config.model();
    let mut model = nominal.clone();
    let mut state = FilterState::new(
        DVector::from_column_slice(&[0.5 * (first.wheel_speed + first.gps_speed), 0.0]),
        DMatrix::from_diagonal(&DVector::from_column_slice(&[10.0, 1.0])),
    );
    let u = DVector::zeros(1);
    let mut adapt = AdaptationState::new(config.mode, config.window_n, 2);
    // (posterior before the step, measurement) pairs for likelihood replay
    let mut replay_buf: VecDeque<(FilterState, DVector<f64>)> = VecDeque::new();

    let mut entries = Vec::with_capacity(run.len());
    let mut steps = Vec::with_capacity(run.len());
    for s in &run.samples {
        let z = DVector::from_column_slice(&[s.wheel_speed, s.gps_speed]);
        let before = state.clone();
        let prior = predict(&model, &state, &u)?;
        let out = update(&model, &prior, &z)?;
        state = out.state;

        match config.mode {
            AdaptationMode::None => {}
            AdaptationMode::CovarianceMatching => {
                adapt.push(out.innovation.nu.clone());
                let adapted = adapt_covariance_matching(&mut adapt, &model, &out.gain, &prior.p)?;
                model.r = adapted.r;
                if config.adapt_process_noise {
                    model.q = adapted.q;
                }
            }
            AdaptationMode::MaxLikelihood => {
                if replay_buf.len() == config.window_n {
                    replay_buf.pop_front();
                }
                replay_buf.push_back((before, z));
                if replay_buf.len() >= 2 {
                    let (qs, rs) = adapt_max_likelihood(&config.ml_grid, |qs, rs| {
                        let mut trial = nominal.clone();
                        trial.q *= qs;
                        trial.r *= rs;
                        replay_window(&trial, &replay_buf)
                    })?;
                    model.q = &nominal.q * qs;
                    model.r = &nominal.r * rs;
                }
            }
        }

        entries.push(TraceEntry { t: s.t, estimate: state.x_hat[0].max(0.0) });
        steps.push(AkfStep {
            t: s.t,
            posterior: state.clone(),
            innovation: out.innovation,
            q: model.q.clone(),
            r: model.r.clone(),
        });
    }
    let trace = SpeedEstimateTrace { run_id: run.run_id.clone(), estimator: Estimator::Akf, entries };
    Ok((trace, steps))
}

fn replay_window(model: &FilterModel, buf: &VecDeque<(FilterState, DVector<f64>)>) -> Result<Vec<Innovation>> {
    let u = DVector::zeros(model.b.ncols());
    let mut state = buf[0].0.clone();
    let mut history = Vec::with_capacity(buf.len());
    for (_, z) in buf {
        let prior = predict(model, &state, &u)?;
        let out = update(model, &prior, z)?;
        state = out.state;
        history.push(out.innovation);
    }
    Ok(history)
}
