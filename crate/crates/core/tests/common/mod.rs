//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use trainspeed::akf::{adapt_covariance_matching, predict, update, AdaptationMode, AdaptationState, AkfConfig, FilterModel, FilterState};

/// Textbook Kalman filter on row-major `Vec<Vec<f64>>`, written straight
/// from the predict/update equations without nalgebra.
pub mod reference {
    pub type M = Vec<Vec<f64>>;

    pub fn mul(a: &M, b: &M) -> M {
        let (n, k, m) = (a.len(), b.len(), b[0].len());
        let mut out = vec![vec![0.0; m]; n];
        for i in 0..n {
            for j in 0..m {
                for l in 0..k {
                    out[i][j] += a[i][l] * b[l][j];
                }
            }
        }
        out
    }

    pub fn t(a: &M) -> M {
        (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
    }

    pub fn add(a: &M, b: &M, sign: f64) -> M {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + sign * q).collect()).collect()
    }

    pub fn eye(n: usize) -> M {
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    pub fn sym(a: &M) -> M {
        let at = t(a);
        a.iter().zip(&at).map(|(x, y)| x.iter().zip(y).map(|(p, q)| 0.5 * (p + q)).collect()).collect()
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inv(a: &M) -> M {
        let n = a.len();
        let mut aug: M = a.iter().cloned().zip(eye(n)).map(|(mut l, r)| { l.extend(r); l }).collect();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| aug[i][c].abs().total_cmp(&aug[j][c].abs())).unwrap();
            aug.swap(c, p);
            let d = aug[c][c];
            for v in aug[c].iter_mut() {
                *v /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = aug[r][c];
                    let row_c = aug[c].clone();
                    for (v, rc) in aug[r].iter_mut().zip(row_c) {
                        *v -= f * rc;
                    }
                }
            }
        }
        aug.into_iter().map(|r| r[n..].to_vec()).collect()
    }

    pub fn col(v: &[f64]) -> M {
        v.iter().map(|&x| vec![x]).collect()
    }

    pub struct Kf {
        pub f: M,
        pub h: M,
        pub q: M,
        pub r: M,
        pub x: M,
        pub p: M,
    }

    impl Kf {
        pub fn step(&mut self, z: &[f64]) {
            // predict
            self.x = mul(&self.f, &self.x);
            self.p = sym(&add(&mul(&mul(&self.f, &self.p), &t(&self.f)), &self.q, 1.0));
            // update
            let s = add(&mul(&mul(&self.h, &self.p), &t(&self.h)), &self.r, 1.0);
            let k = mul(&mul(&self.p, &t(&self.h)), &inv(&sym(&s)));
            let nu = add(&col(z), &mul(&self.h, &self.x), -1.0);
            self.x = add(&self.x, &mul(&k, &nu), 1.0);
            let ikh = add(&eye(self.p.len()), &mul(&k, &self.h), -1.0);
            self.p = sym(&mul(&ikh, &self.p));
        }
    }
}

/// Straight transcription of the cross-correlation sum, one output at a time.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    x: &[f64],
    (n, h, w, cin): (usize, usize, usize, usize),
    k: &[f64],
    (kh, kw, cout): (usize, usize, usize),
    bias: &[f64],
    same: bool,
) -> (Vec<f64>, usize, usize) {
    let (pt, pl) = if same { ((kh - 1) / 2, (kw - 1) / 2) } else { (0, 0) };
    let (ho, wo) = if same { (h, w) } else { (h - kh + 1, w - kw + 1) };
    let mut out = vec![0.0; n * ho * wo * cout];
    for b in 0..n {
        for i in 0..ho {
            for j in 0..wo {
                for o in 0..cout {
                    let mut s = bias[o];
                    for m in 0..kh {
                        for q in 0..kw {
                            let ii = i as isize + m as isize - pt as isize;
                            let jj = j as isize + q as isize - pl as isize;
                            if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                continue;
                            }
                            for c in 0..cin {
                                let xv = x[((b * h + ii as usize) * w + jj as usize) * cin + c];
                                s += xv * k[((m * kw + q) * cin + c) * cout + o];
                            }
                        }
                    }
                    out[((b * ho + i) * wo + j) * cout + o] = s;
                }
            }
        }
    }
    (out, ho, wo)
}

pub fn naive_dense(x: &[f64], w: &[f64], b: &[f64], n: usize, din: usize, dout: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 0..n {
        for o in 0..dout {
            let mut s = b[o];
            for i in 0..din {
                s += w[o * din + i] * x[r * din + i];
            }
            out.push(s);
        }
    }
    out
}

pub fn naive_pool(x: &[f64], n: usize, l: usize, c: usize, pool: usize, stride: usize) -> Vec<f64> {
    let p = if pool > l { l } else { pool };
    let mut out = Vec::new();
    for b in 0..n {
        let mut start = 0;
        loop {
            let end = std::cmp::min(start + p, l);
            for ch in 0..c {
                let m = (start..end).map(|t| x[(b * l + t) * c + ch]).fold(f64::NEG_INFINITY, f64::max);
                out.push(m);
            }
            if start + p >= l {
                break;
            }
            start += stride;
        }
    }
    out
}


pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a trajectory of the constant-acceleration model and its noisy
/// duplicated-speed measurements.
pub fn simulate_linear(steps: usize, q_diag: [f64; 2], r_diag: [f64; 2], seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = 10.0;
    let mut a = 0.0;
    (0..steps)
        .map(|_| {
            v += a;
            v += q_diag[0].sqrt() * normal(&mut rng);
            a += q_diag[1].sqrt() * normal(&mut rng);
            DVector::from_column_slice(&[v + r_diag[0].sqrt() * normal(&mut rng), v + r_diag[1].sqrt() * normal(&mut rng)])
        })
        .collect()
}

pub fn ca_model(q: [f64; 2], r: [f64; 2]) -> FilterModel {
    let cfg = AkfConfig { q_init: q, r_init: r, ..AkfConfig::default() };
    cfg.model()
}

/// Mean adapted R diagonal over steps 500..1000 of R-only covariance
/// matching with the true Q, starting from R = I.
pub fn recovered_r(seed: u64) -> [f64; 2] {
    let q_true = [0.01, 1e-4];
    let zs = simulate_linear(1000, q_true, [0.25, 1.0], seed);
    let mut model = ca_model(q_true, [1.0, 1.0]);
    let mut state = FilterState::new(
        DVector::from_column_slice(&[zs[0][0], 0.0]),
        DMatrix::from_diagonal(&DVector::from_column_slice(&[10.0, 1.0])),
    );
    let mut adapt = AdaptationState::new(AdaptationMode::CovarianceMatching, 50, 2);
    let u = DVector::zeros(1);
    let mut mean = [0.0; 2];
    for (k, z) in zs.iter().enumerate() {
        let prior = predict(&model, &state, &u).unwrap();
        let out = update(&model, &prior, z).unwrap();
        state = out.state;
        adapt.push(out.innovation.nu.clone());
        model.r = adapt_covariance_matching(&mut adapt, &model, &out.gain, &prior.p).unwrap().r;
        if k >= 500 {
            mean[0] += model.r[(0, 0)] / 500.0;
            mean[1] += model.r[(1, 1)] / 500.0;
        }
    }
    mean
}

