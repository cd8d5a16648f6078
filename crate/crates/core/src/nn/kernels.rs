//! Batched channel-last kernels. Convolution is cross-correlation with
//! stride 1, lowered to im2col + GEMM.

use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output keeps the input's spatial size. Odd padding totals put the
    /// extra zero after the data.
    Same,
    Valid,
}

/// Geometry of one batched 2-D convolution over `(n, h, w, cin)` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeometry {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        h: usize,
        w: usize,
        cin: usize,
        kh: usize,
        kw: usize,
        cout: usize,
        padding: Padding,
    ) -> Result<Self> {
        if kh == 0 || kw == 0 || cin == 0 || cout == 0 {
            return Err(Error::Dimension("convolution dimensions must be positive".into()));
        }
        let (pad_top, pad_left, ho, wo) = match padding {
            Padding::Same => ((kh - 1) / 2, (kw - 1) / 2, h, w),
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(Error::Dimension(format!(
                        "kernel ({kh},{kw}) larger than padded input ({h},{w})"
                    )));
                }
                (0, 0, h - kh + 1, w - kw + 1)
            }
        };
        if h == 0 || w == 0 {
            return Err(Error::Dimension("empty convolution input".into()));
        }
        Ok(ConvGeometry { n, h, w, cin, kh, kw, cout, pad_top, pad_left, ho, wo })
    }

    pub fn rows(&self) -> usize {
        self.n * self.ho * self.wo
    }

    /// Length of one im2col row: `kh * kw * cin`.
    pub fn patch(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    pub fn input_len(&self) -> usize {
        self.n * self.h * self.w * self.cin
    }

    /// Calls `f(col_offset, input_offset)` for every in-bounds patch slice.
    fn for_each_patch(&self, mut f: impl FnMut(usize, usize)) {
        let patch = self.patch();
        for b in 0..self.n {
            for i in 0..self.ho {
                for j in 0..self.wo {
                    let row = (b * self.ho + i) * self.wo + j;
                    for m in 0..self.kh {
                        let ii = (i + m) as isize - self.pad_top as isize;
                        if ii < 0 || ii >= self.h as isize {
                            continue;
                        }
                        for q in 0..self.kw {
                            let jj = (j + q) as isize - self.pad_left as isize;
                            if jj < 0 || jj >= self.w as isize {
                                continue;
                            }
                            let col = row * patch + (m * self.kw + q) * self.cin;
                            let src = ((b * self.h + ii as usize) * self.w + jj as usize) * self.cin;
                            f(col, src);
                        }
                    }
                }
            }
        }
    }
}

pub fn im2col(input: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let mut cols = vec![0.0; g.rows() * g.patch()];
    let c = g.cin;
    g.for_each_patch(|col, src| cols[col..col + c].copy_from_slice(&input[src..src + c]));
    cols
}

pub fn col2im(dcols: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let mut dx = vec![0.0; g.input_len()];
    let c = g.cin;
    g.for_each_patch(|col, src| {
        for (d, s) in dx[src..src + c].iter_mut().zip(&dcols[col..col + c]) {
            *d += s;
        }
    });
    dx
}

/// Weight layout `(kh, kw, cin, cout)`. Returns the output
/// `(n, ho, wo, cout)` and the im2col matrix for the backward pass.
pub fn conv_forward(input: &[f64], weight: &[f64], bias: &[f64], g: &ConvGeometry) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(input, g);
    let rows = g.rows();
    let mut out = Vec::with_capacity(rows * g.cout);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    gemm(rows, g.patch(), g.cout, &cols, false, weight, false, 1.0, &mut out);
    (out, cols)
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub fn conv_backward(
    gout: &[f64],
    cols: &[f64],
    weight: &[f64],
    g: &ConvGeometry,
    wgrad: &mut [f64],
    bgrad: &mut [f64],
) -> Vec<f64> {
    let rows = g.rows();
    let k = g.patch();
    gemm(k, rows, g.cout, cols, true, gout, false, 1.0, wgrad);
    for row in gout.chunks_exact(g.cout) {
        for (b, v) in bgrad.iter_mut().zip(row) {
            *b += v;
        }
    }
    let mut dcols = vec![0.0; rows * k];
    gemm(rows, g.cout, k, gout, false, weight, true, 0.0, &mut dcols);
    col2im(&dcols, g)
}

/// `x (n, din) · Wᵀ + b` with `W` stored `(dout, din)`.
pub fn dense_forward(x: &[f64], weight: &[f64], bias: &[f64], n: usize, din: usize, dout: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dout);
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    gemm(n, din, dout, x, false, weight, true, 1.0, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward(
    gout: &[f64],
    x: &[f64],
    weight: &[f64],
    n: usize,
    din: usize,
    dout: usize,
    wgrad: &mut [f64],
    bgrad: &mut [f64],
) -> Vec<f64> {
    gemm(dout, n, din, gout, true, x, false, 1.0, wgrad);
    for row in gout.chunks_exact(dout) {
        for (b, v) in bgrad.iter_mut().zip(row) {
            *b += v;
        }
    }
    let mut dx = vec![0.0; n * din];
    gemm(n, dout, din, gout, false, weight, false, 0.0, &mut dx);
    dx
}

/// Output length of a clamped 1-D max pool: the pool shrinks to `len` when
/// it would not fit, and a trailing partial window is kept. Needs
/// `stride <= pool` so every window starts inside the input.
pub fn pooled_len(len: usize, pool: usize, stride: usize) -> usize {
    let p = pool.min(len);
    (len - p).div_ceil(stride) + 1
}

/// Max pool over `(n, l, c)`. Returns the output and, per output element,
/// the flat input index of its (first) maximum.
pub fn max_pool1d_forward(x: &[f64], n: usize, l: usize, c: usize, pool: usize, stride: usize) -> (Vec<f64>, Vec<usize>) {
    let p = pool.min(l);
    let lo = pooled_len(l, pool, stride);
    let mut out = Vec::with_capacity(n * lo * c);
    let mut arg = Vec::with_capacity(n * lo * c);
    for b in 0..n {
        for i in 0..lo {
            let start = i * stride;
            let end = (start + p).min(l);
            for ch in 0..c {
                let mut best = (b * l + start) * c + ch;
                for t in start + 1..end {
                    let idx = (b * l + t) * c + ch;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Per-channel maximum over the time axis of `(n, l, c)`.
pub fn global_max_pool_forward(x: &[f64], n: usize, l: usize, c: usize) -> (Vec<f64>, Vec<usize>) {
    max_pool1d_forward(x, n, l, c, l, l.max(1))
}

/// Routes pooled gradients back to their argmax positions.
pub fn scatter_argmax(gout: &[f64], arg: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (g, &i) in gout.iter().zip(arg) {
        dx[i] += g;
    }
    dx
}
