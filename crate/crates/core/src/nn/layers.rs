//! Per-sample kernels for the layer types used by the network. Activations
//! are stored `[length][width][channels]`, row-major.

use super::gemm::{gemm, gemm_acc, View};

/// Stride-1 convolution with "same" padding along both axes. Even kernel
/// extents pad one more sample after than before.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
}

impl Conv {
    pub fn new(kh: usize, kw: usize, cin: usize, cout: usize) -> Self {
        Self { kh, kw, cin, cout }
    }

    /// Rows of the weight matrix, `kh * kw * cin`.
    pub fn fan_in(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    pub fn weight_len(&self) -> usize {
        self.fan_in() * self.cout
    }

    /// Each kernel tap as one matrix product over a run of positions:
    /// `(tap, first input position, first output position, rows, position stride)`.
    fn tap_blocks(&self, len: usize, width: usize) -> Vec<(usize, usize, usize, usize, usize)> {
        let (pt, pl) = ((self.kh - 1) / 2, (self.kw - 1) / 2);
        let mut out = Vec::with_capacity(self.kh * self.kw * width);
        for i in 0..self.kh {
            let (lo, hi) = (pt.saturating_sub(i), len.min(len + pt - i));
            if lo >= hi {
                continue;
            }
            let src_row = (lo + i - pt) * width;
            for j in 0..self.kw {
                let tap = i * self.kw + j;
                if j == pl {
                    out.push((tap, src_row, lo * width, (hi - lo) * width, 1));
                } else {
                    for w in 0..width {
                        let sw = (w + j).wrapping_sub(pl);
                        if sw < width {
                            out.push((tap, src_row + sw, lo * width + w, hi - lo, width));
                        }
                    }
                }
            }
        }
        out
    }

    /// `out = conv(x) + bias`.
    pub fn forward(&self, x: &[f64], len: usize, width: usize, weight: &[f64], bias: &[f64], out: &mut [f64]) {
        let (cin, cout) = (self.cin, self.cout);
        for row in out[..len * width * cout].chunks_exact_mut(cout) {
            row.copy_from_slice(bias);
        }
        for (tap, src, dst, m, st) in self.tap_blocks(len, width) {
            let va = View { off: src * cin, rs: st * cin, cs: 1 };
            let vw = View::row_major(tap * cin * cout, cout);
            let vo = View { off: dst * cout, rs: st * cout, cs: 1 };
            gemm_acc(m, cin, cout, x, va, weight, vw, out, vo);
        }
    }

    /// Accumulate weight and bias gradients and, when requested, the input
    /// gradient (`gx` is added to, not overwritten).
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[f64],
        len: usize,
        width: usize,
        weight: &[f64],
        gout: &[f64],
        gweight: &mut [f64],
        gbias: &mut [f64],
        mut gx: Option<&mut [f64]>,
    ) {
        let (cin, cout) = (self.cin, self.cout);
        for row in gout[..len * width * cout].chunks_exact(cout) {
            for (b, g) in gbias.iter_mut().zip(row) {
                *b += g;
            }
        }
        for (tap, src, dst, m, st) in self.tap_blocks(len, width) {
            let va = View { off: src * cin, rs: st * cin, cs: 1 };
            let vw = View::row_major(tap * cin * cout, cout);
            let vg = View { off: dst * cout, rs: st * cout, cs: 1 };
            gemm_acc(cin, m, cout, x, va.t(), gout, vg, gweight, vw);
            if let Some(gx) = gx.as_deref_mut() {
                gemm_acc(m, cout, cin, gout, vg, weight, vw.t(), gx, va);
            }
        }
    }
}

/// `p x 1` max pooling along the length axis. `argmax` receives the input
/// offset of each selected element; ties keep the first.
pub fn maxpool_forward(x: &[f64], len: usize, inner: usize, p: usize, out: &mut [f64], argmax: &mut [u32]) {
    let out_len = len / p;
    for l in 0..out_len {
        for e in 0..inner {
            let mut best = (l * p) * inner + e;
            for q in 1..p {
                let idx = (l * p + q) * inner + e;
                if x[idx] > x[best] {
                    best = idx;
                }
            }
            out[l * inner + e] = x[best];
            argmax[l * inner + e] = best as u32;
        }
    }
}

pub fn maxpool_backward(gout: &[f64], argmax: &[u32], gx: &mut [f64]) {
    gx.fill(0.0);
    for (g, &i) in gout.iter().zip(argmax) {
        gx[i as usize] += g;
    }
}

/// Nearest-neighbour `p x 1` upsampling along the length axis.
pub fn upsample_forward(x: &[f64], len: usize, inner: usize, p: usize, out: &mut [f64]) {
    for l in 0..len {
        let src = &x[l * inner..(l + 1) * inner];
        for q in 0..p {
            out[(l * p + q) * inner..(l * p + q + 1) * inner].copy_from_slice(src);
        }
    }
}

pub fn upsample_backward(gout: &[f64], len: usize, inner: usize, p: usize, gx: &mut [f64]) {
    for l in 0..len {
        let dst = &mut gx[l * inner..(l + 1) * inner];
        dst.copy_from_slice(&gout[(l * p) * inner..(l * p + 1) * inner]);
        for q in 1..p {
            for (d, g) in dst.iter_mut().zip(&gout[(l * p + q) * inner..(l * p + q + 1) * inner]) {
                *d += g;
            }
        }
    }
}

pub fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zero the gradient wherever the ReLU output was clamped.
pub fn relu_backward_inplace(out: &[f64], g: &mut [f64]) {
    for (gi, &o) in g.iter_mut().zip(out) {
        if o <= 0.0 {
            *gi = 0.0;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of one row via the max-shifted exponentials; returns `log-sum-exp`.
pub fn softmax_row(logits: &[f64], out: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    max + sum.ln()
}

/// `out[b, :] = x[b, :] * W + bias` for a batch of rows.
pub fn dense_forward(x: &[f64], rows: usize, fan_in: usize, weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let fan_out = bias.len();
    for row in out[..rows * fan_out].chunks_exact_mut(fan_out) {
        row.copy_from_slice(bias);
    }
    gemm(rows, fan_in, fan_out, x, false, weight, false, 1.0, out);
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward(
    x: &[f64],
    rows: usize,
    fan_in: usize,
    weight: &[f64],
    gout: &[f64],
    gweight: &mut [f64],
    gbias: &mut [f64],
    gx: Option<&mut [f64]>,
) {
    let fan_out = gbias.len();
    gemm(fan_in, rows, fan_out, x, true, gout, false, 1.0, gweight);
    for row in gout[..rows * fan_out].chunks_exact(fan_out) {
        for (b, g) in gbias.iter_mut().zip(row) {
            *b += g;
        }
    }
    if let Some(gx) = gx {
        gemm(rows, fan_out, fan_in, gout, false, weight, true, 0.0, gx);
    }
}
