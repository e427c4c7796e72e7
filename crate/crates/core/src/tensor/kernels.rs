//! Raw forward and backward kernels over flat HWC buffers.
//!
//! These functions do no shape validation beyond debug assertions; the
//! checked entry points live on [`Graph`](super::Graph).

use serde::{Deserialize, Serialize};

/// Geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Input coordinate for output coordinate `o` and kernel tap `k`, if it
    /// falls inside the unpadded input.
    #[inline]
    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.padding)
            .filter(|&i| i < limit)
    }
}

pub fn conv2d_forward(
    geo: &ConvGeometry,
    input: &[f64],
    kernels: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (oh, ow) = (geo.out_height(), geo.out_width());
    let (cin, cout, k) = (geo.in_channels, geo.out_channels, geo.kernel);
    debug_assert_eq!(input.len(), geo.height * geo.width * cin);
    debug_assert_eq!(kernels.len(), k * k * cin * cout);
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * cout..][..cout];
            o.copy_from_slice(bias);
            for ky in 0..k {
                let Some(iy) = geo.source(oy, ky, geo.height) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = geo.source(ox, kx, geo.width) else {
                        continue;
                    };
                    let xin = &input[(iy * geo.width + ix) * cin..][..cin];
                    let kbase = (ky * k + kx) * cin * cout;
                    for (ci, &xv) in xin.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let krow = &kernels[kbase + ci * cout..][..cout];
                        for (acc, &kv) in o.iter_mut().zip(krow) {
                            *acc += xv * kv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d_input, d_kernels, d_bias)`.
pub fn conv2d_backward(
    geo: &ConvGeometry,
    input: &[f64],
    kernels: &[f64],
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (oh, ow) = (geo.out_height(), geo.out_width());
    let (cin, cout, k) = (geo.in_channels, geo.out_channels, geo.kernel);
    let mut d_input = vec![0.0; input.len()];
    let mut d_kernels = vec![0.0; kernels.len()];
    let mut d_bias = vec![0.0; cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let g = &grad_out[(oy * ow + ox) * cout..][..cout];
            for (db, &gv) in d_bias.iter_mut().zip(g) {
                *db += gv;
            }
            for ky in 0..k {
                let Some(iy) = geo.source(oy, ky, geo.height) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = geo.source(ox, kx, geo.width) else {
                        continue;
                    };
                    let ibase = (iy * geo.width + ix) * cin;
                    let kbase = (ky * k + kx) * cin * cout;
                    for ci in 0..cin {
                        let xv = input[ibase + ci];
                        let krow = &kernels[kbase + ci * cout..][..cout];
                        let dkrow = &mut d_kernels[kbase + ci * cout..][..cout];
                        let mut dx = 0.0;
                        for co in 0..cout {
                            dkrow[co] += xv * g[co];
                            dx += krow[co] * g[co];
                        }
                        d_input[ibase + ci] += dx;
                    }
                }
            }
        }
    }
    (d_input, d_kernels, d_bias)
}

/// Max pooling over `window × window` patches. Returns the pooled values
/// and, for every output cell, the flat input index of the first maximum
/// in row-major scan order.
pub fn maxpool_forward(
    input: &[f64],
    height: usize,
    width: usize,
    channels: usize,
    window: usize,
    stride: usize,
) -> (Vec<f64>, Vec<usize>, usize, usize) {
    let oh = (height - window) / stride + 1;
    let ow = (width - window) / stride + 1;
    let mut out = vec![f64::NEG_INFINITY; oh * ow * channels];
    let mut argmax = vec![0usize; oh * ow * channels];
    for oy in 0..oh {
        for ox in 0..ow {
            let obase = (oy * ow + ox) * channels;
            for ky in 0..window {
                for kx in 0..window {
                    let ibase = ((oy * stride + ky) * width + ox * stride + kx) * channels;
                    for c in 0..channels {
                        let v = input[ibase + c];
                        // strict comparison keeps the first maximum on ties
                        if v > out[obase + c] {
                            out[obase + c] = v;
                            argmax[obase + c] = ibase + c;
                        }
                    }
                }
            }
        }
    }
    (out, argmax, oh, ow)
}

/// Cross-channel local response normalization parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub size: usize,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            size: 5,
            k: 2.0,
            alpha: 1e-4,
            beta: 0.75,
        }
    }
}

impl LrnParams {
    /// Channel range `[lo, hi]` summed for channel `c`, clipped to valid channels.
    #[inline]
    pub fn window(&self, c: usize, channels: usize) -> (usize, usize) {
        let half = self.size / 2;
        (c.saturating_sub(half), (c + half).min(channels - 1))
    }
}

/// Returns the output and the per-element denominators `k + alpha * sum(x^2)`.
pub fn lrn_forward(input: &[f64], channels: usize, p: &LrnParams) -> (Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; input.len()];
    let mut denom = vec![0.0; input.len()];
    for (pix, (o, d)) in input.chunks_exact(channels).zip(
        out.chunks_exact_mut(channels)
            .zip(denom.chunks_exact_mut(channels)),
    ) {
        for c in 0..channels {
            let (lo, hi) = p.window(c, channels);
            let ss: f64 = pix[lo..=hi].iter().map(|v| v * v).sum();
            d[c] = p.k + p.alpha * ss;
            o[c] = pix[c] * d[c].powf(-p.beta);
        }
    }
    (out, denom)
}

pub fn lrn_backward(
    input: &[f64],
    denom: &[f64],
    grad_out: &[f64],
    channels: usize,
    p: &LrnParams,
) -> Vec<f64> {
    let mut d_input = vec![0.0; input.len()];
    let mut scratch = vec![0.0; channels];
    for ((x, d), (g, dx)) in input
        .chunks_exact(channels)
        .zip(denom.chunks_exact(channels))
        .zip(
            grad_out
                .chunks_exact(channels)
                .zip(d_input.chunks_exact_mut(channels)),
        )
    {
        for c in 0..channels {
            scratch[c] = g[c] * x[c] * d[c].powf(-p.beta - 1.0);
        }
        for j in 0..channels {
            // the window relation is symmetric: j in win(c) iff c in win(j)
            let (lo, hi) = p.window(j, channels);
            let cross: f64 = scratch[lo..=hi].iter().sum();
            dx[j] = g[j] * d[j].powf(-p.beta) - 2.0 * p.alpha * p.beta * x[j] * cross;
        }
    }
    d_input
}

/// `out[p, o] = sum_i w[p', o, i] * x[p, i] + b[p'', o]` where `p'`/`p''`
/// are `p` for per-position parameters and `0` for shared ones.
pub fn positionwise_linear_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    positions: usize,
    din: usize,
    dout: usize,
) -> Vec<f64> {
    let w_shared = w.len() == dout * din;
    let b_shared = b.len() == dout;
    let mut out = vec![0.0; positions * dout];
    for p in 0..positions {
        let xp = &x[p * din..][..din];
        let wp = if w_shared {
            w
        } else {
            &w[p * dout * din..][..dout * din]
        };
        let bp = if b_shared { b } else { &b[p * dout..][..dout] };
        let op = &mut out[p * dout..][..dout];
        for o in 0..dout {
            let row = &wp[o * din..][..din];
            op[o] = bp[o] + row.iter().zip(xp).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

/// Returns `(d_x, d_w, d_b)` for [`positionwise_linear_forward`].
pub fn positionwise_linear_backward(
    x: &[f64],
    w: &[f64],
    b_len: usize,
    grad_out: &[f64],
    positions: usize,
    din: usize,
    dout: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let w_shared = w.len() == dout * din;
    let b_shared = b_len == dout;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; b_len];
    for p in 0..positions {
        let xp = &x[p * din..][..din];
        let woff = if w_shared { 0 } else { p * dout * din };
        let boff = if b_shared { 0 } else { p * dout };
        let gp = &grad_out[p * dout..][..dout];
        let dxp = &mut dx[p * din..][..din];
        for o in 0..dout {
            let g = gp[o];
            db[boff + o] += g;
            let row = &w[woff + o * din..][..din];
            let drow = &mut dw[woff + o * din..][..din];
            for i in 0..din {
                drow[i] += g * xp[i];
                dxp[i] += g * row[i];
            }
        }
    }
    (dx, dw, db)
}
