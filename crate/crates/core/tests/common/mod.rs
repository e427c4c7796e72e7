//! Naive reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidage::data::{generate_synthetic, Dataset, SyntheticSpec};
use vidage::network::{ModelConfig, ModelParams, Variant};
use vidage::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Zero-padded 2-D convolution over HWC data with `[K, K, Cin, Cout]` kernels.
#[allow(clippy::too_many_arguments)]
pub fn conv_oracle(
    x: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    kern: &[f64],
    k: usize,
    cout: usize,
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut acc = bias[co];
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            let xv = x[((iy as usize) * w + ix as usize) * cin + ci];
                            acc += xv * kern[((ky * k + kx) * cin + ci) * cout + co];
                        }
                    }
                }
                out[(oy * ow + ox) * cout + co] = acc;
            }
        }
    }
    (out, oh, ow)
}

pub fn pool_oracle(
    x: &[f64],
    h: usize,
    w: usize,
    c: usize,
    win: usize,
    stride: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h - win) / stride + 1;
    let ow = (w - win) / stride + 1;
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..win {
                    for kx in 0..win {
                        best = best.max(x[((oy * stride + ky) * w + ox * stride + kx) * c + ch]);
                    }
                }
                out[(oy * ow + ox) * c + ch] = best;
            }
        }
    }
    (out, oh, ow)
}

pub fn lrn_oracle(x: &[f64], c: usize, size: usize, k: f64, alpha: f64, beta: f64) -> Vec<f64> {
    let half = size as isize / 2;
    let mut out = vec![0.0; x.len()];
    for p in 0..x.len() / c {
        for ch in 0..c {
            let mut ss = 0.0;
            for j in (ch as isize - half)..=(ch as isize + half) {
                if j >= 0 && (j as usize) < c {
                    ss += x[p * c + j as usize].powi(2);
                }
            }
            out[p * c + ch] = x[p * c + ch] / (k + alpha * ss).powf(beta);
        }
    }
    out
}

/// `w: [dout, din]`.
pub fn linear_oracle(w: &[f64], x: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let din = x.len();
    let dout = w.len() / din;
    (0..dout)
        .map(|o| {
            let mut acc = b.map_or(0.0, |b| b[o]);
            for i in 0..din {
                acc += w[o * din + i] * x[i];
            }
            acc
        })
        .collect()
}

pub fn relu(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

/// Attention weights for `f: [M·N, C]` from tensors shaped
/// `[P1, d, C]`, `[P1, d]`, `[P2, 1, d]`, `[1, 1]`.
pub fn spatial_oracle(
    f: &[f64],
    positions: usize,
    c: usize,
    hidden: usize,
    w1: &[f64],
    b1: &[f64],
    u: &[f64],
    cb: f64,
) -> Vec<f64> {
    let w1_indexed = w1.len() == positions * hidden * c && positions > 1;
    let b1_indexed = b1.len() == positions * hidden && positions > 1;
    let u_indexed = u.len() == positions * hidden && positions > 1;
    (0..positions)
        .map(|p| {
            let wo = if w1_indexed { p * hidden * c } else { 0 };
            let bo = if b1_indexed { p * hidden } else { 0 };
            let uo = if u_indexed { p * hidden } else { 0 };
            let mut logit = cb;
            for k in 0..hidden {
                let mut a = b1[bo + k];
                for ch in 0..c {
                    a += w1[wo + k * c + ch] * f[p * c + ch];
                }
                logit += u[uo + k] * a.tanh();
            }
            sigmoid(logit)
        })
        .collect()
}

/// Straight-line evaluation of the whole model from its raw tensors.
pub fn model_oracle(params: &ModelParams, frames: &[Tensor]) -> f64 {
    let cfg = params.config();
    let a = &cfg.appearance;
    assert!(!a.attention_after_pool);
    let t = params.tensors();
    let idx = params.index();
    let lrn = |x: &[f64], c: usize| lrn_oracle(x, c, a.lrn.size, a.lrn.k, a.lrn.alpha, a.lrn.beta);
    let gate = |x: &mut Vec<f64>, hw: usize, c: usize| {
        if let Some(s) = idx.spatial {
            let w = spatial_oracle(
                x,
                hw * hw,
                c,
                cfg.spatial.hidden,
                t[s.weight].data(),
                t[s.bias].data(),
                t[s.fusion].data(),
                t[s.fusion_bias].data()[0],
            );
            for p in 0..hw * hw {
                for ch in 0..c {
                    x[p * c + ch] *= w[p];
                }
            }
        }
    };
    let mut features = Vec::new();
    for frame in frames {
        let s = a.input_size;
        let (c1, c2, c3) = (
            a.conv1.out_channels,
            a.conv2.out_channels,
            a.conv3.out_channels,
        );
        let (mut x, h1, _) = conv_oracle(
            frame.data(),
            s,
            s,
            1,
            t[idx.conv1.kernels].data(),
            a.conv1.kernel,
            c1,
            t[idx.conv1.bias].data(),
            a.conv1.stride,
            a.conv1.padding,
        );
        relu(&mut x);
        if a.attention_layer == 1 {
            gate(&mut x, h1, c1);
        }
        let x = lrn(&x, c1);
        let (x, p1, _) = pool_oracle(&x, h1, h1, c1, a.pool.window, a.pool.stride);
        let (mut x, h2, _) = conv_oracle(
            &x,
            p1,
            p1,
            c1,
            t[idx.conv2.kernels].data(),
            a.conv2.kernel,
            c2,
            t[idx.conv2.bias].data(),
            a.conv2.stride,
            a.conv2.padding,
        );
        relu(&mut x);
        if a.attention_layer == 2 {
            gate(&mut x, h2, c2);
        }
        let x = lrn(&x, c2);
        let (x, p2, _) = pool_oracle(&x, h2, h2, c2, a.pool.window, a.pool.stride);
        let (mut x, h3, _) = conv_oracle(
            &x,
            p2,
            p2,
            c2,
            t[idx.conv3.kernels].data(),
            a.conv3.kernel,
            c3,
            t[idx.conv3.bias].data(),
            a.conv3.stride,
            a.conv3.padding,
        );
        relu(&mut x);
        if a.attention_layer == 3 {
            gate(&mut x, h3, c3);
        }
        let mut h = linear_oracle(t[idx.fc1.weight].data(), &x, Some(t[idx.fc1.bias].data()));
        relu(&mut h);
        let mut p = linear_oracle(t[idx.fc2.weight].data(), &h, Some(t[idx.fc2.bias].data()));
        relu(&mut p);
        features.push(p);
    }
    let k = t[idx.regressor.weight].data();
    let b = t[idx.regressor.bias].data();
    if cfg.variant == Variant::CnnOnly {
        let sum: f64 = features
            .iter()
            .map(|p| linear_oracle(k, p, Some(b))[0])
            .sum();
        return sum / features.len() as f64;
    }
    let rnn = idx.rnn.unwrap();
    let n = cfg.hidden_units;
    let mut prev = [vec![0.0; n], vec![0.0; n]];
    let mut states = Vec::new();
    for p in &features {
        let mut input = p.clone();
        for (layer, li) in rnn.iter().enumerate() {
            let mut z = linear_oracle(t[li.input].data(), &input, Some(t[li.bias].data()));
            let rec = linear_oracle(t[li.recurrent].data(), &prev[layer], None);
            for (a, r) in z.iter_mut().zip(rec) {
                *a += r;
            }
            relu(&mut z);
            prev[layer] = z.clone();
            input = z;
        }
        states.push(input);
    }
    let o: Vec<f64> = match idx.temporal {
        Some(ti) => {
            let e: Vec<f64> = states
                .iter()
                .map(|z| {
                    let mut h = linear_oracle(t[ti.weight].data(), z, Some(t[ti.bias].data()));
                    for v in &mut h {
                        *v = v.tanh();
                    }
                    sigmoid(
                        linear_oracle(t[ti.fusion].data(), &h, Some(t[ti.fusion_bias].data()))[0],
                    )
                })
                .collect();
            let total: f64 = e.iter().sum();
            e.iter().map(|v| v / total).collect()
        }
        None => vec![1.0 / states.len() as f64; states.len()],
    };
    let mut s = vec![0.0; n];
    for (z, ot) in states.iter().zip(&o) {
        for (acc, v) in s.iter_mut().zip(z) {
            *acc += ot * v;
        }
    }
    linear_oracle(k, &s, Some(b))[0]
}

/// Random frames in `[0, 1]`.
pub fn random_frames(count: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    (0..count)
        .map(|_| {
            Tensor::new(
                [size, size, 1],
                (0..size * size)
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect(),
            )
            .unwrap()
        })
        .collect()
}

/// Overwrites every tensor with uniform values in `±scale` (biases included).
pub fn randomize(params: &mut ModelParams, scale: f64, seed: u64) {
    let mut r = rng(seed);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = r.random_range(-scale..scale);
        }
    }
}

pub fn small_dataset(subjects: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        n_subjects: subjects,
        videos_per_subject: 1,
        min_frames: 3,
        max_frames: 4,
        seed,
        ..Default::default()
    })
    .unwrap()
}

pub fn toy(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        ..ModelConfig::toy()
    }
}

/// Finite-difference comparison for one parameter tensor.
#[derive(Debug)]
pub struct FdReport {
    pub name: String,
    pub checked: usize,
    /// Entries skipped because a ReLU or max kink lies within the step.
    pub kinks: usize,
    pub worst: f64,
}

fn video_loss(params: &ModelParams, frames: &[Tensor], target: f64) -> f64 {
    (params.predict_age(frames).unwrap() - target).abs()
}

/// Checks analytic gradients of `|age_hat − target|` against central
/// differences on a random `fraction` of the entries of every tensor.
pub fn model_fd(
    params: &ModelParams,
    frames: &[Tensor],
    target: f64,
    fraction: f64,
    seed: u64,
) -> Vec<FdReport> {
    use rand::seq::index::sample;
    use vidage::network::{record_forward, ForwardMode};
    use vidage::training::mae_graph;

    let mut g = vidage::Graph::new();
    let vars = params.bind(&mut g);
    let trace = record_forward(
        &mut g,
        params,
        &vars,
        frames,
        ForwardMode::eval(),
        &mut rng(0),
    )
    .unwrap();
    let loss = mae_graph(&mut g, &[trace.age], &[target]).unwrap();
    g.backward(loss).unwrap();
    let base = video_loss(params, frames, target);

    let mut r = rng(seed);
    let h = 1e-5;
    params
        .infos()
        .iter()
        .enumerate()
        .map(|(k, info)| {
            let len = params.tensors()[k].len();
            let analytic = g
                .grad(vars[k])
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; len]);
            let n = ((len as f64 * fraction).ceil() as usize).clamp(1, len);
            let mut report = FdReport {
                name: format!("{:?}.{}", info.group, info.name),
                checked: 0,
                kinks: 0,
                worst: 0.0,
            };
            for i in sample(&mut r, len, n) {
                let shifted = |delta: f64| {
                    let mut p = params.clone();
                    p.tensors_mut()[k].data_mut()[i] += delta;
                    video_loss(&p, frames, target)
                };
                let (up, down) = (shifted(h), shifted(-h));
                let (fwd, bwd) = ((up - base) / h, (base - down) / h);
                let central = (up - down) / (2.0 * h);
                let scale = fwd.abs().max(bwd.abs()).max(1e-6);
                if (fwd - bwd).abs() > 1e-3 * scale {
                    report.kinks += 1;
                    continue;
                }
                let rel =
                    (central - analytic[i]).abs() / central.abs().max(analytic[i].abs()).max(1e-6);
                report.worst = report.worst.max(rel);
                report.checked += 1;
            }
            report
        })
        .collect()
}

/// Initialized toy parameters with every bias and attention fusion weight
/// drawn from `±0.5`, so gates and scores vary across positions and frames.
pub fn well_conditioned(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut params = ModelParams::init(config, seed).unwrap();
    let mut r = rng(seed + 1);
    let infos = params.infos().to_vec();
    for (t, info) in params.tensors_mut().iter_mut().zip(infos) {
        let attention_fusion = info.name.starts_with("fusion");
        if !info.decay || attention_fusion {
            for v in t.data_mut() {
                *v = r.random_range(-0.5..0.5);
            }
        }
    }
    params
}
