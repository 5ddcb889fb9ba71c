//! Independent reference implementations shared by the integration tests.
//! Written as literal loops over the defining sums; they share no code with
//! the library kernels.
#![allow(dead_code)]

use emocircuit::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Valid cross-correlation with ReLU on `[C,D,H,W]`, stride 1, no padding.
pub fn naive_conv3d_relu(x: &Tensor, k: &Tensor, b: &Tensor) -> Vec<f64> {
    let [c, d, h, w]: [usize; 4] = x.shape().try_into().unwrap();
    let [n, _, r, kh, kw]: [usize; 5] = k.shape().try_into().unwrap();
    let (od, oh, ow) = (d - r + 1, h - kh + 1, w - kw + 1);
    let xi = |ci: usize, z: usize, y: usize, xx: usize| x.data()[((ci * d + z) * h + y) * w + xx];
    let ki = |ni: usize, ci: usize, z: usize, y: usize, xx: usize| {
        k.data()[(((ni * c + ci) * r + z) * kh + y) * kw + xx]
    };
    let mut out = Vec::new();
    for ni in 0..n {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = 0.0;
                    for ci in 0..c {
                        for dz in 0..r {
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    s += ki(ni, ci, dz, dy, dx) * xi(ci, z + dz, y + dy, xx + dx);
                                }
                            }
                        }
                    }
                    out.push((b.data()[ni] + s).max(0.0));
                }
            }
        }
    }
    out
}

/// Valid 1-D cross-correlation with ReLU on `[M, X]` against `[N, M, W]`.
pub fn naive_conv1d_relu(x: &Tensor, k: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, len) = (x.shape()[0], x.shape()[1]);
    let (n, wk) = (k.shape()[0], k.shape()[2]);
    let mut out = Vec::new();
    for ni in 0..n {
        for pos in 0..len - wk + 1 {
            let mut s = b.data()[ni];
            for mi in 0..m {
                for j in 0..wk {
                    s += k.data()[(ni * m + mi) * wk + j] * x.data()[mi * len + pos + j];
                }
            }
            out.push(s.max(0.0));
        }
    }
    out
}

/// Windowed maximum over the trailing `dims` axes of `[C, ...]`.
pub fn naive_pool(x: &Tensor, window: usize, stride: usize, dims: usize) -> Vec<f64> {
    let s = x.shape();
    let c = s[0];
    let ext: Vec<usize> = s[1..].to_vec();
    assert_eq!(ext.len(), dims);
    let outs: Vec<usize> = ext.iter().map(|e| (e - window) / stride + 1).collect();
    let strides: Vec<usize> = (0..dims).map(|a| ext[a + 1..].iter().product()).collect();
    let plane: usize = ext.iter().product();
    let total_out: usize = outs.iter().product();
    let mut res = Vec::new();
    for ci in 0..c {
        for o in 0..total_out {
            // decompose o into per-axis output coordinates
            let mut coord = vec![0; dims];
            let mut rem = o;
            for a in (0..dims).rev() {
                coord[a] = rem % outs[a];
                rem /= outs[a];
            }
            let mut best = f64::NEG_INFINITY;
            let wtotal = window.pow(dims as u32);
            for wi in 0..wtotal {
                let mut off = vec![0; dims];
                let mut r = wi;
                for a in (0..dims).rev() {
                    off[a] = r % window;
                    r /= window;
                }
                let mut idx = ci * plane;
                for a in 0..dims {
                    idx += (coord[a] * stride + off[a]) * strides[a];
                }
                best = best.max(x.data()[idx]);
            }
            res.push(best);
        }
    }
    res
}

/// `W x + b` followed by an activation given as a closure.
pub fn naive_fc(x: &[f64], w: &Tensor, b: &[f64], act: impl Fn(f64) -> f64) -> Vec<f64> {
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    (0..out)
        .map(|o| {
            let mut s = b[o];
            for i in 0..inp {
                s += w.data()[o * inp + i] * x[i];
            }
            act(s)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Lin's concordance from raw moment sums.
pub fn naive_ccc(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..x.len() {
        sx += x[i];
        sy += y[i];
    }
    let (mx, my) = (sx / n, sy / n);
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut cxy = 0.0;
    for i in 0..x.len() {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        cxy += (x[i] - mx) * (y[i] - my);
    }
    vx /= n;
    vy /= n;
    cxy /= n;
    2.0 * cxy / (vx + vy + (mx - my) * (mx - my))
}

/// Index minimizing `alpha[0]*|x-w_j|^2 + sum_k alpha[k]*|C_k - c_kj|^2`,
/// scanning in order and keeping the first minimum.
pub fn brute_force_bmu(
    x: &[f64],
    weights: &[Vec<f64>],
    contexts: &[Vec<Vec<f64>>],
    global: &[Vec<f64>],
    alpha: &[f64],
) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..weights.len() {
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        let mut d = alpha[0] * sq(x, &weights[j]);
        for k in 0..global.len() {
            d += alpha[k + 1] * sq(&global[k], &contexts[j][k]);
        }
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}
pub mod pipeline;
