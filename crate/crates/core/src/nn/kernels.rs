//! Raw forward/backward kernels on flat buffers. Spatial ops work on
//! batched 5-D layouts `[B, C, D, H, W]`; 1-D and 2-D variants are
//! expressed by the callers as degenerate 3-D shapes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stride and zero padding for the three spatial axes (depth, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvGeom {
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl Default for ConvGeom {
    fn default() -> Self {
        Self { stride: [1; 3], pad: [0; 3] }
    }
}

impl ConvGeom {
    pub fn padded(pad: [usize; 3]) -> Self {
        Self { stride: [1; 3], pad }
    }
}

const AXIS_NAMES: [&str; 3] = ["depth", "height", "width"];

pub(crate) fn conv_out_dims(
    input: [usize; 3],
    kernel: [usize; 3],
    geom: &ConvGeom,
) -> Result<[usize; 3]> {
    let mut out = [0; 3];
    for a in 0..3 {
        let padded = input[a] + 2 * geom.pad[a];
        if geom.stride[a] == 0 {
            return Err(Error::Shape(format!("zero stride on {} axis", AXIS_NAMES[a])));
        }
        if padded < kernel[a] {
            return Err(Error::Shape(format!(
                "{} axis: extent {} (padded {}) smaller than kernel {}",
                AXIS_NAMES[a], input[a], padded, kernel[a]
            )));
        }
        out[a] = (padded - kernel[a]) / geom.stride[a] + 1;
    }
    Ok(out)
}

fn dims5(t: &Tensor, what: &str) -> Result<[usize; 5]> {
    t.shape()
        .try_into()
        .map_err(|_| Error::Shape(format!("{what} must be 5-D, got {:?}", t.shape())))
}

/// Range of output positions `o` for which `o * stride + k - pad` lands in `[0, extent)`.
#[inline]
fn valid_range(out_len: usize, extent: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // o*stride + k >= pad
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // o*stride + k - pad <= extent - 1
    let hi = if extent + pad < k + 1 {
        0
    } else {
        ((extent + pad - k - 1) / stride + 1).min(out_len)
    };
    (lo, hi.max(lo))
}

/// Cross-correlation without activation. `input` is `[B,C,D,H,W]`,
/// `kernels` is `[N,C,R,Kh,Kw]`, `bias` is `[N]`.
pub fn conv3d(input: &Tensor, kernels: &Tensor, bias: &Tensor, geom: &ConvGeom) -> Result<Tensor> {
    let [b, c, d, h, w] = dims5(input, "conv input")?;
    let [n, kc, kr, kh, kw] = dims5(kernels, "conv kernels")?;
    if kc != c {
        return Err(Error::Shape(format!(
            "channel axis: input has {c} channels, kernels expect {kc}"
        )));
    }
    if bias.len() != n {
        return Err(Error::Shape(format!("bias axis: {} entries for {n} kernels", bias.len())));
    }
    let [od, oh, ow] = conv_out_dims([d, h, w], [kr, kh, kw], geom)?;
    let [sd, sh, sw] = geom.stride;
    let [pd, ph, pw] = geom.pad;
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![0.0; b * n * od * oh * ow];
    let in_plane = d * h * w;
    let out_plane = od * oh * ow;
    for bi in 0..b {
        for ni in 0..n {
            let o = &mut out[(bi * n + ni) * out_plane..(bi * n + ni + 1) * out_plane];
            o.fill(bias.data()[ni]);
            for ci in 0..c {
                let xin = &x[(bi * c + ci) * in_plane..(bi * c + ci + 1) * in_plane];
                for r in 0..kr {
                    let (dlo, dhi) = valid_range(od, d, r, sd, pd);
                    for y in 0..kh {
                        let (hlo, hhi) = valid_range(oh, h, y, sh, ph);
                        for z in 0..kw {
                            let (wlo, whi) = valid_range(ow, w, z, sw, pw);
                            let wv = k[(((ni * c + ci) * kr + r) * kh + y) * kw + z];
                            for odi in dlo..dhi {
                                let id = odi * sd + r - pd;
                                for ohi in hlo..hhi {
                                    let ih = ohi * sh + y - ph;
                                    let orow = &mut o[(odi * oh + ohi) * ow..(odi * oh + ohi + 1) * ow];
                                    let irow = &xin[(id * h + ih) * w..(id * h + ih + 1) * w];
                                    if sw == 1 {
                                        let off = wlo + z - pw;
                                        for (ov, iv) in orow[wlo..whi].iter_mut().zip(&irow[off..]) {
                                            *ov += wv * iv;
                                        }
                                    } else {
                                        for owi in wlo..whi {
                                            orow[owi] += wv * irow[owi * sw + z - pw];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[b, n, od, oh, ow], out)
}

/// Gradients of [`conv3d`] with respect to input, kernels and bias.
pub fn conv3d_backward(
    input: &Tensor,
    kernels: &Tensor,
    geom: &ConvGeom,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [b, c, d, h, w] = dims5(input, "conv input")?;
    let [n, _, kr, kh, kw] = dims5(kernels, "conv kernels")?;
    let [_, _, od, oh, ow] = dims5(grad_out, "conv output gradient")?;
    let [sd, sh, sw] = geom.stride;
    let [pd, ph, pw] = geom.pad;
    let x = input.data();
    let k = kernels.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; n];
    let in_plane = d * h * w;
    let out_plane = od * oh * ow;
    for bi in 0..b {
        for ni in 0..n {
            let go = &g[(bi * n + ni) * out_plane..(bi * n + ni + 1) * out_plane];
            gb[ni] += go.iter().sum::<f64>();
            for ci in 0..c {
                let base = (bi * c + ci) * in_plane;
                for r in 0..kr {
                    let (dlo, dhi) = valid_range(od, d, r, sd, pd);
                    for y in 0..kh {
                        let (hlo, hhi) = valid_range(oh, h, y, sh, ph);
                        for z in 0..kw {
                            let (wlo, whi) = valid_range(ow, w, z, sw, pw);
                            let kidx = (((ni * c + ci) * kr + r) * kh + y) * kw + z;
                            let wv = k[kidx];
                            let mut acc = 0.0;
                            for odi in dlo..dhi {
                                let id = odi * sd + r - pd;
                                for ohi in hlo..hhi {
                                    let ih = ohi * sh + y - ph;
                                    let grow = &go[(odi * oh + ohi) * ow..(odi * oh + ohi + 1) * ow];
                                    let ioff = base + (id * h + ih) * w;
                                    for owi in wlo..whi {
                                        let iw = owi * sw + z - pw;
                                        acc += grow[owi] * x[ioff + iw];
                                        gx[ioff + iw] += wv * grow[owi];
                                    }
                                }
                            }
                            gk[kidx] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape(), gx)?,
        Tensor::new(kernels.shape(), gk)?,
        Tensor::new(&[n], gb)?,
    ))
}

/// Max pooling over the three spatial axes of `[B,C,D,H,W]`. Returns the
/// pooled tensor and, per output element, the flat input index of its maximum.
/// Ties resolve to the lowest flat index.
pub fn max_pool3d(input: &Tensor, window: [usize; 3], stride: [usize; 3]) -> Result<(Tensor, Vec<usize>)> {
    let [b, c, d, h, w] = dims5(input, "pool input")?;
    let geom = ConvGeom { stride, pad: [0; 3] };
    for a in 0..3 {
        if window[a] == 0 {
            return Err(Error::Shape(format!("zero pooling window on {} axis", AXIS_NAMES[a])));
        }
        if window[a] > [d, h, w][a] {
            return Err(Error::Shape(format!(
                "{} axis: pooling window {} exceeds extent {}",
                AXIS_NAMES[a],
                window[a],
                [d, h, w][a]
            )));
        }
    }
    let [od, oh, ow] = conv_out_dims([d, h, w], window, &geom)?;
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * od * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for plane in 0..b * c {
        let base = plane * d * h * w;
        for odi in 0..od {
            for ohi in 0..oh {
                for owi in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for r in 0..window[0] {
                        for y in 0..window[1] {
                            for z in 0..window[2] {
                                let idx = base
                                    + ((odi * stride[0] + r) * h + ohi * stride[1] + y) * w
                                    + owi * stride[2]
                                    + z;
                                // window is scanned in increasing flat order
                                if x[idx] > best || best_i == usize::MAX {
                                    best = x[idx];
                                    best_i = idx;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    Ok((Tensor::new(&[b, c, od, oh, ow], out)?, arg))
}

/// Per-channel statistics over every axis except axis 1.
pub(crate) fn channel_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::Shape(format!("batch norm needs [B, C, ...], got {shape:?}")));
    }
    let inner: usize = shape[2..].iter().product();
    Ok((shape[0], shape[1], inner))
}

/// Result of a training-mode batch-norm forward pass.
pub struct BatchNormOut {
    pub output: Tensor,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub fn batch_norm_train(x: &Tensor, gamma: &[f64], beta: &[f64], eps: f64) -> Result<BatchNormOut> {
    let (b, c, inner) = channel_layout(x.shape())?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!("channel axis: {c} maps, gamma/beta sized {}", gamma.len())));
    }
    let m = (b * inner) as f64;
    let data = x.data();
    let at = |bi: usize, ci: usize, i: usize| (bi * c + ci) * inner + i;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ci in 0..c {
        let mut s = 0.0;
        for bi in 0..b {
            for i in 0..inner {
                s += data[at(bi, ci, i)];
            }
        }
        mean[ci] = s / m;
        let mut v = 0.0;
        for bi in 0..b {
            for i in 0..inner {
                let dlt = data[at(bi, ci, i)] - mean[ci];
                v += dlt * dlt;
            }
        }
        var[ci] = v / m;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; data.len()];
    let mut out = vec![0.0; data.len()];
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..inner {
                let j = at(bi, ci, i);
                xhat[j] = (data[j] - mean[ci]) * inv_std[ci];
                out[j] = gamma[ci] * xhat[j] + beta[ci];
            }
        }
    }
    Ok(BatchNormOut { output: Tensor::new(x.shape(), out)?, xhat, inv_std, mean, var })
}

/// Inference-mode normalization with fixed statistics.
pub fn batch_norm_infer(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
    eps: f64,
) -> Result<(Tensor, Vec<f64>)> {
    let (b, c, inner) = channel_layout(x.shape())?;
    if gamma.len() != c || mean.len() != c {
        return Err(Error::Shape(format!("channel axis: {c} maps, statistics sized {}", mean.len())));
    }
    let scale: Vec<f64> = (0..c).map(|ci| gamma[ci] / (var[ci] + eps).sqrt()).collect();
    let mut out = x.data().to_vec();
    for bi in 0..b {
        for ci in 0..c {
            let s = &mut out[(bi * c + ci) * inner..(bi * c + ci + 1) * inner];
            for v in s {
                *v = (*v - mean[ci]) * scale[ci] + beta[ci];
            }
        }
    }
    Ok((Tensor::new(x.shape(), out)?, scale))
}

/// Backward of the training-mode normalization. Returns (dx, dgamma, dbeta).
pub fn batch_norm_train_backward(
    shape: &[usize],
    gamma: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    grad_out: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (b, c, inner) = channel_layout(shape)?;
    let m = (b * inner) as f64;
    let at = |bi: usize, ci: usize, i: usize| (bi * c + ci) * inner + i;
    let mut dx = vec![0.0; grad_out.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ci in 0..c {
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for bi in 0..b {
            for i in 0..inner {
                let j = at(bi, ci, i);
                dgamma[ci] += grad_out[j] * xhat[j];
                dbeta[ci] += grad_out[j];
                let dxh = grad_out[j] * gamma[ci];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xhat[j];
            }
        }
        for bi in 0..b {
            for i in 0..inner {
                let j = at(bi, ci, i);
                let dxh = grad_out[j] * gamma[ci];
                dx[j] = inv_std[ci] / m * (m * dxh - sum_dxhat - xhat[j] * sum_dxhat_xhat);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// Affine map `x W^T + b` for `x: [B, in]`, `w: [out, in]`, `b: [out]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, inp) = match x.shape() {
        [bt, i] => (*bt, *i),
        s => return Err(Error::Shape(format!("linear input must be [B, in], got {s:?}"))),
    };
    let (out, win) = match w.shape() {
        [o, i] => (*o, *i),
        s => return Err(Error::Shape(format!("linear weights must be [out, in], got {s:?}"))),
    };
    if win != inp {
        return Err(Error::Shape(format!("feature axis: input has {inp}, weights expect {win}")));
    }
    if b.len() != out {
        return Err(Error::Shape(format!("bias axis: {} entries for {out} outputs", b.len())));
    }
    let xd = x.data();
    let wd = w.data();
    let mut y = Vec::with_capacity(batch * out);
    for bi in 0..batch {
        let row = &xd[bi * inp..(bi + 1) * inp];
        for o in 0..out {
            let wr = &wd[o * inp..(o + 1) * inp];
            let dot: f64 = row.iter().zip(wr).map(|(a, b)| a * b).sum();
            y.push(dot + b.data()[o]);
        }
    }
    Tensor::new(&[batch, out], y)
}

pub fn linear_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, inp) = (x.shape()[0], x.shape()[1]);
    let out = w.shape()[0];
    let xd = x.data();
    let wd = w.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    let mut gb = vec![0.0; out];
    for bi in 0..batch {
        let row = &xd[bi * inp..(bi + 1) * inp];
        let grow = &mut gx[bi * inp..(bi + 1) * inp];
        for o in 0..out {
            let go = g[bi * out + o];
            if go == 0.0 {
                continue;
            }
            gb[o] += go;
            let wr = &wd[o * inp..(o + 1) * inp];
            let gwr = &mut gw[o * inp..(o + 1) * inp];
            for i in 0..inp {
                grow[i] += go * wr[i];
                gwr[i] += go * row[i];
            }
        }
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(w.shape(), gw)?,
        Tensor::new(&[out], gb)?,
    ))
}

/// Floor applied to the magnitude of a shunting denominator.
pub const SHUNTING_FLOOR: f64 = 1e-6;

/// `u / (a + i)` with the denominator magnitude floored at [`SHUNTING_FLOOR`]
/// (sign preserved, zero treated as positive). Returns the output and a
/// per-element flag marking clamped denominators.
pub fn shunting(u: &Tensor, inhibition: &Tensor, decay: f64) -> Result<(Tensor, Vec<bool>)> {
    u.expect_same_shape(inhibition)?;
    let mut clamped = Vec::with_capacity(u.len());
    let out = u
        .data()
        .iter()
        .zip(inhibition.data())
        .map(|(&uv, &iv)| {
            let (den, c) = floored_denominator(decay + iv);
            clamped.push(c);
            uv / den
        })
        .collect();
    Ok((Tensor::new(u.shape(), out)?, clamped))
}

#[inline]
pub(crate) fn floored_denominator(den: f64) -> (f64, bool) {
    if den.abs() < SHUNTING_FLOOR {
        (if den < 0.0 { -SHUNTING_FLOOR } else { SHUNTING_FLOOR }, true)
    } else {
        (den, false)
    }
}

pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / s));
    }
    out
}
