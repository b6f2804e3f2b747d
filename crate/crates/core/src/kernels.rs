//! Forward kernels and their adjoints. The tape in [`crate::autodiff`] wires
//! these together; they are also usable directly on plain tensors.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Output extent of a convolution along one axis.
pub fn conv_out_len(len: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

// Range of output positions whose tap `k` lands inside `[0, len)`.
fn valid_range(len: usize, out: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    // need 0 <= o*stride + k - padding <= len - 1
    let lo = if k >= padding {
        0
    } else {
        (padding - k).div_ceil(stride)
    };
    let hi = if len + padding < k + 1 {
        0
    } else {
        ((len - 1 + padding - k) / stride + 1).min(out)
    };
    (lo, hi.max(lo))
}

pub(crate) fn check_conv<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<()> {
    let [_, ci, h, w] = input.shape();
    let [co, kci, kh, kw] = kernel.shape();
    if kci != ci {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            left: input.shape().to_vec(),
            right: kernel.shape().to_vec(),
        });
    }
    if bias.numel() != co {
        return Err(Error::ShapeMismatch {
            op: "conv2d bias",
            left: kernel.shape().to_vec(),
            right: bias.shape().to_vec(),
        });
    }
    if stride == 0 {
        return Err(invalid("conv2d", "stride must be at least 1"));
    }
    if h == 0 || w == 0 || kh == 0 || kw == 0 {
        return Err(invalid("conv2d", "empty spatial extent"));
    }
    Ok(())
}

/// 2-D cross-correlation with zero padding.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    check_conv(input, kernel, bias, stride)?;
    let [n, ci, h, w] = input.shape();
    let [co, _, kh, kw] = kernel.shape();
    let (oh, ow) = match (
        conv_out_len(h, kh, stride, padding),
        conv_out_len(w, kw, stride, padding),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "conv2d (kernel larger than padded input)",
                left: input.shape().to_vec(),
                right: kernel.shape().to_vec(),
            })
        }
    };
    let kd = kernel.data();
    let mut out = Tensor::zeros([n, co, oh, ow]);
    for b in 0..n {
        for o in 0..co {
            let plane = out.plane_mut(b, o);
            plane.fill(bias.data()[o]);
            for i in 0..ci {
                let src = input.plane(b, i);
                for ky in 0..kh {
                    let (ylo, yhi) = valid_range(h, oh, ky, stride, padding);
                    for kx in 0..kw {
                        let wv = kd[((o * ci + i) * kh + ky) * kw + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let (xlo, xhi) = valid_range(w, ow, kx, stride, padding);
                        for oy in ylo..yhi {
                            let iy = oy * stride + ky - padding;
                            let dst = &mut plane[oy * ow..(oy + 1) * ow];
                            let row = &src[iy * w..(iy + 1) * w];
                            if stride == 1 {
                                let ix0 = xlo + kx - padding;
                                for (d, &s) in dst[xlo..xhi].iter_mut().zip(&row[ix0..]) {
                                    *d += wv * s;
                                }
                            } else {
                                for ox in xlo..xhi {
                                    dst[ox] += wv * row[ox * stride + kx - padding];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `conv2d` with respect to input, kernel and bias.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [n, ci, h, w] = input.shape();
    let [co, _, kh, kw] = kernel.shape();
    let [_, _, oh, ow] = grad_out.shape();
    let kd = kernel.data();
    let mut gin = Tensor::zeros(input.shape());
    let mut gk = Tensor::zeros(kernel.shape());
    let mut gb = Tensor::zeros([1, 1, 1, co]);
    for b in 0..n {
        for o in 0..co {
            let g = grad_out.plane(b, o);
            gb.data_mut()[o] += g.iter().copied().sum::<T>();
            for i in 0..ci {
                let src = input.plane(b, i);
                for ky in 0..kh {
                    let (ylo, yhi) = valid_range(h, oh, ky, stride, padding);
                    for kx in 0..kw {
                        let kidx = ((o * ci + i) * kh + ky) * kw + kx;
                        let wv = kd[kidx];
                        let (xlo, xhi) = valid_range(w, ow, kx, stride, padding);
                        let mut acc = T::zero();
                        for oy in ylo..yhi {
                            let iy = oy * stride + ky - padding;
                            let grow = &g[oy * ow..(oy + 1) * ow];
                            let row = &src[iy * w..(iy + 1) * w];
                            if stride == 1 {
                                let ix0 = xlo + kx - padding;
                                for (&gv, &s) in grow[xlo..xhi].iter().zip(&row[ix0..]) {
                                    acc += gv * s;
                                }
                            } else {
                                for ox in xlo..xhi {
                                    acc += grow[ox] * row[ox * stride + kx - padding];
                                }
                            }
                        }
                        gk.data_mut()[kidx] += acc;
                        if wv == T::zero() {
                            continue;
                        }
                        let gi = gin.plane_mut(b, i);
                        for oy in ylo..yhi {
                            let iy = oy * stride + ky - padding;
                            let grow = &g[oy * ow..(oy + 1) * ow];
                            let dst = &mut gi[iy * w..(iy + 1) * w];
                            if stride == 1 {
                                let ix0 = xlo + kx - padding;
                                for (d, &gv) in dst[ix0..].iter_mut().zip(&grow[xlo..xhi]) {
                                    *d += wv * gv;
                                }
                            } else {
                                for ox in xlo..xhi {
                                    dst[ox * stride + kx - padding] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (gin, gk, gb)
}

/// 2x2 max pooling with stride 2. Also returns, for every output cell, the flat
/// in-plane index of the winning input (first in scan order on ties).
pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let [n, c, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddSpatial { h, w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = (2 * oy) * w + 2 * ox;
                    for idx in [
                        (2 * oy) * w + 2 * ox + 1,
                        (2 * oy + 1) * w + 2 * ox,
                        (2 * oy + 1) * w + 2 * ox + 1,
                    ] {
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    dst[oy * ow + ox] = src[best];
                    arg.push(best as u32);
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2_backward<T: Real>(
    input_shape: [usize; 4],
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, _, _] = input_shape;
    let mut gin = Tensor::zeros(input_shape);
    let per = grad_out.h() * grad_out.w();
    for b in 0..n {
        for ch in 0..c {
            let g = grad_out.plane(b, ch);
            let base = (b * c + ch) * per;
            let dst = gin.plane_mut(b, ch);
            for (k, &gv) in g.iter().enumerate() {
                dst[argmax[base + k] as usize] += gv;
            }
        }
    }
    gin
}

/// Source taps for one output coordinate of a half-pixel-centred linear resize.
#[derive(Clone, Copy, Debug)]
struct Tap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn resize_taps<T: Real>(in_len: usize, out_len: usize) -> Vec<Tap<T>> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            Tap {
                lo,
                hi,
                frac: T::c(src - lo as f64),
            }
        })
        .collect()
}

/// Bilinear resize with the align-corners=false convention.
pub fn bilinear_resize<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(invalid("bilinear_resize", "sizes must be at least 1"));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(input.clone());
    }
    let ty = resize_taps::<T>(h, out_h);
    let tx = resize_taps::<T>(w, out_w);
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for (oy, ry) in ty.iter().enumerate() {
                let r0 = &src[ry.lo * w..(ry.lo + 1) * w];
                let r1 = &src[ry.hi * w..(ry.hi + 1) * w];
                for (ox, rx) in tx.iter().enumerate() {
                    let top = r0[rx.lo] + (r0[rx.hi] - r0[rx.lo]) * rx.frac;
                    let bot = r1[rx.lo] + (r1[rx.hi] - r1[rx.lo]) * rx.frac;
                    dst[oy * out_w + ox] = top + (bot - top) * ry.frac;
                }
            }
        }
    }
    Ok(out)
}

pub fn bilinear_resize_backward<T: Real>(
    input_shape: [usize; 4],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, h, w] = input_shape;
    let [_, _, out_h, out_w] = grad_out.shape();
    if (out_h, out_w) == (h, w) {
        return grad_out.clone();
    }
    let ty = resize_taps::<T>(h, out_h);
    let tx = resize_taps::<T>(w, out_w);
    let one = T::one();
    let mut gin = Tensor::zeros(input_shape);
    for b in 0..n {
        for ch in 0..c {
            let g = grad_out.plane(b, ch);
            let dst = gin.plane_mut(b, ch);
            for (oy, ry) in ty.iter().enumerate() {
                for (ox, rx) in tx.iter().enumerate() {
                    let gv = g[oy * out_w + ox];
                    let top = gv * (one - ry.frac);
                    let bot = gv * ry.frac;
                    dst[ry.lo * w + rx.lo] += top * (one - rx.frac);
                    dst[ry.lo * w + rx.hi] += top * rx.frac;
                    dst[ry.hi * w + rx.lo] += bot * (one - rx.frac);
                    dst[ry.hi * w + rx.hi] += bot * rx.frac;
                }
            }
        }
    }
    gin
}

/// Batched matrix product over the trailing two axes: `(n,c,m,k) x (n,c,k,p)`.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, m, k] = a.shape();
    let [bn, bc, bk, p] = b.shape();
    if (n, c, k) != (bn, bc, bk) {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros([n, c, m, p]);
    for i in 0..n {
        for j in 0..c {
            let am = a.plane(i, j);
            let bm = b.plane(i, j);
            let om = out.plane_mut(i, j);
            for r in 0..m {
                let orow = &mut om[r * p..(r + 1) * p];
                for (t, &av) in am[r * k..(r + 1) * k].iter().enumerate() {
                    if av == T::zero() {
                        continue;
                    }
                    for (o, &bv) in orow.iter_mut().zip(&bm[t * p..(t + 1) * p]) {
                        *o += av * bv;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Swaps the trailing two axes.
pub fn transpose<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    let [n, c, m, k] = a.shape();
    let mut out = Tensor::zeros([n, c, k, m]);
    for i in 0..n {
        for j in 0..c {
            let src = a.plane(i, j);
            let dst = out.plane_mut(i, j);
            for r in 0..m {
                for q in 0..k {
                    dst[q * m + r] = src[r * k + q];
                }
            }
        }
    }
    out
}

/// Per-channel batch normalisation statistics over `N x H x W`.
pub fn channel_moments<T: Real>(input: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let [n, c, h, w] = input.shape();
    let count = T::from_usize_lossy(n * h * w);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for b in 0..n {
            s += input.plane(b, ch).iter().copied().sum::<T>();
        }
        let mu = s / count;
        let mut v = T::zero();
        for b in 0..n {
            v += input
                .plane(b, ch)
                .iter()
                .map(|&x| (x - mu) * (x - mu))
                .sum::<T>();
        }
        mean[ch] = mu;
        var[ch] = v / count;
    }
    (mean, var)
}
