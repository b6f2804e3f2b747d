//! Boundary targets extracted from ground-truth masks with a Canny pipeline.
//!
//! Every stencil is summed in a left/right symmetric order, so the detector
//! commutes exactly with horizontal flips.

use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};
use crate::kernels::bilinear_resize;
use crate::tensor::Tensor;

/// Default hysteresis thresholds, as fractions of the peak gradient magnitude.
pub const DEFAULT_LOW: f32 = 0.1;
pub const DEFAULT_HIGH: f32 = 0.3;
/// Dilation applied to boundary maps before they supervise the loss.
pub const TARGET_DILATION: usize = 1;

const SIGMA: f64 = 1.4;

fn gaussian_weights() -> [f64; 3] {
    let g = |k: f64| (-k * k / (2.0 * SIGMA * SIGMA)).exp();
    let total = g(0.0) + 2.0 * g(1.0) + 2.0 * g(2.0);
    [g(0.0) / total, g(1.0) / total, g(2.0) / total]
}

struct Grid {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Grid {
    // replicate border
    fn at(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.v[y * self.w + x]
    }
}

fn blur(src: &Grid) -> Grid {
    let [w0, w1, w2] = gaussian_weights();
    let (h, w) = (src.h, src.w);
    let mut tmp = Grid {
        h,
        w,
        v: vec![0.0; h * w],
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            tmp.v[y as usize * w + x as usize] = w0 * src.at(y, x)
                + w1 * (src.at(y, x - 1) + src.at(y, x + 1))
                + w2 * (src.at(y, x - 2) + src.at(y, x + 2));
        }
    }
    let mut out = Grid {
        h,
        w,
        v: vec![0.0; h * w],
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            out.v[y as usize * w + x as usize] = w0 * tmp.at(y, x)
                + w1 * (tmp.at(y - 1, x) + tmp.at(y + 1, x))
                + w2 * (tmp.at(y - 2, x) + tmp.at(y + 2, x));
        }
    }
    out
}

/// Sobel responses `(gx, gy)` at one pixel, replicate border.
fn sobel(b: &Grid, y: isize, x: isize) -> (f64, f64) {
    let dx = |r: isize| b.at(r, x + 1) - b.at(r, x - 1);
    let gx = (dx(y - 1) + dx(y + 1)) + 2.0 * dx(y);
    let row = |r: isize| (b.at(r, x - 1) + b.at(r, x + 1)) + 2.0 * b.at(r, x);
    let gy = row(y + 1) - row(y - 1);
    (gx, gy)
}

// tan(22.5 deg) and tan(67.5 deg)
const TAN_22_5: f64 = 0.414_213_562_373_095_1;
const TAN_67_5: f64 = 2.414_213_562_373_095;

/// Neighbour offsets along the quantised gradient direction.
fn direction(gx: f64, gy: f64) -> [(isize, isize); 2] {
    let (ax, ay) = (gx.abs(), gy.abs());
    if ay <= TAN_22_5 * ax {
        [(0, -1), (0, 1)]
    } else if ay >= TAN_67_5 * ax {
        [(-1, 0), (1, 0)]
    } else if gx * gy > 0.0 {
        [(-1, -1), (1, 1)]
    } else {
        [(-1, 1), (1, -1)]
    }
}

fn check_binary(mask: &Tensor<f32>) -> Result<()> {
    match mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(&v) => Err(Error::NonBinaryMask(v)),
        None => Ok(()),
    }
}

fn canny_plane(plane: &[f32], h: usize, w: usize, low: f64, high: f64) -> Vec<f32> {
    let src = Grid {
        h,
        w,
        v: plane.iter().map(|&v| v as f64).collect(),
    };
    let b = blur(&src);
    let mut mag = vec![0.0f64; h * w];
    let mut dirs = vec![[(0isize, 0isize); 2]; h * w];
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = sobel(&b, y as isize, x as isize);
            mag[y * w + x] = (gx * gx + gy * gy).sqrt();
            dirs[y * w + x] = direction(gx, gy);
        }
    }
    let peak = mag.iter().copied().fold(0.0, f64::max);
    let mut out = vec![0.0f32; h * w];
    if peak <= 0.0 {
        return out;
    }
    let tol = 1e-9 * peak;
    let mut thin = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= tol {
                continue;
            }
            let mut keep = true;
            for (dy, dx) in dirs[i] {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mag[j] > m + tol {
                    keep = false;
                } else if (mag[j] - m).abs() <= tol && b.v[j] > b.v[i] + 1e-12 {
                    // plateau of two equal responses: keep the brighter side
                    keep = false;
                }
            }
            if keep {
                thin[i] = m;
            }
        }
    }
    let (lo, hi) = (low * peak, high * peak);
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m > 0.0 && m >= hi {
            out[i] = 1.0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0.0 && thin[j] > 0.0 && thin[j] >= lo {
                    out[j] = 1.0;
                    queue.push_back(j);
                }
            }
        }
    }
    out
}

/// Canny edges of a binary mask: 5x5 Gaussian blur (sigma 1.4), Sobel
/// gradients, non-maximum suppression over four directions, and hysteresis
/// with `low`/`high` given as fractions of the peak gradient magnitude.
/// Every plane of `mask` is processed independently.
pub fn canny_boundary(mask: &Tensor<f32>, low: f32, high: f32) -> Result<Tensor<f32>> {
    if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low >= high {
        return Err(invalid(
            "canny_boundary",
            format!("need 0 <= low < high <= 1, got low={low} high={high}"),
        ));
    }
    check_binary(mask)?;
    let [n, c, h, w] = mask.shape();
    let mut out = Tensor::zeros(mask.shape());
    for s in 0..n {
        for ch in 0..c {
            let edges = canny_plane(mask.plane(s, ch), h, w, low as f64, high as f64);
            out.plane_mut(s, ch).copy_from_slice(&edges);
        }
    }
    Ok(out)
}

/// Morphological dilation with a `(2r+1) x (2r+1)` square.
pub fn dilate(bmap: &Tensor<f32>, radius: usize) -> Tensor<f32> {
    if radius == 0 {
        return bmap.clone();
    }
    let [n, c, h, w] = bmap.shape();
    let r = radius;
    let mut out = Tensor::zeros(bmap.shape());
    for s in 0..n {
        for ch in 0..c {
            let src = bmap.plane(s, ch);
            // separable: rows then columns
            let mut rows = vec![0.0f32; h * w];
            for y in 0..h {
                for x in 0..w {
                    let (a, b) = (x.saturating_sub(r), (x + r).min(w - 1));
                    if src[y * w + a..=y * w + b].iter().any(|&v| v > 0.0) {
                        rows[y * w + x] = 1.0;
                    }
                }
            }
            let dst = out.plane_mut(s, ch);
            for y in 0..h {
                let (a, b) = (y.saturating_sub(r), (y + r).min(h - 1));
                for x in 0..w {
                    if (a..=b).any(|yy| rows[yy * w + x] > 0.0) {
                        dst[y * w + x] = 1.0;
                    }
                }
            }
        }
    }
    out
}

/// Boundary supervision at `H/lambda x W/lambda`: Canny at full resolution,
/// dilated by [`TARGET_DILATION`], bilinearly downsampled and re-binarised at 0.5.
pub fn boundary_target(mask: &Tensor<f32>, lambda: usize) -> Result<Tensor<f32>> {
    let edges = canny_boundary(mask, DEFAULT_LOW, DEFAULT_HIGH)?;
    let thick = dilate(&edges, TARGET_DILATION);
    let (h, w) = (mask.h(), mask.w());
    if lambda == 0 || h % lambda != 0 || w % lambda != 0 {
        return Err(invalid(
            "boundary_target",
            format!("{h}x{w} is not divisible by {lambda}"),
        ));
    }
    let small = bilinear_resize(&thick, h / lambda, w / lambda)?;
    Ok(small.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }))
}
