//! Discrete Fourier transforms for feature enhancement.
//!
//! The fast path is an iterative radix-2 transform: inputs are permuted into
//! bit-reversed order and then combined by `log2(n)` butterfly stages. The
//! direct double sum [`dft2_reference`] is kept as an oracle.

use num_complex::Complex;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// A 2-D complex spectrum stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid<T> {
    pub h: usize,
    pub w: usize,
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Real> ComplexGrid<T> {
    pub fn get(&self, u: usize, v: usize) -> Complex<T> {
        let i = u * self.w + v;
        Complex::new(self.re[i], self.im[i])
    }

    fn from_complex(h: usize, w: usize, values: &[Complex<T>]) -> Self {
        Self {
            h,
            w,
            re: values.iter().map(|z| z.re).collect(),
            im: values.iter().map(|z| z.im).collect(),
        }
    }

    /// Sum of squared magnitudes over all bins.
    pub fn energy(&self) -> T {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| r * r + i * i)
            .sum()
    }
}

fn twiddle<T: Real>(k: usize, n: usize) -> Complex<T> {
    // e^{-2 pi i k / n}, evaluated in f64 so f32 transforms stay accurate
    let angle = -2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
    Complex::new(T::c(angle.cos()), T::c(angle.sin()))
}

/// Direct O(n^2) one-dimensional DFT.
pub fn dft1_reference<T: Real>(input: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = input.len();
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .fold(Complex::new(T::zero(), T::zero()), |acc, (j, &x)| {
                    acc + x * twiddle::<T>((j * k) % n, n)
                })
        })
        .collect()
}

/// Reverses the lowest `bits` binary digits of `j`: `[j_{m-1},...,j_0]` becomes
/// `[j_0,...,j_{m-1}]`.
pub fn bit_reverse(j: usize, bits: u32) -> usize {
    if bits == 0 {
        return 0;
    }
    j.reverse_bits() >> (usize::BITS - bits)
}

/// Radix-2 FFT of a power-of-two length vector.
pub fn fft1_radix2<T: Real>(input: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let n = input.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo {
            op: "fft1_radix2",
            len: n,
        });
    }
    let bits = n.trailing_zeros();
    let mut a: Vec<Complex<T>> = (0..n).map(|j| input[bit_reverse(j, bits)]).collect();
    let twiddles: Vec<Complex<T>> = (0..n / 2).map(|k| twiddle(k, n)).collect();
    let mut half = 1;
    while half < n {
        let stride = n / (2 * half);
        for start in (0..n).step_by(2 * half) {
            for k in 0..half {
                let t = twiddles[k * stride] * a[start + k + half];
                let u = a[start + k];
                a[start + k] = u + t;
                a[start + k + half] = u - t;
            }
        }
        half *= 2;
    }
    Ok(a)
}

/// Direct evaluation of the 2-D DFT of a real `h x w` plane.
pub fn dft2_reference<T: Real>(plane: &[T], h: usize, w: usize) -> ComplexGrid<T> {
    assert_eq!(plane.len(), h * w, "plane length must equal h*w");
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex::new(T::zero(), T::zero());
            for y in 0..h {
                for x in 0..w {
                    // exp(-2 pi i (u y / h + v x / w)) with the phase reduced exactly
                    let phase = ((u * y) % h) as f64 / h as f64 + ((v * x) % w) as f64 / w as f64;
                    let angle = -2.0 * std::f64::consts::PI * phase;
                    acc += Complex::new(T::c(angle.cos()), T::c(angle.sin())) * plane[y * w + x];
                }
            }
            out.push(acc);
        }
    }
    ComplexGrid::from_complex(h, w, &out)
}

/// 2-D FFT of a real plane by row transforms followed by column transforms.
pub fn fft2<T: Real>(plane: &[T], h: usize, w: usize) -> Result<ComplexGrid<T>> {
    for len in [h, w] {
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo { op: "fft2", len });
        }
    }
    assert_eq!(plane.len(), h * w, "plane length must equal h*w");
    let zero = T::zero();
    let mut grid = Vec::with_capacity(h * w);
    for row in plane.chunks(w) {
        let row: Vec<_> = row.iter().map(|&v| Complex::new(v, zero)).collect();
        grid.extend(fft1_radix2(&row)?);
    }
    let mut column = vec![Complex::new(zero, zero); h];
    for v in 0..w {
        for u in 0..h {
            column[u] = grid[u * w + v];
        }
        for (u, z) in fft1_radix2(&column)?.into_iter().enumerate() {
            grid[u * w + v] = z;
        }
    }
    Ok(ComplexGrid::from_complex(h, w, &grid))
}

/// Real part of the 2-D spectrum scaled by `1/(H*W)`, where `H x W` is the
/// plane zero-padded up to powers of two. The result is cropped back to
/// `h x w`.
///
/// The map is linear and self-adjoint (the cosine kernel is symmetric and
/// padding/cropping are mutual adjoints), so it is its own backward rule.
pub fn real_spectrum<T: Real>(plane: &[T], h: usize, w: usize) -> Vec<T> {
    let (ph, pw) = (h.next_power_of_two(), w.next_power_of_two());
    let mut padded = vec![T::zero(); ph * pw];
    for y in 0..h {
        padded[y * pw..y * pw + w].copy_from_slice(&plane[y * w..(y + 1) * w]);
    }
    let spectrum = fft2(&padded, ph, pw).expect("padded dims are powers of two");
    let scale = T::one() / T::from_usize_lossy(ph * pw);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        out.extend(spectrum.re[y * pw..y * pw + w].iter().map(|&r| r * scale));
    }
    out
}

/// Frequency-domain enhancement of a feature map: a bias-free 1x1 projection
/// of `x` plus, channel by channel, the normalised real part of its spectrum.
pub fn fourier_enhance<T: Real>(tape: &mut Tape<T>, x: Var, proj_kernel: Var) -> Result<Var> {
    let co = tape.value(proj_kernel).n();
    let zero_bias = tape.constant(crate::tensor::Tensor::zeros([1, 1, 1, co]));
    let projected = tape.conv2d(x, proj_kernel, zero_bias, 1, 0)?;
    let spectrum = tape.fourier_real(x);
    tape.add(projected, spectrum)
}
