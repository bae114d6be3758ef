//! 2-D FFT helpers and real Fourier-multiplier filtering with optional
//! mirror padding.
//!
//! Angular spatial frequencies follow the derivative-theorem convention
//! `∂/∂x → i kx` with `kx = 2π fx` and `fx` the discrete frequency in
//! cycles per meter.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary treatment for FFT-based operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Symmetric (half-sample) reflection to twice the size in each axis.
    #[default]
    Mirror2x,
    /// Periodic boundary of the raster itself.
    None,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Angular frequencies `2π fftfreq(n, pitch)` in rad/m.
pub fn angular_frequencies(n: usize, pitch: f64) -> Vec<f64> {
    let scale = 2.0 * PI / (n as f64 * pitch);
    (0..n)
        .map(|i| {
            let signed = if i <= (n - 1) / 2 { i as isize } else { i as isize - n as isize };
            signed as f64 * scale
        })
        .collect()
}

fn transpose(src: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); w * h];
    for y in 0..h {
        for x in 0..w {
            dst[x * h + y] = src[y * w + x];
        }
    }
    dst
}

fn fft2_in_place(buf: &mut Vec<Complex64>, w: usize, h: usize, inverse: bool) {
    plan(w, inverse).process(buf);
    let mut t = transpose(buf, w, h);
    plan(h, inverse).process(&mut t);
    *buf = transpose(&t, h, w);
}

/// Unnormalized forward 2-D DFT of a row-major `w × h` complex buffer.
pub fn fft2(buf: &mut Vec<Complex64>, w: usize, h: usize) {
    fft2_in_place(buf, w, h, false);
}

/// Inverse 2-D DFT including the `1/(w h)` normalization.
pub fn ifft2(buf: &mut Vec<Complex64>, w: usize, h: usize) {
    fft2_in_place(buf, w, h, true);
    let norm = 1.0 / (w * h) as f64;
    for v in buf.iter_mut() {
        *v *= norm;
    }
}

/// 1-D forward DFT (unnormalized).
pub fn fft1(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// 1-D inverse DFT including `1/n`.
pub fn ifft1(buf: &mut [Complex64]) {
    let n = buf.len();
    plan(n, true).process(buf);
    let norm = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= norm;
    }
}

/// Mirror-pad a `w × h` image to `2w × 2h` by half-sample reflection.
pub fn mirror_pad(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (pw, ph) = (2 * w, 2 * h);
    let mut out = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        let y = if py < h { py } else { 2 * h - 1 - py };
        let row = &values[y * w..(y + 1) * w];
        out.extend_from_slice(row);
        out.extend(row.iter().rev());
    }
    out
}

/// Grid description for a Fourier multiplier.
#[derive(Debug, Clone, Copy)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub pitch_x: f64,
    pub pitch_y: f64,
}

/// Multiply the spectrum of `values` by the real symbol `symbol(kx, ky)` and
/// return the real part of the inverse transform, cropped back to the input
/// grid. The symbol must be even in `kx` and `ky` for the result to be real;
/// an imaginary residue above `1e-10` of the signal norm is reported as an
/// error.
pub fn apply_symbol(
    values: &[f64],
    grid: Grid,
    padding: Padding,
    symbol: impl Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    let (w, h) = (grid.width, grid.height);
    let (pw, ph, work) = match padding {
        Padding::Mirror2x => (2 * w, 2 * h, mirror_pad(values, w, h)),
        Padding::None => (w, h, values.to_vec()),
    };
    let mut buf: Vec<Complex64> = work.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut buf, pw, ph);
    let kx = angular_frequencies(pw, grid.pitch_x);
    let ky = angular_frequencies(ph, grid.pitch_y);
    for (y, &ky) in ky.iter().enumerate() {
        let row = &mut buf[y * pw..(y + 1) * pw];
        for (v, &kx) in row.iter_mut().zip(&kx) {
            *v *= symbol(kx, ky);
        }
    }
    ifft2(&mut buf, pw, ph);

    let mut out = Vec::with_capacity(w * h);
    let mut re_norm = 0.0;
    let mut im_norm = 0.0;
    for y in 0..h {
        for v in &buf[y * pw..y * pw + w] {
            out.push(v.re);
            re_norm += v.re * v.re;
            im_norm += v.im * v.im;
        }
    }
    if im_norm.sqrt() > 1e-10 * re_norm.sqrt().max(f64::MIN_POSITIVE) {
        return Err(Error::invariant(
            "fourier filter",
            format!(
                "imaginary residue {:e} exceeds 1e-10 of signal norm {:e}",
                im_norm.sqrt(),
                re_norm.sqrt()
            ),
        ));
    }
    Ok(out)
}
