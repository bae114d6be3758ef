//! Ray-driven parallel-beam projector with bilinear sampling.
//!
//! For angle `φ` the ray hitting detector coordinate `s` is
//! `s (cos φ, sin φ) + t (−sin φ, cos φ)` in the `(x, z)` slice plane,
//! sampled every voxel pitch in `t`. At `φ = 0` rays run along `+z`.

use crate::volume::centred;

/// One bilinear sample: top-left corner in the padded slice and the
/// fractional offsets.
#[derive(Debug, Clone, Copy)]
struct Sample {
    base: u32,
    fx: f32,
    fz: f32,
}

/// Precomputed samples for every detector bin at one angle. Reused across
/// all slices of a volume.
#[derive(Debug, Clone)]
pub(crate) struct RayTable {
    nx: usize,
    nz: usize,
    step: f64,
    offsets: Vec<usize>,
    samples: Vec<Sample>,
}

impl RayTable {
    pub(crate) fn new(nx: usize, nz: usize, pitch: f64, phi: f64) -> Self {
        let (sin, cos) = phi.sin_cos();
        let padded_w = nx + 2;
        let cx = (nx as f64 - 1.0) / 2.0;
        let cz = (nz as f64 - 1.0) / 2.0;
        // t offset so that rays through the centre hit voxel centres for
        // axis-aligned angles.
        let t_shift = if nz % 2 == 1 { 0.0 } else { 0.5 };
        let mut offsets = Vec::with_capacity(nx + 1);
        let mut samples = Vec::new();
        offsets.push(0);
        for j in 0..nx {
            // Work in voxel units: position in index space is
            // (s cos − t sin + cx, s sin + t cos + cz).
            let s = centred(j, nx, pitch) / pitch;
            let x0 = s * cos + cx;
            let z0 = s * sin + cz;
            let (lo, hi) = slab(x0, -sin, -1.0, nx as f64).and_then(|(a, b)| {
                let (c, d) = slab(z0, cos, -1.0, nz as f64)?;
                let (lo, hi) = (a.max(c), b.min(d));
                (lo <= hi).then_some((lo, hi))
            })
            .unwrap_or((1.0, 0.0));
            if lo <= hi {
                let m0 = (lo - t_shift).ceil() as i64;
                let m1 = (hi - t_shift).floor() as i64;
                for m in m0..=m1 {
                    let t = m as f64 + t_shift;
                    let xi = x0 - t * sin;
                    let zi = z0 + t * cos;
                    // Shift by one for the zero border of the padded slice.
                    let px = xi + 1.0;
                    let pz = zi + 1.0;
                    if !(px >= 0.0 && pz >= 0.0 && px <= (nx + 1) as f64 && pz <= (nz + 1) as f64) {
                        continue;
                    }
                    let ix = (px.floor() as usize).min(nx);
                    let iz = (pz.floor() as usize).min(nz);
                    samples.push(Sample {
                        base: (iz * padded_w + ix) as u32,
                        fx: (px - ix as f64) as f32,
                        fz: (pz - iz as f64) as f32,
                    });
                }
            }
            offsets.push(samples.len());
        }
        Self {
            nx,
            nz,
            step: pitch,
            offsets,
            samples,
        }
    }

    /// Line integrals of one padded slice, one value per detector bin.
    pub(crate) fn project(&self, padded: &[f64], out: &mut [f64]) {
        let w = self.nx + 2;
        debug_assert_eq!(padded.len(), w * (self.nz + 2));
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for s in &self.samples[self.offsets[j]..self.offsets[j + 1]] {
                let b = s.base as usize;
                let (fx, fz) = (s.fx as f64, s.fz as f64);
                let top = padded[b] * (1.0 - fx) + padded[b + 1] * fx;
                let bottom = padded[b + w] * (1.0 - fx) + padded[b + w + 1] * fx;
                acc += top * (1.0 - fz) + bottom * fz;
            }
            *o = acc * self.step;
        }
    }
}

/// Parameter interval where `start + t·dir` lies in `[lo, hi]`.
fn slab(start: f64, dir: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if dir.abs() < 1e-12 {
        return (start >= lo && start <= hi).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let a = (lo - start) / dir;
    let b = (hi - start) / dir;
    Some((a.min(b), a.max(b)))
}

/// Copy an `nz × nx` slice into an `(nz + 2) × (nx + 2)` buffer with a zero
/// border.
pub(crate) fn pad_slice(slice: &[f64], nx: usize, nz: usize, out: &mut Vec<f64>) {
    let w = nx + 2;
    out.clear();
    out.resize(w * (nz + 2), 0.0);
    for k in 0..nz {
        out[(k + 1) * w + 1..(k + 1) * w + 1 + nx].copy_from_slice(&slice[k * nx..(k + 1) * nx]);
    }
}
