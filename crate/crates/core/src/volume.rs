//! Voxelized number-density volumes and synthetic phantoms.
//!
//! The tomographic rotation axis is `y` (vertical), the beam travels along
//! `z`. Storage order is `(y, z, x)` with `x` fastest, so every horizontal
//! slice `y = const` is a contiguous `nz × nx` image. Physical coordinates
//! are centred: voxel `i` along an axis of `n` voxels sits at
//! `(i - (n - 1)/2) * pitch`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Raster2D, RasterKind};

/// Phantoms must hold non-negative densities; reconstructions may ring
/// below zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeKind {
    Density,
    Reconstruction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    nx: usize,
    ny: usize,
    nz: usize,
    pitch: f64,
    kind: VolumeKind,
    density: Arc<[f64]>,
}

impl Volume3D {
    pub fn new(
        nx: usize,
        ny: usize,
        nz: usize,
        pitch: f64,
        kind: VolumeKind,
        density: Vec<f64>,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invariant(
                "volume shape",
                format!("{nx}x{ny}x{nz} has a zero dimension"),
            ));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::invariant("voxel_pitch", format!("{pitch} must be positive")));
        }
        if density.len() != nx * ny * nz {
            return Err(Error::invariant(
                "volume density",
                format!("expected {} values, got {}", nx * ny * nz, density.len()),
            ));
        }
        if let Some(i) = density.iter().position(|v| !v.is_finite()) {
            return Err(Error::invariant(
                "volume density",
                format!("non-finite value at index {i}"),
            ));
        }
        if kind == VolumeKind::Density {
            if let Some(i) = density.iter().position(|&v| v < 0.0) {
                return Err(Error::invariant(
                    "volume density",
                    format!("negative density {:e} at index {i}", density[i]),
                ));
            }
        }
        Ok(Self {
            nx,
            ny,
            nz,
            pitch,
            kind,
            density: density.into(),
        })
    }

    pub fn zeros(nx: usize, ny: usize, nz: usize, pitch: f64) -> Result<Self> {
        Self::new(nx, ny, nz, pitch, VolumeKind::Density, vec![0.0; nx * ny * nz])
    }

    /// Evaluate `f(x, y, z)` at voxel centres (physical coordinates in m).
    pub fn from_fn(
        nx: usize,
        ny: usize,
        nz: usize,
        pitch: f64,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Self> {
        let mut density = Vec::with_capacity(nx * ny * nz);
        for j in 0..ny {
            let y = centred(j, ny, pitch);
            for k in 0..nz {
                let z = centred(k, nz, pitch);
                for i in 0..nx {
                    density.push(f(centred(i, nx, pitch), y, z));
                }
            }
        }
        Self::new(nx, ny, nz, pitch, VolumeKind::Density, density)
    }

    /// Cylinders parallel to the rotation axis, voxelized with
    /// `supersample²` sub-samples per voxel in the horizontal plane.
    pub fn from_cylinders(
        nx: usize,
        ny: usize,
        nz: usize,
        pitch: f64,
        cylinders: &[Cylinder],
        supersample: usize,
    ) -> Result<Self> {
        let ss = supersample.max(1);
        for (i, c) in cylinders.iter().enumerate() {
            if !(c.radius > 0.0 && c.density >= 0.0 && c.density.is_finite()) {
                return Err(Error::invariant(
                    "cylinder",
                    format!("cylinder {i}: radius must be positive and density non-negative"),
                ));
            }
        }
        let coverage: Vec<Vec<f64>> = cylinders
            .iter()
            .map(|c| {
                let mut map = Vec::with_capacity(nx * nz);
                for k in 0..nz {
                    for i in 0..nx {
                        map.push(c.partial_cover(i, k, nx, nz, pitch, ss));
                    }
                }
                map
            })
            .collect();
        let mut density = Vec::with_capacity(nx * ny * nz);
        for j in 0..ny {
            let y = centred(j, ny, pitch);
            let active: Vec<&Vec<f64>> = cylinders
                .iter()
                .zip(&coverage)
                .filter(|(c, _)| c.covers_height(y))
                .map(|(_, m)| m)
                .collect();
            for v in 0..nx * nz {
                density.push(active.iter().map(|m| m[v]).sum());
            }
        }
        Self::new(nx, ny, nz, pitch, VolumeKind::Density, density)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (y * self.nz + z) * self.nx + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.density[self.index(x, y, z)]
    }

    /// The horizontal slice at height index `y`, `nz` rows of `nx` values.
    pub fn slice(&self, y: usize) -> &[f64] {
        let n = self.nx * self.nz;
        &self.density[y * n..(y + 1) * n]
    }

    /// Horizontal slice `y` as an `nx × nz` raster (`z` runs down the rows).
    pub fn slice_raster(&self, y: usize) -> Result<Raster2D> {
        Raster2D::new(
            self.nx,
            self.nz,
            self.pitch,
            self.pitch,
            RasterKind::Generic,
            self.slice(y).to_vec(),
        )
    }

    /// Physical coordinate of voxel index `i` along an axis of `n` voxels.
    pub fn coordinate(&self, i: usize, n: usize) -> f64 {
        centred(i, n, self.pitch)
    }

    /// Copy with one voxel replaced.
    pub fn with_voxel(&self, x: usize, y: usize, z: usize, value: f64) -> Result<Self> {
        let mut d = self.density.to_vec();
        d[self.index(x, y, z)] = value;
        Self::new(self.nx, self.ny, self.nz, self.pitch, self.kind, d)
    }
}

#[inline]
pub(crate) fn centred(i: usize, n: usize, pitch: f64) -> f64 {
    (i as f64 - (n as f64 - 1.0) / 2.0) * pitch
}

/// A uniform-density cylinder whose axis is parallel to the rotation axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cylinder {
    /// Axis position in the horizontal plane, meters from the rotation axis.
    pub center_x: f64,
    pub center_z: f64,
    pub radius: f64,
    /// Number density in nuclei/m³.
    pub density: f64,
    /// Vertical extent in meters; `None` spans the whole volume.
    #[serde(default)]
    pub y_range: Option<(f64, f64)>,
}

impl Cylinder {
    fn covers_height(&self, y: f64) -> bool {
        match self.y_range {
            None => true,
            Some((lo, hi)) => y >= lo && y <= hi,
        }
    }

    fn partial_cover(&self, i: usize, k: usize, nx: usize, nz: usize, pitch: f64, ss: usize) -> f64 {
        let mut inside = 0usize;
        for sk in 0..ss {
            let z = centred(k, nz, pitch) + ((sk as f64 + 0.5) / ss as f64 - 0.5) * pitch;
            for si in 0..ss {
                let x = centred(i, nx, pitch) + ((si as f64 + 0.5) / ss as f64 - 0.5) * pitch;
                let (dx, dz) = (x - self.center_x, z - self.center_z);
                if dx * dx + dz * dz <= self.radius * self.radius {
                    inside += 1;
                }
            }
        }
        self.density * inside as f64 / (ss * ss) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_density_only_for_phantoms() {
        assert!(Volume3D::new(1, 1, 2, 1.0, VolumeKind::Density, vec![0.0, -1.0]).is_err());
        assert!(Volume3D::new(1, 1, 2, 1.0, VolumeKind::Reconstruction, vec![0.0, -1.0]).is_ok());
        assert!(Volume3D::new(1, 1, 2, 0.0, VolumeKind::Density, vec![0.0, 0.0]).is_err());
        assert!(Volume3D::new(1, 1, 2, 1.0, VolumeKind::Density, vec![0.0]).is_err());
    }

    #[test]
    fn layout_is_y_z_x() {
        let v = Volume3D::from_fn(3, 2, 4, 1.0, |x, y, z| 1000.0 + 100.0 * y + 10.0 * z + x).unwrap();
        // x index 2 -> +1, y index 1 -> +0.5, z index 3 -> +1.5
        assert_eq!(v.get(2, 1, 3), 1000.0 + 50.0 + 15.0 + 1.0);
        assert_eq!(v.slice(1)[3 * 3 + 2], v.get(2, 1, 3));
    }

    #[test]
    fn cylinder_area_matches_disk() {
        let pitch = 1.0;
        let c = Cylinder { center_x: 0.0, center_z: 0.0, radius: 20.0, density: 1.0, y_range: None };
        let v = Volume3D::from_cylinders(64, 1, 64, pitch, &[c], 8).unwrap();
        let area: f64 = v.slice(0).iter().sum();
        let exact = std::f64::consts::PI * 400.0;
        assert!((area - exact).abs() / exact < 2e-3, "{area} vs {exact}");
    }

    #[test]
    fn cylinder_height_is_respected() {
        let c = Cylinder { center_x: 0.0, center_z: 0.0, radius: 2.0, density: 1.0, y_range: Some((-0.1, 0.6)) };
        let v = Volume3D::from_cylinders(8, 4, 8, 1.0, &[c], 2).unwrap();
        // y coordinates: -1.5, -0.5, 0.5, 1.5
        assert_eq!(v.slice(0).iter().sum::<f64>(), 0.0);
        assert!(v.slice(2).iter().sum::<f64>() > 0.0);
        assert_eq!(v.slice(1).iter().sum::<f64>(), 0.0);
    }
}
