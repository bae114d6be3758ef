//! Forward simulation: projected density, contact and propagated images,
//! source blur, spectral averaging and counting noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{apply_symbol, Grid, Padding};
use crate::geometry::BeamGeometry;
use crate::material::Material;
use crate::physics;
use crate::projector::{pad_slice, RayTable};
use crate::raster::{Raster2D, RasterKind};
use crate::spectrum::Spectrum;
use crate::volume::Volume3D;

/// Discretization of the transverse Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianMode {
    /// Multiplication by `−(kx² + ky²)` in Fourier space.
    #[default]
    FourierSymbol,
    /// 5-point stencil with mirror boundary.
    FiniteDifference5pt,
}

/// How source blur enters the propagated image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurModel {
    /// `(1 − τ∇²)` with `τ` already reduced by `𝒜/8`.
    #[default]
    SingleTau,
    /// `(1 + 𝒜/8 ∇²)(1 − τ₀∇²)` keeping the bi-Laplacian cross term.
    OperatorProduct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardConfig {
    material: Material,
    geometry: BeamGeometry,
    i0: f64,
    laplacian_mode: LaplacianMode,
    padding: Padding,
    blur_model: BlurModel,
}

impl ForwardConfig {
    pub fn new(material: Material, geometry: BeamGeometry, i0: f64) -> Result<Self> {
        if !(i0.is_finite() && i0 > 0.0) {
            return Err(Error::invariant("i0", format!("{i0} must be positive")));
        }
        Ok(Self {
            material,
            geometry,
            i0,
            laplacian_mode: LaplacianMode::default(),
            padding: Padding::default(),
            blur_model: BlurModel::default(),
        })
    }

    pub fn with_laplacian(mut self, mode: LaplacianMode) -> Self {
        self.laplacian_mode = mode;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_blur_model(mut self, model: BlurModel) -> Self {
        self.blur_model = model;
        self
    }

    pub fn with_geometry(mut self, geometry: BeamGeometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn geometry(&self) -> &BeamGeometry {
        &self.geometry
    }

    pub fn i0(&self) -> f64 {
        self.i0
    }

    pub fn laplacian_mode(&self) -> LaplacianMode {
        self.laplacian_mode
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn blur_model(&self) -> BlurModel {
        self.blur_model
    }
}

/// Projected density `∫ρ dz` of `vol` rotated by `phi` about the vertical
/// axis. The output is `nx × ny` with the voxel pitch.
pub fn project_density(vol: &Volume3D, phi: f64) -> Result<Raster2D> {
    let table = RayTable::new(vol.nx(), vol.nz(), vol.pitch(), phi);
    project_with_table(vol, &table)
}

pub(crate) fn project_with_table(vol: &Volume3D, table: &RayTable) -> Result<Raster2D> {
    let (nx, ny, nz) = (vol.nx(), vol.ny(), vol.nz());
    let mut values = vec![0.0; nx * ny];
    let mut padded = Vec::new();
    for (y, row) in values.chunks_mut(nx).enumerate() {
        pad_slice(vol.slice(y), nx, nz, &mut padded);
        table.project(&padded, row);
    }
    Raster2D::new(nx, ny, vol.pitch(), vol.pitch(), RasterKind::ProjectedDensity, values)
}

fn expect_kind(img: &Raster2D, kind: RasterKind, what: &str) -> Result<()> {
    if img.kind() != kind {
        return Err(Error::invariant(
            "raster kind",
            format!("{what} expects {}, got {}", kind.as_str(), img.kind().as_str()),
        ));
    }
    Ok(())
}

/// Phase shift `−b λ ρ⊥` in radians.
pub fn phase_map(rho_perp: &Raster2D, mat: &Material, lambda: f64) -> Result<Raster2D> {
    expect_kind(rho_perp, RasterKind::ProjectedDensity, "phase_map")?;
    let b = mat.coefficients_at(lambda)?.b;
    rho_perp.map(RasterKind::Generic, |r| -b * lambda * r)
}

/// Contact image `I₀ exp(−σ ρ⊥)`.
pub fn contact_intensity(rho_perp: &Raster2D, cfg: &ForwardConfig) -> Result<Raster2D> {
    expect_kind(rho_perp, RasterKind::ProjectedDensity, "contact_intensity")?;
    let sigma = cfg.material.coefficients_at(cfg.geometry.wavelength())?.sigma;
    let i0 = cfg.i0;
    rho_perp.map(RasterKind::Intensity, |r| i0 * (-sigma * r).exp())
}

fn grid_of(img: &Raster2D) -> Grid {
    Grid {
        width: img.width(),
        height: img.height(),
        pitch_x: img.pitch_x(),
        pitch_y: img.pitch_y(),
    }
}

/// 5-point Laplacian with mirror boundary (`a[−1] = a[0]`).
pub fn laplacian_5pt(values: &[f64], grid: Grid) -> Vec<f64> {
    let (w, h) = (grid.width, grid.height);
    let (ix2, iy2) = (1.0 / (grid.pitch_x * grid.pitch_x), 1.0 / (grid.pitch_y * grid.pitch_y));
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let up = if y == 0 { 0 } else { y - 1 };
        let down = if y + 1 == h { y } else { y + 1 };
        for x in 0..w {
            let left = if x == 0 { 0 } else { x - 1 };
            let right = if x + 1 == w { x } else { x + 1 };
            let c = values[y * w + x];
            let dxx = values[y * w + left] - 2.0 * c + values[y * w + right];
            let dyy = values[up * w + x] - 2.0 * c + values[down * w + x];
            out[y * w + x] = dxx * ix2 + dyy * iy2;
        }
    }
    out
}

/// `(1 + c∇²) f` in the given mode.
fn one_plus_laplacian(
    values: &[f64],
    grid: Grid,
    c: f64,
    mode: LaplacianMode,
    padding: Padding,
) -> Result<Vec<f64>> {
    if c == 0.0 {
        return Ok(values.to_vec());
    }
    match mode {
        LaplacianMode::FourierSymbol => {
            apply_symbol(values, grid, padding, |kx, ky| 1.0 - c * (kx * kx + ky * ky))
        }
        LaplacianMode::FiniteDifference5pt => {
            let lap = laplacian_5pt(values, grid);
            Ok(values.iter().zip(&lap).map(|(v, l)| v + c * l).collect())
        }
    }
}

fn intensity_from(img: &Raster2D, values: Vec<f64>) -> Result<Raster2D> {
    let negative: Vec<f64> = values.iter().copied().filter(|&v| v < 0.0).collect();
    if !negative.is_empty() {
        let min = negative.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::NegativeIntensity {
            count: negative.len(),
            min,
        });
    }
    img.with_values(RasterKind::Intensity, values)
}

/// Propagated image for exponent image `e = exp(−σρ⊥)`, unscaled by `I₀`.
fn propagate(
    exp_img: &[f64],
    grid: Grid,
    mat: &Material,
    geom: &BeamGeometry,
    mode: LaplacianMode,
    padding: Padding,
    blur: BlurModel,
) -> Result<Vec<f64>> {
    match blur {
        BlurModel::SingleTau => {
            let tau = physics::tau(mat, geom)?;
            one_plus_laplacian(exp_img, grid, -tau, mode, padding)
        }
        BlurModel::OperatorProduct => {
            let tau0 = physics::phase_contrast_strength(mat, geom)?;
            let a8 = geom.blur_area() / 8.0;
            match mode {
                LaplacianMode::FourierSymbol => apply_symbol(exp_img, grid, padding, |kx, ky| {
                    let k2 = kx * kx + ky * ky;
                    (1.0 - a8 * k2) * (1.0 + tau0 * k2)
                }),
                LaplacianMode::FiniteDifference5pt => {
                    let sharp = one_plus_laplacian(exp_img, grid, -tau0, mode, padding)?;
                    one_plus_laplacian(&sharp, grid, a8, mode, padding)
                }
            }
        }
    }
}

/// `I₀ (1 − τ∇²) exp(−σρ⊥)`, blur folded in per the configured model.
pub fn phase_contrast_forward(rho_perp: &Raster2D, cfg: &ForwardConfig) -> Result<Raster2D> {
    expect_kind(rho_perp, RasterKind::ProjectedDensity, "phase_contrast_forward")?;
    let sigma = cfg.material.coefficients_at(cfg.geometry.wavelength())?.sigma;
    let exp_img: Vec<f64> = rho_perp.values().iter().map(|&r| (-sigma * r).exp()).collect();
    let out = propagate(
        &exp_img,
        grid_of(rho_perp),
        &cfg.material,
        &cfg.geometry,
        cfg.laplacian_mode,
        cfg.padding,
        cfg.blur_model,
    )?;
    intensity_from(rho_perp, out.into_iter().map(|v| cfg.i0 * v).collect())
}

/// Apply the source-blur operator `(1 + 𝒜/8 ∇²)`.
pub fn source_blur(
    img: &Raster2D,
    area: f64,
    mode: LaplacianMode,
    padding: Padding,
) -> Result<Raster2D> {
    if !(area.is_finite() && area >= 0.0) {
        return Err(Error::invariant("blur area", format!("{area} must be non-negative")));
    }
    let out = one_plus_laplacian(img.values(), grid_of(img), area / 8.0, mode, padding)?;
    match img.kind() {
        RasterKind::Intensity => intensity_from(img, out),
        kind => img.with_values(kind, out),
    }
}

/// Spectrally averaged normalized intensity `Σ w_E I_E/I₀,E / Σ w_E` with
/// per-bin coefficients, `τ_E` and Laplacian.
pub fn polychromatic_forward(
    rho_perp: &Raster2D,
    spectrum: &Spectrum,
    cfg: &ForwardConfig,
) -> Result<Raster2D> {
    expect_kind(rho_perp, RasterKind::ProjectedDensity, "polychromatic_forward")?;
    let mat = &cfg.material;
    if spectrum.len() > 1 && mat.dispersion().is_none() {
        return Err(Error::MissingDispersionTable {
            bins: spectrum.len(),
        });
    }
    let grid = grid_of(rho_perp);
    let weights = spectrum.normalized_weights();
    let rho_max = rho_perp.max();
    let mut acc = vec![0.0; rho_perp.len()];
    let mut max_attenuation: f64 = 0.0;
    for (bin, &w) in spectrum.bins().iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let geom = cfg.geometry.with_wavelength(bin.wavelength)?;
        let sigma = mat.coefficients_at(bin.wavelength)?.sigma;
        max_attenuation = max_attenuation.max(sigma * rho_max);
        let exp_img: Vec<f64> = rho_perp.values().iter().map(|&r| (-sigma * r).exp()).collect();
        let img = propagate(
            &exp_img,
            grid,
            mat,
            &geom,
            cfg.laplacian_mode,
            cfg.padding,
            cfg.blur_model,
        )?;
        for (a, v) in acc.iter_mut().zip(img) {
            *a += w * v;
        }
    }
    if max_attenuation > physics::WEAK_ATTENUATION_LIMIT {
        log::warn!(
            "max sigma*rho_perp = {max_attenuation:.3} exceeds the weak-attenuation limit; \
             spectral averaging is approximate"
        );
    }
    intensity_from(rho_perp, acc)
}

/// Replace each pixel by `Poisson(value · exposure) / exposure`.
///
/// Every pixel draws from its own ChaCha stream keyed by `seed` and the
/// pixel index, so the result does not depend on scheduling.
pub fn add_poisson_noise(img: &Raster2D, exposure: f64, seed: u64) -> Result<Raster2D> {
    if !(exposure.is_finite() && exposure > 0.0) {
        return Err(Error::invariant("exposure_scale", format!("{exposure} must be positive")));
    }
    let negative = img.values().iter().filter(|&&v| v < 0.0).count();
    if negative > 0 {
        return Err(Error::NegativeIntensity {
            count: negative,
            min: img.min(),
        });
    }
    let root = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = img
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let mean = v * exposure;
            if mean == 0.0 {
                return 0.0;
            }
            let mut rng = root.clone();
            rng.set_stream(i as u64);
            let poisson = Poisson::new(mean).expect("positive finite mean");
            poisson.sample(&mut rng) / exposure
        })
        .collect();
    img.with_values(RasterKind::Intensity, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Cylinder, VolumeKind};
    use approx::assert_relative_eq;
    use std::f64::consts::{LN_2, PI};

    const PITCH: f64 = 55e-6;

    fn carbon() -> Material {
        Material::new(6.65e-15, 5.55e-28).unwrap()
    }

    fn cfg() -> ForwardConfig {
        ForwardConfig::new(carbon(), BeamGeometry::reference(), 100.0).unwrap()
    }

    fn rho(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Raster2D {
        Raster2D::from_fn(w, h, PITCH, RasterKind::ProjectedDensity, f).unwrap()
    }

    fn bump(w: usize, h: usize, amp: f64) -> Raster2D {
        rho(w, h, |x, y| {
            let dx = x as f64 - w as f64 / 2.0;
            let dy = y as f64 - h as f64 / 2.0;
            amp * (-(dx * dx + dy * dy) / 18.0).exp()
        })
    }

    #[test]
    fn projection_of_empty_volume_is_zero() {
        let v = Volume3D::zeros(9, 3, 7, 1e-4).unwrap();
        let p = project_density(&v, 0.7).unwrap();
        assert!(p.values().iter().all(|&x| x == 0.0));
        assert_eq!((p.width(), p.height()), (9, 3));
        assert_eq!(p.pitch_x(), 1e-4);
    }

    #[test]
    fn axial_voxel_projects_to_rho_times_pitch_at_right_angles() {
        let pitch = 1e-4;
        let v = Volume3D::zeros(9, 1, 9, pitch).unwrap().with_voxel(4, 0, 4, 2e28).unwrap();
        for q in 0..4 {
            let p = project_density(&v, q as f64 * PI / 2.0).unwrap();
            assert_relative_eq!(p.get(4, 0), 2e28 * pitch, max_relative = 1e-12);
        }
    }

    #[test]
    fn projected_mass_is_conserved_at_oblique_angles() {
        let pitch = 1e-4;
        let n = 33;
        let w = 3.0 * pitch;
        let v = Volume3D::from_fn(n, 1, n, pitch, |x, _, z| (-(x * x + z * z) / (2.0 * w * w)).exp()).unwrap();
        let total: f64 = v.density().iter().sum::<f64>() * pitch * pitch;
        for phi in [0.3, 0.9, 1.7, 2.5, 4.0] {
            let p = project_density(&v, phi).unwrap();
            let mass: f64 = p.values().iter().sum::<f64>() * pitch;
            assert_relative_eq!(mass, total, max_relative = 1e-3);
        }
    }

    #[test]
    fn cylinder_projects_to_chord_profile() {
        let pitch = 1e-4;
        let n = 96;
        let r = 30.0 * pitch;
        let c = Cylinder { center_x: 0.0, center_z: 0.0, radius: r, density: 1e28, y_range: None };
        let v = Volume3D::from_cylinders(n, 2, n, pitch, &[c], 8).unwrap();
        for phi in [0.0, 0.4, 1.1] {
            let p = project_density(&v, phi).unwrap();
            for j in 0..n {
                let x = (j as f64 - (n as f64 - 1.0) / 2.0) * pitch;
                if x.abs() < 0.9 * r {
                    let chord = 2.0 * 1e28 * (r * r - x * x).sqrt();
                    assert_relative_eq!(p.get(j, 1), chord, max_relative = 0.02);
                }
            }
        }
        assert_eq!(v.kind(), VolumeKind::Density);
    }

    #[test]
    fn phase_map_examples() {
        let zero = rho(4, 4, |_, _| 0.0);
        assert!(phase_map(&zero, &carbon(), 5.919e-10).unwrap().values().iter().all(|&v| v == 0.0));
        let r = rho(4, 4, |_, _| 1e24);
        let p = phase_map(&r, &carbon(), 5.919e-10).unwrap();
        // -6.65e-15 * 5.919e-10 * 1e24
        assert_relative_eq!(p.get(0, 0), -3.936135, max_relative = 1e-12);
        assert!(p.values().iter().all(|&v| v < 0.0));
    }

    #[test]
    fn contact_intensity_examples() {
        let c = cfg();
        let zero = rho(5, 3, |_, _| 0.0);
        assert!(contact_intensity(&zero, &c).unwrap().values().iter().all(|&v| v == 100.0));
        let half = rho(5, 3, |_, _| LN_2 / 5.55e-28);
        for v in contact_intensity(&half, &c).unwrap().values() {
            assert_relative_eq!(*v, 50.0, max_relative = 1e-14);
        }
        let field = rho(6, 6, |x, y| ((x * 7 + y * 13) % 11) as f64 * 1e26);
        let out = contact_intensity(&field, &c).unwrap();
        for (o, r) in out.values().iter().zip(field.values()) {
            assert_eq!(*o, 100.0 * (-5.55e-28 * r).exp());
        }
    }

    #[test]
    fn zero_tau_reduces_to_contact() {
        let m = carbon();
        let g = BeamGeometry::reference();
        let tc = physics::theta_critical(&m, &g).unwrap();
        let c = cfg().with_geometry(g.with_divergence(tc).unwrap());
        let r = bump(32, 32, 5e26);
        let a = phase_contrast_forward(&r, &c).unwrap();
        let b = contact_intensity(&r, &c).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9 * y);
        }
    }

    #[test]
    fn uniform_input_is_unchanged_in_both_modes() {
        let r = rho(16, 12, |_, _| 3e26);
        for mode in [LaplacianMode::FourierSymbol, LaplacianMode::FiniteDifference5pt] {
            let c = cfg().with_laplacian(mode);
            let a = phase_contrast_forward(&r, &c).unwrap();
            let b = contact_intensity(&r, &c).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_relative_eq!(*x, *y, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn flux_is_conserved_in_fourier_mode() {
        let r = bump(40, 24, 2e26);
        for padding in [Padding::Mirror2x, Padding::None] {
            let c = cfg().with_padding(padding);
            let a = phase_contrast_forward(&r, &c).unwrap().mean();
            let b = contact_intensity(&r, &c).unwrap().mean();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn grating_visibility_matches_closed_form() {
        let period_px = 16usize;
        let w = 256;
        let rho0 = 0.01 / 5.55e-28;
        let r = rho(w, 4, |x, _| {
            rho0 * ((2.0 * PI * x as f64 / period_px as f64).sin() + 1.0)
        });
        let c = cfg().with_padding(Padding::None);
        let out = phase_contrast_forward(&r, &c).unwrap();
        let (max, min) = (out.max(), out.min());
        let vis = (max - min) / (max + min);
        let tau = physics::tau(c.material(), c.geometry()).unwrap();
        let p = period_px as f64 * PITCH;
        let expected = 0.01 * (1.0 + 4.0 * PI * PI * tau / (p * p));
        assert!((vis - expected).abs() / expected < 0.01, "{vis} vs {expected}");
    }

    #[test]
    fn blur_examples() {
        let img = Raster2D::from_fn(20, 20, PITCH, RasterKind::Intensity, |x, y| {
            10.0 + ((x * y) % 5) as f64
        })
        .unwrap();
        let same = source_blur(&img, 0.0, LaplacianMode::FourierSymbol, Padding::Mirror2x).unwrap();
        assert_eq!(same.values(), img.values());
        let flat = Raster2D::filled(20, 20, PITCH, RasterKind::Intensity, 7.0).unwrap();
        for mode in [LaplacianMode::FourierSymbol, LaplacianMode::FiniteDifference5pt] {
            let out = source_blur(&flat, 1.44e-8, mode, Padding::Mirror2x).unwrap();
            for v in out.values() {
                assert_relative_eq!(*v, 7.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn blur_after_sharpening_differs_from_single_tau_by_bilaplacian() {
        let r = bump(64, 64, 2e26);
        let c = cfg().with_padding(Padding::None);
        let m = c.material();
        let g = c.geometry();
        let tau0 = physics::phase_contrast_strength(m, g).unwrap();
        let a8 = g.blur_area() / 8.0;
        let product = phase_contrast_forward(&r, &c.clone().with_blur_model(BlurModel::OperatorProduct)).unwrap();
        let single = phase_contrast_forward(&r, &c).unwrap();
        // Oracle: single - product = I0 * a8 * tau0 * lap^2 exp(-sigma rho)
        let e: Vec<f64> = r.values().iter().map(|&v| (-5.55e-28 * v).exp()).collect();
        let grid = grid_of(&r);
        let bilap = apply_symbol(&e, grid, Padding::None, |kx, ky| {
            let k2 = kx * kx + ky * ky;
            k2 * k2
        })
        .unwrap();
        let mut err = 0.0;
        let mut norm = 0.0;
        for ((s, p), b) in single.values().iter().zip(product.values()).zip(&bilap) {
            let diff = s - p;
            let want = 100.0 * a8 * tau0 * b;
            err += (diff - want).powi(2);
            norm += want * want;
        }
        assert!((err / norm).sqrt() < 1e-9, "{}", (err / norm).sqrt());
    }

    #[test]
    fn fd_laplacian_of_quadratic_is_constant_inside() {
        let grid = Grid { width: 8, height: 6, pitch_x: 0.5, pitch_y: 2.0 };
        let v: Vec<f64> = (0..48)
            .map(|i| {
                let (x, y) = ((i % 8) as f64 * 0.5, (i / 8) as f64 * 2.0);
                x * x + 3.0 * y * y
            })
            .collect();
        let lap = laplacian_5pt(&v, grid);
        for y in 1..5 {
            for x in 1..7 {
                assert_relative_eq!(lap[y * 8 + x], 8.0, max_relative = 1e-12);
            }
        }
    }

    fn dispersive() -> Material {
        use crate::material::DispersionPoint;
        let table = (0..8)
            .map(|i| {
                let l = 2e-10 + i as f64 * 1e-10;
                DispersionPoint { wavelength: l, b: 6.65e-15, sigma: 4e-28 + 0.3e-28 * i as f64 }
            })
            .collect();
        carbon().with_dispersion(table).unwrap()
    }

    #[test]
    fn single_bin_poly_equals_normalized_mono() {
        let r = bump(32, 32, 1e27);
        let s = Spectrum::monochromatic(5.919e-10).unwrap();
        let c1 = ForwardConfig::new(carbon(), BeamGeometry::reference(), 1.0).unwrap();
        let poly = polychromatic_forward(&r, &s, &c1).unwrap();
        let mono = phase_contrast_forward(&r, &c1).unwrap();
        assert_eq!(poly.values(), mono.values());
    }

    #[test]
    fn two_identical_bins_equal_one() {
        let r = bump(24, 24, 1e27);
        use crate::material::DispersionPoint;
        let flat = carbon()
            .with_dispersion(vec![
                DispersionPoint { wavelength: 5e-10, b: 6.65e-15, sigma: 5.55e-28 },
                DispersionPoint { wavelength: 6e-10, b: 6.65e-15, sigma: 5.55e-28 },
            ])
            .unwrap();
        // tau depends on lambda, so the two bins sit 1e-22 m apart.
        let g = BeamGeometry::reference();
        let c = ForwardConfig::new(flat, g.with_wavelength(5.5e-10).unwrap(), 1.0).unwrap();
        let two = Spectrum::new(vec![
            crate::spectrum::SpectralBin { wavelength: 5.5e-10, weight: 0.3 },
            crate::spectrum::SpectralBin { wavelength: 5.5e-10 + 1e-22, weight: 0.7 },
        ])
        .unwrap();
        let one = Spectrum::new(vec![
            crate::spectrum::SpectralBin { wavelength: 5.5e-10, weight: 1.0 },
            crate::spectrum::SpectralBin { wavelength: 5.6e-10, weight: 0.0 },
        ])
        .unwrap();
        let a = polychromatic_forward(&r, &two, &c).unwrap();
        let b = polychromatic_forward(&r, &one, &c).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-10);
        }
    }

    #[test]
    fn eight_bin_poly_matches_brute_force() {
        let r = bump(32, 32, 5e26);
        let mat = dispersive();
        let g = BeamGeometry::reference();
        let s = Spectrum::equal_width(2.5e-10, 8.5e-10, 8, |l| 1.0 + 1e10 * l).unwrap();
        let c = ForwardConfig::new(mat.clone(), g, 1.0).unwrap();
        let poly = polychromatic_forward(&r, &s, &c).unwrap();
        // Brute force: independent monochromatic simulations, weighted mean.
        let mut acc = vec![0.0; r.len()];
        let total: f64 = s.bins().iter().map(|b| b.weight).sum();
        for bin in s.bins() {
            let cb = ForwardConfig::new(mat.clone(), g.with_wavelength(bin.wavelength).unwrap(), 1.0).unwrap();
            let img = phase_contrast_forward(&r, &cb).unwrap();
            for (a, v) in acc.iter_mut().zip(img.values()) {
                *a += bin.weight * v / total;
            }
        }
        for (x, y) in poly.values().iter().zip(&acc) {
            assert_relative_eq!(*x, *y, max_relative = 1e-12);
        }
    }

    #[test]
    fn poly_needs_dispersion_for_many_bins() {
        let r = bump(8, 8, 1e26);
        let s = Spectrum::equal_width(5e-10, 6e-10, 2, |_| 1.0).unwrap();
        assert!(matches!(
            polychromatic_forward(&r, &s, &cfg()),
            Err(Error::MissingDispersionTable { bins: 2 })
        ));
        let s = Spectrum::equal_width(1e-10, 12e-10, 2, |_| 1.0).unwrap();
        let c = ForwardConfig::new(dispersive(), BeamGeometry::reference(), 1.0).unwrap();
        assert!(matches!(
            polychromatic_forward(&r, &s, &c),
            Err(Error::OutsideDispersionTable { .. })
        ));
    }

    #[test]
    fn noise_examples() {
        let zero = Raster2D::filled(16, 16, PITCH, RasterKind::Intensity, 0.0).unwrap();
        assert!(add_poisson_noise(&zero, 3.0, 1).unwrap().values().iter().all(|&v| v == 0.0));

        let img = Raster2D::from_fn(32, 32, PITCH, RasterKind::Intensity, |x, y| 1.0 + (x + y) as f64).unwrap();
        let out = add_poisson_noise(&img, 1e6, 9).unwrap();
        for (o, i) in out.values().iter().zip(img.values()) {
            assert!((o - i).abs() / i < 1e-2);
        }

        let n = 1000;
        let flat = Raster2D::filled(n, n, PITCH, RasterKind::Intensity, 1.2).unwrap();
        let noisy = add_poisson_noise(&flat, 1.0, 42).unwrap();
        let bound = 3.0 * (1.2f64 / 1e6).sqrt();
        assert!((noisy.mean() - 1.2).abs() < bound, "{}", noisy.mean());

        let neg = Raster2D::filled(2, 2, PITCH, RasterKind::Generic, -1.0).unwrap();
        assert!(add_poisson_noise(&neg, 1.0, 0).is_err());
        assert!(add_poisson_noise(&img, 0.0, 0).is_err());
    }

    #[test]
    fn noise_is_reproducible_across_thread_counts() {
        let img = Raster2D::from_fn(64, 64, PITCH, RasterKind::Intensity, |x, _| x as f64 * 0.1).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| add_poisson_noise(&img, 2.0, 77).unwrap())
        };
        let a = run(1);
        let b = run(3);
        let bits = |r: &Raster2D| r.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&add_poisson_noise(&img, 2.0, 78).unwrap()));
    }
}
