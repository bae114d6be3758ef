use std::f64::consts::{FRAC_PI_2, PI};

use phasebeam::forward::project_density;
use phasebeam::tomo::{fbp, make_sinogram, uniform_angles, AngularSpan, RampFilter};
use phasebeam::Volume3D;
use proptest::prelude::*;

const N: usize = 16;

fn random_volume(seed: u64) -> Volume3D {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let values = (0..N * N * N).map(|_| next()).collect();
    Volume3D::new(N, N, N, 1.0, phasebeam::VolumeKind::Density, values).unwrap()
}

/// Brute-force line sums along the grid axis selected by a quarter turn.
fn axis_projection(vol: &Volume3D, quarter: usize) -> Vec<f64> {
    let n = vol.nx();
    let mut out = vec![0.0; n * vol.ny()];
    for y in 0..vol.ny() {
        for j in 0..n {
            let mut sum = 0.0;
            for t in 0..n {
                sum += match quarter {
                    0 => vol.get(j, y, t),
                    1 => vol.get(t, y, j),
                    2 => vol.get(n - 1 - j, y, t),
                    _ => vol.get(t, y, n - 1 - j),
                };
            }
            out[y * n + j] = sum * vol.pitch();
        }
    }
    out
}

#[test]
fn axis_aligned_projections_equal_brute_force_sums() {
    let vol = random_volume(1);
    for quarter in 0..4 {
        let p = project_density(&vol, quarter as f64 * FRAC_PI_2).unwrap();
        let expected = axis_projection(&vol, quarter);
        for (a, b) in p.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9, "quarter {quarter}: {a} vs {b}");
        }
    }
}

/// Off-centre Gaussian blob and its analytic line integral at detector
/// coordinate `s` for angle `phi`.
fn gaussian(n: usize, w: f64, x0: f64, z0: f64) -> (Volume3D, impl Fn(f64, f64) -> f64) {
    let vol = Volume3D::from_fn(n, 1, n, 1.0, |x, _, z| {
        (-((x - x0).powi(2) + (z - z0).powi(2)) / (2.0 * w * w)).exp()
    })
    .unwrap();
    let line = move |s: f64, phi: f64| {
        let s0 = x0 * phi.cos() + z0 * phi.sin();
        (2.0 * PI).sqrt() * w * (-(s - s0).powi(2) / (2.0 * w * w)).exp()
    };
    (vol, line)
}

#[test]
fn smooth_volume_matches_analytic_line_integrals_at_oblique_angles() {
    let n = 48;
    let (vol, line) = gaussian(n, 4.0, 3.0, -5.0);
    let peak = (2.0 * PI).sqrt() * 4.0;
    for phi in [0.3, 0.7, 1.1, 2.0, 2.9, 4.0, 5.5] {
        let p = project_density(&vol, phi).unwrap();
        for j in 0..n {
            let s = j as f64 - (n as f64 - 1.0) / 2.0;
            let err = (p.get(j, 0) - line(s, phi)).abs() / peak;
            assert!(err < 0.01, "phi {phi}, bin {j}: {err}");
        }
    }
}

#[test]
fn conjugate_views_are_mirror_images() {
    let (vol, _) = gaussian(32, 3.0, 4.0, 2.0);
    for phi in [0.2, 1.3, 2.5] {
        let a = project_density(&vol, phi).unwrap();
        let b = project_density(&vol, phi + PI).unwrap();
        for j in 0..32 {
            assert!((a.get(j, 0) - b.get(31 - j, 0)).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn projection_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in 0.0f64..3.0, b in 0.0f64..3.0, phi in 0.0f64..std::f64::consts::TAU) {
        let (v1, v2) = (random_volume(s1), random_volume(s2));
        let combo: Vec<f64> = v1.density().iter().zip(v2.density()).map(|(x, y)| a * x + b * y).collect();
        let v = Volume3D::new(N, N, N, 1.0, phasebeam::VolumeKind::Density, combo).unwrap();
        let (p1, p2, p) = (
            project_density(&v1, phi).unwrap(),
            project_density(&v2, phi).unwrap(),
            project_density(&v, phi).unwrap(),
        );
        for i in 0..p.len() {
            let expected = a * p1.values()[i] + b * p2.values()[i];
            prop_assert!((p.values()[i] - expected).abs() < 1e-4 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn shifting_along_the_detector_axis_shifts_the_projection(seed in 0u64..1000) {
        // Shift by one voxel along x with a zero column entering.
        let v = random_volume(seed);
        let shifted = Volume3D::from_fn(N, N, N, 1.0, |_, _, _| 0.0).unwrap();
        let mut data = shifted.density().to_vec();
        for y in 0..N {
            for z in 0..N {
                for x in 1..N {
                    data[v.index(x, y, z)] = v.get(x - 1, y, z);
                }
            }
        }
        let moved = Volume3D::new(N, N, N, 1.0, phasebeam::VolumeKind::Density, data).unwrap();
        let p = project_density(&v, 0.0).unwrap();
        let q = project_density(&moved, 0.0).unwrap();
        for y in 0..N {
            for x in 1..N {
                prop_assert!((q.get(x, y) - p.get(x - 1, y)).abs() < 1e-9);
            }
            prop_assert!(q.get(0, y).abs() < 1e-12);
        }
    }
}

fn disk_error(n_angles: usize) -> f64 {
    let n = 128;
    let r = 40.0;
    let vol = Volume3D::from_fn(n, 1, n, 1.0, |x, _, z| if x * x + z * z < r * r { 1.0 } else { 0.0 }).unwrap();
    let angles = uniform_angles(n_angles, AngularSpan::Half0To180, false);
    let sino = make_sinogram(&vol, &angles).unwrap();
    let slice = fbp(&sino, RampFilter::RamLak, AngularSpan::Half0To180).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n {
        for i in 0..n {
            let x = i as f64 - 63.5;
            let z = k as f64 - 63.5;
            let rho = (x * x + z * z).sqrt();
            if (rho - r).abs() > 3.0 && rho < 58.0 {
                let truth = vol.get(i, 0, k);
                num += (slice.get(i, k) - truth).powi(2);
                den += 1.0;
            }
        }
    }
    (num / den).sqrt()
}

#[test]
fn fbp_error_shrinks_with_more_angles() {
    let errors: Vec<f64> = [45, 90, 180, 360].iter().map(|&n| disk_error(n)).collect();
    for pair in errors.windows(2) {
        assert!(pair[1] <= pair[0] * 1.02, "{errors:?}");
    }
    assert!(errors[3] < 0.5 * errors[0], "{errors:?}");
    assert!(errors[2] < 0.05, "{errors:?}");
}
