use darkring::fields::*;
use darkring::propagation::*;
use num_complex::Complex64;

const LAMBDA: f64 = 780e-9;

/// Relative L2 distance after removing the best global phase.
fn l2_error(num: &ComplexField, exact: &ComplexField) -> f64 {
    let inner: Complex64 = exact.data.iter().zip(&num.data).map(|(b, a)| b.conj() * a).sum();
    let rot = Complex64::from_polar(1.0, -inner.arg());
    let diff: f64 = num.data.iter().zip(&exact.data).map(|(a, b)| (a * rot - b).norm_sqr()).sum();
    let norm: f64 = exact.data.iter().map(|b| b.norm_sqr()).sum();
    (diff / norm).sqrt()
}

fn plain_l2(a: &ComplexField, b: &ComplexField) -> f64 {
    let diff: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm_sqr()).sum();
    let norm: f64 = b.data.iter().map(|y| y.norm_sqr()).sum();
    (diff / norm).sqrt()
}

fn small_grid() -> GridSpec {
    GridSpec::new(512, 2e-6).unwrap()
}

#[test]
fn preset_gaussian_focuses_to_analytic_waist() {
    let g = GridSpec::slm_default();
    let beam = gaussian_beam(g, 1.7e-3, 0.15, LAMBDA).unwrap();
    let focal = to_focal_region_on(&beam, 0.215, GridSpec::new(512, 0.5e-6).unwrap()).unwrap();
    let expected = LAMBDA * 0.215 / (std::f64::consts::PI * 1.7e-3);
    assert!((expected - 31.4e-6).abs() < 0.1e-6);
    let w = focal.second_moment_radius();
    assert!((w / expected - 1.0).abs() < 1e-3, "focal waist {w}");
    assert!((focal.power() / beam.power() - 1.0).abs() < 1e-6);
}

#[test]
fn lens_then_free_space_matches_gaussian_q_parameter() {
    let (w0, f, z) = (0.2e-3, 50e-3, 50e-3);
    let g = small_grid();
    let beam = gaussian_beam(g, w0, 1.0, LAMBDA).unwrap();
    let lensed = apply_mask(&beam, &lens_phase(g, f, LAMBDA).unwrap()).unwrap();
    let out = angular_spectrum(&lensed, z).unwrap();
    // 1/q after the lens, then q → q + z.
    let zr = std::f64::consts::PI * w0 * w0 / LAMBDA;
    let q1 = 1.0 / (Complex64::new(0.0, -1.0 / zr) - 1.0 / f);
    let q = q1 + z;
    let inv = 1.0 / q;
    let w = (-LAMBDA / (std::f64::consts::PI * inv.im)).sqrt();
    let measured = out.second_moment_radius();
    assert!((measured / w - 1.0).abs() < 1e-3, "{measured} vs {w}");
    let expected_peak = 2.0 / (std::f64::consts::PI * w * w);
    assert!((out.peak_intensity() / expected_peak - 1.0).abs() < 2e-3);
}

#[test]
fn gaussian_widens_by_root_two_at_rayleigh_range() {
    let w0 = 0.1e-3;
    let zr = std::f64::consts::PI * w0 * w0 / LAMBDA;
    let beam = lg_mode(small_grid(), 0, 0, w0, LAMBDA).unwrap();
    let out = angular_spectrum(&beam, zr).unwrap();
    assert!((out.second_moment_radius() / (w0 * 2f64.sqrt()) - 1.0).abs() < 1e-3);
    assert!((gaussian_width(w0, LAMBDA, zr) / (w0 * 2f64.sqrt()) - 1.0).abs() < 1e-12);
}

#[test]
fn lg_modes_match_closed_form_after_propagation() {
    let w0 = 0.1e-3;
    let zr = std::f64::consts::PI * w0 * w0 / LAMBDA;
    for (p, ell) in [(0, 0), (0, 1), (1, 1)] {
        for z in [0.5 * zr, zr] {
            let start = lg_mode(small_grid(), p, ell, w0, LAMBDA).unwrap();
            let num = angular_spectrum(&start, z).unwrap();
            let exact = lg_mode_at(small_grid(), p, ell, w0, LAMBDA, z).unwrap();
            let e = l2_error(&num, &exact);
            assert!(e < 1e-3, "LG_{p}^{ell} at z = {z}: L2 error {e}");
            assert!((num.power() / start.power() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn composition_and_reciprocity() {
    let g = small_grid();
    let start = lg_mode(g, 1, 1, 0.1e-3, LAMBDA).unwrap();
    let (z1, z2) = (7e-3, 11e-3);
    let two = angular_spectrum(&angular_spectrum(&start, z1).unwrap(), z2).unwrap();
    let one = angular_spectrum(&start, z1 + z2).unwrap();
    assert!(plain_l2(&two, &one) < 1e-9);
    let back = angular_spectrum(&angular_spectrum(&start, 20e-3).unwrap(), -20e-3).unwrap();
    assert!(plain_l2(&back, &start) < 1e-9);
}

#[test]
fn focus_scan_is_symmetric_and_conserves_peak_scaling() {
    let g = GridSpec::with_extent(256, 16e-3).unwrap();
    let beam = gaussian_beam(g, 1.7e-3, 0.15, LAMBDA).unwrap();
    let s = ScanSettings { focal_n: 128, focal_pitch: 2e-6, n_radial: 64, n_angles: 64 };
    let v = focus_scan(&beam, 0.215, 2e-3, 11, &s, SourceInfo::default()).unwrap();
    assert!(v.symmetric);
    for iz in 0..v.n_z() {
        let mirror = v.n_z() - 1 - iz;
        for ir in 0..v.n_rho() {
            assert!((v.at(iz, ir) - v.at(mirror, ir)).abs() <= 1e-9 * v.peak());
        }
    }
    let doubled = focus_scan(&beam.clone().scaled(2f64.sqrt()), 0.215, 2e-3, 11, &s, SourceInfo::default()).unwrap();
    assert!((doubled.peak() / v.peak() - 2.0).abs() < 1e-9);
}

#[test]
fn ring_mask_focuses_to_two_concentric_rings() {
    let g = GridSpec::slm_default();
    let beam = gaussian_beam(g, 1.7e-3, 0.15, LAMBDA).unwrap();
    let masked = apply_mask(&beam, &ring_phase_mask(g, 1, 0.79 * 1.7e-3).unwrap()).unwrap();
    assert!((masked.power() / beam.power() - 1.0).abs() < 1e-12);
    let s = ScanSettings::default();
    let v = focus_scan(&masked, 0.215, 1e-3, 11, &s, SourceInfo::default()).unwrap();
    let prof = v.rho_profile(v.z_index(0.0));
    let peak = prof.iter().copied().fold(0.0, f64::max);
    let maxima = (1..prof.len() - 1)
        .filter(|&i| prof[i] > prof[i - 1] && prof[i] >= prof[i + 1] && prof[i] > 0.05 * peak)
        .count();
    assert!(maxima >= 2, "{maxima} bright rings");
    assert!(prof[0] < 1e-6 * peak, "vortex keeps the axis dark");
}
