use darkring::fields::*;
use darkring::potential::*;
use darkring::propagation::*;

const W0: f64 = 1.7e-3;
const F: f64 = 0.215;

fn ring_volume(detuning_nm: f64, rc_over_w0: f64, power: f64) -> (IntensityVolume, AtomicParams) {
    let p = AtomicParams::rb85(detuning_nm);
    let lam = p.trap_wavelength();
    let g = GridSpec::slm_default();
    let beam = gaussian_beam(g, W0, power, lam).unwrap();
    let field = apply_mask(&beam, &ring_phase_mask(g, 1, rc_over_w0 * W0).unwrap()).unwrap();
    let source = SourceInfo { ell: 1, rc_over_w0, w0: W0, f: F, wavelength: lam, power };
    (focus_scan(&field, F, 10e-3, 101, &ScanSettings::default(), source).unwrap(), p)
}

#[test]
fn potential_vanishes_between_the_fine_structure_lines() {
    let p = AtomicParams::rb85(1.0);
    let mut q = p;
    q.detuning = -2.0 / 3.0 * p.fine_structure;
    assert!(q.potential_per_intensity().unwrap().abs() < 1e-12 * p.potential_per_intensity().unwrap().abs());
    q.detuning *= 0.9;
    assert!(q.potential_per_intensity().unwrap() < 0.0);
    q.detuning = -2.0 / 3.0 * p.fine_structure * 1.1;
    assert!(q.potential_per_intensity().unwrap() > 0.0);
}

#[test]
fn far_detuned_limits() {
    // Large |Δ| ≫ Δ_LS: U → ħΓ²I/(8 I_s Δ) and the Raman rate falls as Δ⁻⁴.
    let mut p = AtomicParams::rb85(1.0);
    p.detuning = 1e4 * p.fine_structure;
    let u = p.potential_per_intensity().unwrap();
    let two_level = darkring::constants::HBAR * p.gamma * p.gamma / (8.0 * p.sat_intensity * p.detuning);
    assert!((u / two_level - 1.0).abs() < 1e-3);
    let r1 = p.rates_per_intensity().unwrap().raman;
    p.detuning *= 2.0;
    let r2 = p.rates_per_intensity().unwrap().raman;
    assert!((r1 / r2 / 16.0 - 1.0).abs() < 1e-3);
}

#[test]
fn recoil_temperature_matches_photon_momentum() {
    let p = AtomicParams::rb85(1.0);
    let h = 6.626_070_15e-34;
    let lam = 780.24e-9 - 1e-9;
    let expected = h * h / (2.0 * p.mass * lam * lam * 1.380_649e-23);
    assert!((recoil_temperature(&p) / expected - 1.0).abs() < 1e-8);
    assert!((recoil_temperature(&p) - 186e-9).abs() < 2e-9);
    let rate = 3.0;
    let heat = recoil_heating_rate(rate, &p).unwrap();
    assert!((heat - rate * RECOIL_BUDGET * 2.0 * expected).abs() < 1e-8 * heat);
    assert!(recoil_heating_rate(-1.0, &p).is_err());
}

#[test]
fn ring_trap_is_closed_with_matched_barriers() {
    let (v, p) = ring_volume(1.0, 0.792, 0.15);
    let r = barrier_report(&v, &p).unwrap();
    r.require_bounded().unwrap();
    assert!(r.u_in > 0.0 && r.u_out > r.u_in && r.u_z > 0.0);
    assert!((r.u_z / r.u_in - 1.0).abs() < 0.05, "u_z/u_in = {}", r.u_z / r.u_in);
    assert!(r.depth <= r.u_in.min(r.u_z) + 1e-30);
    assert!(r.omega_perp > 100.0 * r.omega_par);
    assert!(r.ring_radius > 10e-6 && r.ring_radius < 100e-6);
}

#[test]
fn barriers_scale_with_power_and_detuning() {
    let (v, p) = ring_volume(1.0, 0.792, 0.15);
    let a = barrier_report(&v, &p).unwrap();
    let b = barrier_report(&v.clone().scaled(2.0), &p).unwrap();
    assert!((b.u_in / a.u_in - 2.0).abs() < 1e-9);
    assert!((b.omega_perp / a.omega_perp - 2f64.sqrt()).abs() < 1e-6);
    let per1 = p.potential_per_intensity().unwrap();
    let per2 = p.with_detuning_nm(2.0).potential_per_intensity().unwrap();
    assert!(per2 < per1 && per2 > 0.4 * per1);
}

#[test]
fn interpolated_force_is_minus_energy_gradient() {
    let (v, p) = ring_volume(1.0, 0.792, 0.15);
    let r = barrier_report(&v, &p).unwrap();
    let field = PotentialField::new(&v, p, true).unwrap();
    let h = 1e-9;
    for pt in [[r.ring_radius, 0.0, 0.0], [0.7 * r.ring_radius, 0.5 * r.ring_radius, 1e-3], [5e-6, -3e-6, -2e-3]] {
        let g = field.gradient(pt).unwrap();
        for d in 0..3 {
            let (mut a, mut b) = (pt, pt);
            a[d] += h;
            b[d] -= h;
            let fd = (field.energy(a).unwrap() - field.energy(b).unwrap()) / (2.0 * h);
            let scale = g.iter().map(|c| c.abs()).fold(1e-30, f64::max);
            assert!((g[d] - fd).abs() < 1e-3 * scale, "axis {d} at {pt:?}: {} vs {fd}", g[d]);
        }
    }
    // Gravity only tilts y.
    let flat = PotentialField::new(&v, p, false).unwrap();
    let pt = [r.ring_radius, 0.0, 0.0];
    let dg = field.gradient(pt).unwrap()[1] - flat.gradient(pt).unwrap()[1];
    assert!((dg - p.mass * darkring::constants::G_EARTH).abs() < 1e-9 * dg);
}

#[test]
fn red_trap_scatters_faster_than_blue_ring() {
    let p = AtomicParams::rb85(-1.0);
    let depth = 0.1 * p.hbar_gamma();
    let t = red_trap_scattering_time(depth, &p, 5e-6).unwrap();
    assert!(t > 0.0 && t.is_finite());
    assert!(red_trap_scattering_time(depth, &AtomicParams::rb85(1.0), 5e-6).is_err());
    // Deeper traps scatter faster.
    assert!(red_trap_scattering_time(2.0 * depth, &p, 5e-6).unwrap() < t);
}
