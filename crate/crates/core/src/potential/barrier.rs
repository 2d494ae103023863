use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fields::{apply_mask, gaussian_beam, ring_phase_mask, GridSpec};
use crate::numeric::polyfit;
use crate::propagation::{focus_scan_range, IntensityVolume, ScanSettings, SourceInfo};

use super::AtomicParams;

/// Fraction of the distance to the nearest barrier used for harmonic fits.
const FIT_WINDOW: f64 = 0.25;
/// Largest tolerated quartic/quadratic contribution at the window edge.
const QUARTIC_LIMIT: f64 = 0.1;
/// Half-width (in ρ samples) of the search window when following the
/// intensity minimum from plane to plane.
const TRACK_HALF_WIDTH: usize = 8;
/// Longitudinal rises smaller than this fraction of the focal-plane peak
/// count as an open null.
const SIGNIFICANT: f64 = 1e-3;
/// Radial barriers must reach this fraction of the focal-plane peak; weaker
/// dips are diffraction ripples, not a ring trap.
const RADIAL_BARRIER: f64 = 0.05;

/// Harmonic fit `U ≈ c0 + c1·d + c2·d²` with `d` measured from `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadFit {
    pub center: f64,
    pub half_window: f64,
    /// J, J/m, J/m².
    pub coeffs: [f64; 3],
    /// |quartic| / |quadratic| contribution at the window edge.
    pub quartic_ratio: f64,
}

impl QuadFit {
    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        self.coeffs[0] + d * (self.coeffs[1] + d * self.coeffs[2])
    }

    /// Angular trap frequency √(2·c2/m), rad/s.
    pub fn omega(&self, mass: f64) -> f64 {
        (2.0 * self.coeffs[2] / mass).max(0.0).sqrt()
    }
}

/// Geometry and heights of the ring trap. Energies are joules measured from
/// the trap minimum unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierReport {
    pub source: SourceInfo,
    pub detuning_nm: f64,
    /// ħΓ, J.
    pub energy_unit: f64,
    /// Radius of the dark ring in the focal plane, m.
    pub ring_radius: f64,
    /// `(ρ, z)` of the trap minimum.
    pub min_position: (f64, f64),
    /// Absolute potential at the minimum, J.
    pub u_min: f64,
    pub u_in: f64,
    pub u_out: f64,
    pub u_z: f64,
    pub rho_in: f64,
    pub rho_out: f64,
    /// Longitudinal barrier location when it lies inside the scan.
    pub z_barrier: Option<f64>,
    pub omega_perp: f64,
    pub omega_par: f64,
    pub depth: f64,
    pub radial_fit: QuadFit,
    pub axial_fit: Option<QuadFit>,
    /// Minimum-potential path `(z, ρ, U)` through the trap, sorted by z.
    pub z_path: Vec<[f64; 3]>,
}

impl BarrierReport {
    pub fn z_bounded(&self) -> bool {
        self.z_barrier.is_some()
    }

    /// Errors unless the trap is closed in every direction.
    pub fn require_bounded(&self) -> Result<&Self> {
        if self.z_barrier.is_none() {
            return Err(Error::Topology(
                "missing longitudinal barrier: the dark ring stays open along z within the scanned range".into(),
            ));
        }
        Ok(self)
    }

    pub fn in_units(&self, u: f64) -> f64 {
        u / self.energy_unit
    }

    pub fn barrier_ratio(&self) -> f64 {
        self.u_in / self.u_out
    }

    fn rows(&self) -> Vec<(&'static str, String)> {
        let hz = |w: f64| w / std::f64::consts::TAU;
        vec![
            ("ell", self.source.ell.to_string()),
            ("rc_over_w0", format!("{:.6}", self.source.rc_over_w0)),
            ("detuning_nm", format!("{:.6}", self.detuning_nm)),
            ("power_w", format!("{:.6}", self.source.power)),
            ("ring_radius_m", format!("{:.6e}", self.ring_radius)),
            ("min_rho_m", format!("{:.6e}", self.min_position.0)),
            ("min_z_m", format!("{:.6e}", self.min_position.1)),
            ("u_min_hbar_gamma", format!("{:.6e}", self.in_units(self.u_min))),
            ("u_in_hbar_gamma", format!("{:.6e}", self.in_units(self.u_in))),
            ("u_out_hbar_gamma", format!("{:.6e}", self.in_units(self.u_out))),
            ("u_z_hbar_gamma", format!("{:.6e}", self.in_units(self.u_z))),
            ("z_bounded", self.z_bounded().to_string()),
            ("z_barrier_m", self.z_barrier.map_or("nan".into(), |z| format!("{z:.6e}"))),
            ("inner_outer_ratio", format!("{:.6}", self.barrier_ratio())),
            ("depth_hbar_gamma", format!("{:.6e}", self.in_units(self.depth))),
            ("depth_j", format!("{:.6e}", self.depth)),
            ("omega_perp_hz", format!("{:.6}", hz(self.omega_perp))),
            ("omega_par_hz", format!("{:.6}", hz(self.omega_par))),
            ("aspect_ratio", format!("{:.6e}", if self.omega_perp > 0.0 { self.omega_par / self.omega_perp } else { 0.0 })),
        ]
    }

    /// Flat `key = value` block.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.rows() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Two-line CSV (header + values).
    pub fn to_csv(&self) -> String {
        let rows = self.rows();
        let head: Vec<&str> = rows.iter().map(|r| r.0).collect();
        let vals: Vec<&str> = rows.iter().map(|r| r.1.as_str()).collect();
        format!("{}\n{}\n", head.join(","), vals.join(","))
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
}

/// Quadratic fit of `y(x)` around `center` over `|x − center| ≤ half`,
/// shrinking the window until the quartic term is small.
fn harmonic_fit(x: &[f64], y: &[f64], center: f64, mut half: f64, min_half: f64) -> Option<QuadFit> {
    loop {
        let (d, v): (Vec<f64>, Vec<f64>) = x
            .iter()
            .zip(y)
            .filter(|(x, _)| (**x - center).abs() <= half * (1.0 + 1e-9))
            .map(|(x, y)| ((x - center) / half, *y))
            .unzip();
        let quad = polyfit(&d, &v, 2)?;
        let quartic_ratio = polyfit(&d, &v, 4).map_or(0.0, |c| (c[4] / c[2]).abs());
        if quartic_ratio < QUARTIC_LIMIT || half * 0.5 < min_half {
            return Some(QuadFit {
                center,
                half_window: half,
                coeffs: [quad[0], quad[1] / half, quad[2] / (half * half)],
                quartic_ratio,
            });
        }
        half *= 0.5;
    }
}

/// Follows the local intensity minimum from plane `iz0` outward in
/// direction `step`; returns `(iz, irho)` pairs.
fn track(volume: &IntensityVolume, iz0: usize, j0: usize, step: isize) -> Vec<(usize, usize)> {
    let n = volume.n_rho();
    let mut out = Vec::new();
    let mut j = j0;
    let mut iz = iz0 as isize + step;
    while iz >= 0 && (iz as usize) < volume.n_z() {
        let row = volume.rho_profile(iz as usize);
        let lo = j.saturating_sub(TRACK_HALF_WIDTH);
        let hi = (j + TRACK_HALF_WIDTH + 1).min(n);
        j = lo + row[lo..hi].iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        out.push((iz as usize, j));
        iz += step;
    }
    out
}

/// Locates the ring minimum and its escape barriers and fits trap frequencies.
pub fn barrier_report(volume: &IntensityVolume, params: &AtomicParams) -> Result<BarrierReport> {
    let coef = params.potential_per_intensity()?;
    if coef <= 0.0 {
        return Err(Error::param("barrier analysis needs a blue (repulsive) detuning"));
    }
    if volume.n_rho() < 8 || volume.n_z() < 2 {
        return Err(Error::param("volume too small for barrier analysis"));
    }
    let rho = &volume.rho_axis;
    let iz0 = volume.z_index(0.0);
    let z0 = volume.z_axis[iz0];
    let prof = volume.rho_profile(iz0);
    let peak = prof.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Topology("focal plane is dark".into()));
    }
    let tiny = SIGNIFICANT * peak;

    // First interior local minimum that has a significant rise on both sides.
    let mut found = None;
    for j in 1..prof.len() - 1 {
        if prof[j] < prof[j - 1] && prof[j] <= prof[j + 1] {
            let inner = prof[..j].iter().copied().fold(0.0, f64::max);
            if inner - prof[j] > RADIAL_BARRIER * peak {
                found = Some(j);
                break;
            }
        }
    }
    let j = found.ok_or_else(|| {
        Error::Topology("missing inner radial barrier: no dark ring in the focal plane".into())
    })?;
    let i_min = prof[j];
    let j_in = argmax(&prof[..j]);
    let j_out = (j + 1..prof.len() - 1)
        .find(|&k| prof[k] >= prof[k - 1] && prof[k] > prof[k + 1])
        .filter(|&k| prof[k] - i_min > RADIAL_BARRIER * peak)
        .ok_or_else(|| Error::Topology("missing outer radial barrier: intensity never turns over".into()))?;

    // Minimum-intensity path in both directions along z.
    let mut sides = Vec::new();
    for step in [1isize, -1] {
        let path = track(volume, iz0, j, step);
        if !path.is_empty() {
            sides.push(path);
        }
    }
    let mut u_z = f64::INFINITY;
    let mut z_barrier = None;
    let mut bounded = !sides.is_empty();
    let mut barrier_dist = f64::INFINITY;
    for path in &sides {
        let vals: Vec<f64> = path.iter().map(|&(iz, ir)| volume.at(iz, ir)).collect();
        let k = argmax(&vals);
        let rise = vals[k] - i_min;
        let at_edge = k + 1 == vals.len();
        if at_edge || rise <= tiny {
            bounded = false;
        } else {
            let zb = volume.z_axis[path[k].0];
            if (zb - z0).abs() < barrier_dist {
                barrier_dist = (zb - z0).abs();
                z_barrier = Some(zb);
            }
        }
        u_z = u_z.min(rise.max(0.0));
    }
    if !bounded {
        z_barrier = None;
    }
    if !u_z.is_finite() {
        u_z = 0.0;
    }

    let mut z_path: Vec<[f64; 3]> = sides
        .iter()
        .flatten()
        .map(|&(iz, ir)| [volume.z_axis[iz], rho[ir], coef * volume.at(iz, ir)])
        .collect();
    z_path.push([z0, rho[j], coef * i_min]);
    z_path.sort_by(|a, b| a[0].total_cmp(&b[0]));

    // Radial harmonic fit.
    let d_rho = rho[1] - rho[0];
    let reach = (rho[j] - rho[j_in]).min(rho[j_out] - rho[j]);
    let u_prof: Vec<f64> = prof.iter().map(|i| coef * i).collect();
    let radial = harmonic_fit(rho, &u_prof, rho[j], FIT_WINDOW * reach.max(2.0 * d_rho), 2.0 * d_rho)
        .ok_or_else(|| Error::Optimization("radial harmonic fit is singular".into()))?;
    let omega_perp = radial.omega(params.mass);
    let ring_radius = if radial.coeffs[2] > 0.0 {
        (rho[j] - radial.coeffs[1] / (2.0 * radial.coeffs[2])).clamp(rho[j] - d_rho, rho[j] + d_rho)
    } else {
        rho[j]
    };

    // Axial harmonic fit along the minimum path; mirror a one-sided scan.
    let axial_fit = match z_barrier {
        Some(zb) => {
            let mut zs: Vec<f64> = z_path.iter().map(|p| p[0]).collect();
            let mut us: Vec<f64> = z_path.iter().map(|p| p[2]).collect();
            if sides.len() == 1 {
                for p in z_path.iter().filter(|p| p[0] != z0) {
                    zs.push(2.0 * z0 - p[0]);
                    us.push(p[2]);
                }
            }
            let dz = volume.z_axis[1] - volume.z_axis[0];
            harmonic_fit(&zs, &us, z0, FIT_WINDOW * (zb - z0).abs().max(2.0 * dz), 2.0 * dz)
        }
        None => None,
    };
    let omega_par = axial_fit.map_or(0.0, |f| f.omega(params.mass));

    let u_in = coef * (prof[j_in] - i_min);
    let u_out = coef * (prof[j_out] - i_min);
    let u_z = coef * u_z;
    Ok(BarrierReport {
        source: volume.source,
        detuning_nm: params.detuning_nm(),
        energy_unit: params.hbar_gamma(),
        ring_radius,
        min_position: (ring_radius, z0),
        u_min: coef * i_min,
        u_in,
        u_out,
        u_z,
        rho_in: rho[j_in],
        rho_out: rho[j_out],
        z_barrier,
        omega_perp,
        omega_par,
        depth: u_in.min(u_out).min(u_z),
        radial_fit: radial,
        axial_fit,
        z_path,
    })
}

/// Sampling used by [`equal_barrier_rc_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcSearchSettings {
    pub grid: GridSpec,
    pub scan: ScanSettings,
    /// Scan covers `z ∈ [0, z_max]`; the focus is symmetric in ±z.
    pub z_max: f64,
    pub n_planes: usize,
    pub lo: f64,
    pub hi: f64,
    pub coarse_step: f64,
    pub tolerance: f64,
}

impl Default for RcSearchSettings {
    fn default() -> Self {
        Self {
            grid: GridSpec::slm_default(),
            scan: ScanSettings::default(),
            z_max: 12e-3,
            n_planes: 61,
            lo: 0.5,
            hi: 1.0,
            coarse_step: 0.05,
            tolerance: 1e-3,
        }
    }
}

/// Result of the equal-barrier search with its coarse diagnostic scan.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualBarrierSearch {
    pub ell: i32,
    pub rc_over_w0: f64,
    /// `(Rc/w0, (U_z − U_in)/U_in)`; `None` where no trap forms.
    pub scan: Vec<(f64, Option<f64>)>,
    pub evaluations: usize,
}

/// Rc/w0 at which the longitudinal barrier equals the inner radial barrier.
pub fn equal_barrier_rc(ell: i32, w0: f64, f: f64, wavelength: f64) -> Result<f64> {
    equal_barrier_rc_with(ell, w0, f, wavelength, &RcSearchSettings::default()).map(|s| s.rc_over_w0)
}

pub fn equal_barrier_rc_with(
    ell: i32,
    w0: f64,
    f: f64,
    wavelength: f64,
    settings: &RcSearchSettings,
) -> Result<EqualBarrierSearch> {
    if !(0..=3).contains(&ell) {
        return Err(Error::param(format!("ell = {ell} is outside 0..=3")));
    }
    let beam = gaussian_beam(settings.grid, w0, 1.0, wavelength)?;
    // Both barriers scale with the same coefficient; any blue detuning works.
    let params = AtomicParams::rb85(1.0);
    let mut evaluations = 0;
    let mut diff = |x: f64| -> Result<Option<f64>> {
        evaluations += 1;
        let mask = ring_phase_mask(settings.grid, ell, x * w0)?;
        let field = apply_mask(&beam, &mask)?;
        let source = SourceInfo { ell, rc_over_w0: x, w0, f, wavelength, power: 1.0 };
        let vol = focus_scan_range(&field, f, 0.0, settings.z_max, settings.n_planes, &settings.scan, source)?;
        match barrier_report(&vol, &params) {
            Ok(r) if r.u_in > 0.0 => Ok(Some((r.u_z - r.u_in) / r.u_in)),
            Ok(_) | Err(Error::Topology(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let n = ((settings.hi - settings.lo) / settings.coarse_step).round() as usize;
    let mut scan = Vec::with_capacity(n + 1);
    let mut bracket = None;
    for i in 0..=n {
        let x = settings.lo + i as f64 * settings.coarse_step;
        let d = diff(x)?;
        if let (Some((xp, Some(dp))), Some(dc)) = (scan.last().copied(), d) {
            if bracket.is_none() && dp < 0.0 && dc >= 0.0 {
                bracket = Some((xp, dp, x, dc));
            }
        }
        scan.push((x, d));
    }
    let diagnostic = || {
        scan.iter()
            .map(|(x, d)| format!("{x:.3}:{}", d.map_or("none".into(), |d| format!("{d:+.3}"))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let (mut a, mut fa, mut b, mut fb) = bracket.ok_or_else(|| {
        Error::Optimization(format!(
            "no sign change of (U_z - U_in) in Rc/w0 in [{}, {}] for ell = {ell}; scan: {}",
            settings.lo,
            settings.hi,
            diagnostic()
        ))
    })?;

    // Illinois false position on the bracket.
    let mut side = 0i8;
    while b - a > settings.tolerance {
        let c = b - fb * (b - a) / (fb - fa);
        let c = if c <= a || c >= b { 0.5 * (a + b) } else { c };
        let fc = diff(c)?.ok_or_else(|| {
            Error::Optimization(format!("trap lost at Rc/w0 = {c:.4} inside the bracket; scan: {}", diagnostic()))
        })?;
        if fc < 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        if fc.abs() < 1e-6 {
            break;
        }
    }
    let root = a - fa * (b - a) / (fb - fa);
    Ok(EqualBarrierSearch { ell, rc_over_w0: root.clamp(a, b), scan, evaluations })
}
