//! Free-space propagation of shaped beams and the focal intensity volume.
//!
//! The lens jump uses the exact optical Fourier-transform relation (source
//! in the front focal plane), evaluated either with a plain FFT, which fixes
//! the focal pitch at `λf/(n·pitch)`, or with a Bluestein scaled DFT onto any
//! focal grid. Steps along z inside the focal region use the angular-spectrum
//! transfer function `exp(i·dz·√(k² − k⊥²))` with evanescent components dropped.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{ComplexField, GridSpec};
use crate::transform::{fft_freq, Fft2, ScaledDft};

/// Fraction of spectral power tolerated in the outer tenth of the band.
pub const NYQUIST_GUARD: f64 = 1e-6;
/// Fraction of spectral power tolerated beyond the transfer-function
/// sampling limit of a single propagation step.
pub const TRANSFER_GUARD: f64 = 1e-4;

fn spectrum(field: &ComplexField) -> (Fft2, Vec<Complex64>) {
    let fft = Fft2::new(field.grid.n);
    let mut data = field.data.clone();
    fft.forward(&mut data);
    (fft, data)
}

/// Fraction of spectral power whose frequency exceeds `frac` of Nyquist on either axis.
fn outer_band_fraction(spec: &[Complex64], grid: &GridSpec, frac: f64) -> f64 {
    let n = grid.n;
    let nyq = 0.5 / grid.pitch;
    let (mut outer, mut total) = (0.0, 0.0);
    for (idx, c) in spec.iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        let fx = fft_freq(idx % n, n, grid.pitch).abs();
        let fy = fft_freq(idx / n, n, grid.pitch).abs();
        if fx.max(fy) > frac * nyq {
            outer += e;
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

/// Fraction of spectral power above the radial frequency `f_lim`.
fn beyond_fraction(spec: &[Complex64], grid: &GridSpec, f_lim: f64) -> f64 {
    let n = grid.n;
    let (mut outer, mut total) = (0.0, 0.0);
    for (idx, c) in spec.iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        let fx = fft_freq(idx % n, n, grid.pitch);
        let fy = fft_freq(idx / n, n, grid.pitch);
        if fx.abs() > f_lim || fy.abs() > f_lim {
            outer += e;
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

/// Largest spatial frequency whose transfer-function phase is sampled
/// without aliasing for a step `dz` on this grid.
pub fn transfer_limit(grid: &GridSpec, wavelength: f64, dz: f64) -> f64 {
    let df = 1.0 / grid.extent();
    1.0 / (wavelength * ((2.0 * df * dz).powi(2) + 1.0).sqrt())
}

fn kz_table(grid: &GridSpec, wavelength: f64) -> Vec<f64> {
    let n = grid.n;
    let k = TAU / wavelength;
    (0..grid.len())
        .map(|idx| {
            let kx = TAU * fft_freq(idx % n, n, grid.pitch);
            let ky = TAU * fft_freq(idx / n, n, grid.pitch);
            let arg = k * k - kx * kx - ky * ky;
            if arg > 0.0 {
                arg.sqrt()
            } else {
                f64::NAN
            }
        })
        .collect()
}

fn apply_transfer(spec: &[Complex64], kz: &[f64], dz: f64, out: &mut [Complex64]) {
    for ((o, s), &q) in out.iter_mut().zip(spec).zip(kz) {
        *o = if q.is_nan() { Complex64::new(0.0, 0.0) } else { s * Complex64::from_polar(1.0, q * dz) };
    }
}

/// Propagates `field` by `dz` with the exact scalar transfer function.
pub fn angular_spectrum(field: &ComplexField, dz: f64) -> Result<ComplexField> {
    if dz == 0.0 {
        return Ok(field.clone());
    }
    let (fft, spec) = spectrum(field);
    let outer = outer_band_fraction(&spec, &field.grid, 0.9);
    if outer > NYQUIST_GUARD {
        return Err(Error::Sampling(format!(
            "field is not band-limited: {outer:.3e} of its spectral power lies in the outer tenth of the band (limit {NYQUIST_GUARD:e})"
        )));
    }
    let kz = kz_table(&field.grid, field.wavelength);
    let mut data = vec![Complex64::new(0.0, 0.0); spec.len()];
    apply_transfer(&spec, &kz, dz, &mut data);
    fft.inverse(&mut data);
    Ok(ComplexField { grid: field.grid, wavelength: field.wavelength, data })
}

fn check_focus(field: &ComplexField, f: f64) -> Result<()> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::param(format!("focal length {f} must be positive")));
    }
    let na = 0.5 * field.grid.extent() / f;
    if na > 0.1 {
        return Err(Error::param(format!("aperture NA {na:.3} is outside the paraxial regime")));
    }
    Ok(())
}

/// Focal-plane field with the FFT-fixed pitch `λf/(n·pitch)`.
///
/// Unitary: power is conserved to rounding.
pub fn to_focal_region(field: &ComplexField, f: f64) -> Result<ComplexField> {
    check_focus(field, f)?;
    let n = field.grid.n;
    let lam = field.wavelength;
    let out_pitch = lam * f / (n as f64 * field.grid.pitch);
    let out_grid = GridSpec::new(n, out_pitch)?;
    // Centered DFT via the checkerboard shift; n/2 is even for n >= 64.
    let mut data: Vec<Complex64> = field
        .data
        .iter()
        .enumerate()
        .map(|(idx, c)| if (idx % n + idx / n) % 2 == 1 { -c } else { *c })
        .collect();
    Fft2::new(n).forward(&mut data);
    let scale = field.grid.pitch * field.grid.pitch / (lam * f);
    let factor = Complex64::new(0.0, -scale);
    for (idx, c) in data.iter_mut().enumerate() {
        let sign = if (idx % n + idx / n) % 2 == 1 { -1.0 } else { 1.0 };
        *c *= factor * sign;
    }
    Ok(ComplexField { grid: out_grid, wavelength: lam, data })
}

/// Focal-plane field sampled on an arbitrary `out_grid` (zoomed transform).
///
/// Power outside `out_grid` is not represented.
pub fn to_focal_region_on(field: &ComplexField, f: f64, out_grid: GridSpec) -> Result<ComplexField> {
    check_focus(field, f)?;
    let lam = field.wavelength;
    let alpha = field.grid.pitch * out_grid.pitch / (lam * f);
    let sd = ScaledDft::new(field.grid.n, out_grid.n, alpha);
    let mut data = sd.apply_2d(&field.data);
    let scale = field.grid.pitch * field.grid.pitch / (lam * f);
    let factor = Complex64::new(0.0, -scale);
    for c in &mut data {
        *c *= factor;
    }
    Ok(ComplexField { grid: out_grid, wavelength: lam, data })
}

/// Where the source came from; copied into the volume metadata.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceInfo {
    pub ell: i32,
    pub rc_over_w0: f64,
    pub w0: f64,
    pub f: f64,
    pub wavelength: f64,
    pub power: f64,
}

/// Focal-region sampling used by [`focus_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub focal_n: usize,
    pub focal_pitch: f64,
    pub n_radial: usize,
    pub n_angles: usize,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self { focal_n: 512, focal_pitch: 1.0e-6, n_radial: 512, n_angles: 256 }
    }
}

/// Cylindrically reduced intensity `I(ρ, z)` around the focus.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVolume {
    pub rho_axis: Vec<f64>,
    pub z_axis: Vec<f64>,
    /// Row-major `[iz][irho]`, W/m².
    pub intensity: Vec<f64>,
    pub source: SourceInfo,
    /// Largest standard deviation of the focal-plane intensity around a
    /// sampled circle, relative to the largest circle mean.
    pub anisotropy: f64,
    /// True when the source behaves as a pure `e^{iℓφ}` field.
    pub symmetric: bool,
}

/// Anisotropy below which a focal plane counts as azimuthally symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-2;

impl IntensityVolume {
    pub fn n_rho(&self) -> usize {
        self.rho_axis.len()
    }

    pub fn n_z(&self) -> usize {
        self.z_axis.len()
    }

    #[inline]
    pub fn at(&self, iz: usize, irho: usize) -> f64 {
        self.intensity[iz * self.rho_axis.len() + irho]
    }

    pub fn rho_profile(&self, iz: usize) -> &[f64] {
        let n = self.rho_axis.len();
        &self.intensity[iz * n..(iz + 1) * n]
    }

    pub fn z_profile(&self, irho: usize) -> Vec<f64> {
        (0..self.n_z()).map(|iz| self.at(iz, irho)).collect()
    }

    /// Index of the plane nearest `z`.
    pub fn z_index(&self, z: f64) -> usize {
        nearest(&self.z_axis, z)
    }

    pub fn peak(&self) -> f64 {
        self.intensity.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for v in &mut self.intensity {
            *v *= s;
        }
        self.source.power *= s;
        self
    }
}

fn nearest(axis: &[f64], v: f64) -> usize {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Precomputed bilinear stencils for the polar resampling.
struct PolarSampler {
    n_radial: usize,
    n_angles: usize,
    rho: Vec<f64>,
    idx: Vec<[usize; 4]>,
    w: Vec<[f64; 4]>,
}

impl PolarSampler {
    fn new(grid: &GridSpec, n_radial: usize, n_angles: usize) -> Self {
        let n = grid.n;
        let rho_max = (n / 2 - 2) as f64 * grid.pitch;
        let d_rho = rho_max / (n_radial - 1) as f64;
        let rho: Vec<f64> = (0..n_radial).map(|i| i as f64 * d_rho).collect();
        let mut idx = Vec::with_capacity(n_radial * n_angles);
        let mut w = Vec::with_capacity(n_radial * n_angles);
        let c = (n / 2) as f64;
        for &r in &rho {
            for a in 0..n_angles {
                let th = TAU * a as f64 / n_angles as f64;
                let fx = r * th.cos() / grid.pitch + c;
                let fy = r * th.sin() / grid.pitch + c;
                let (x0, y0) = (fx.floor(), fy.floor());
                let (tx, ty) = (fx - x0, fy - y0);
                let (x0, y0) = (x0 as usize, y0 as usize);
                idx.push([y0 * n + x0, y0 * n + x0 + 1, (y0 + 1) * n + x0, (y0 + 1) * n + x0 + 1]);
                w.push([(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty]);
            }
        }
        Self { n_radial, n_angles, rho, idx, w }
    }

    /// Azimuthal mean and relative std per radius.
    fn reduce(&self, intensity: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut mean = Vec::with_capacity(self.n_radial);
        let mut rel = Vec::with_capacity(self.n_radial);
        for r in 0..self.n_radial {
            let (mut s, mut s2) = (0.0, 0.0);
            for a in 0..self.n_angles {
                let k = r * self.n_angles + a;
                let i = &self.idx[k];
                let w = &self.w[k];
                let v = w[0] * intensity[i[0]]
                    + w[1] * intensity[i[1]]
                    + w[2] * intensity[i[2]]
                    + w[3] * intensity[i[3]];
                s += v;
                s2 += v * v;
            }
            let m = s / self.n_angles as f64;
            let var = (s2 / self.n_angles as f64 - m * m).max(0.0);
            mean.push(m);
            rel.push(if m > 0.0 { var.sqrt() / m } else { 0.0 });
        }
        (mean, rel)
    }
}

/// Largest std of intensity around circles on a sampled plane, relative
/// to the largest circle mean.
pub fn azimuthal_anisotropy(field: &ComplexField, n_radial: usize, n_angles: usize) -> f64 {
    let sampler = PolarSampler::new(&field.grid, n_radial, n_angles);
    anisotropy_of(&sampler, &field.intensity())
}

fn anisotropy_of(sampler: &PolarSampler, intensity: &[f64]) -> f64 {
    let (mean, rel) = sampler.reduce(intensity);
    let peak = mean.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    mean.iter().zip(&rel).map(|(m, r)| m * r / peak).fold(0.0, f64::max)
}

/// Symmetric scan over `z ∈ [−z_span, z_span]`; `n_planes` odd so the focus is sampled.
pub fn focus_scan(
    field: &ComplexField,
    f: f64,
    z_span: f64,
    n_planes: usize,
    settings: &ScanSettings,
    source: SourceInfo,
) -> Result<IntensityVolume> {
    if n_planes < 11 || n_planes % 2 == 0 {
        return Err(Error::param(format!("n_planes {n_planes} must be odd and >= 11")));
    }
    if !(z_span.is_finite() && z_span > 0.0) {
        return Err(Error::param(format!("z_span {z_span} must be positive")));
    }
    focus_scan_range(field, f, -z_span, z_span, n_planes, settings, source)
}

/// Scan over `n_planes` uniformly spaced planes in `[z_min, z_max]`
/// (relative to the focal plane).
pub fn focus_scan_range(
    field: &ComplexField,
    f: f64,
    z_min: f64,
    z_max: f64,
    n_planes: usize,
    settings: &ScanSettings,
    source: SourceInfo,
) -> Result<IntensityVolume> {
    if n_planes < 2 || !(z_max > z_min) {
        return Err(Error::param("scan range needs z_max > z_min and at least two planes"));
    }
    let focal_grid = GridSpec::new(settings.focal_n, settings.focal_pitch)?;
    let z_axis = plane_axis(z_min, z_max, n_planes);
    // The focal spectrum at frequency u is the input field at x = λ·f·u, so
    // the guard runs on the input aperture rather than on the truncated
    // focal window.
    let lam = field.wavelength;
    for (i, &z) in z_axis.iter().enumerate() {
        let x_lim = lam * f * transfer_limit(&focal_grid, lam, z);
        let beyond = aperture_beyond_fraction(field, x_lim);
        if beyond > TRANSFER_GUARD {
            return Err(aliasing(i, z, beyond));
        }
    }
    let focal = to_focal_region_on(field, f, focal_grid)?;
    scan_planes(&focal, z_axis, settings, source)
}

fn plane_axis(z_min: f64, z_max: f64, n_planes: usize) -> Vec<f64> {
    (0..n_planes).map(|i| z_min + (z_max - z_min) * i as f64 / (n_planes - 1) as f64).collect()
}

fn aliasing(i: usize, z: f64, beyond: f64) -> Error {
    Error::Sampling(format!(
        "plane {i} (z = {:.3} mm) aliases: {beyond:.2e} of the spectrum exceeds the transfer-function limit",
        z * 1e3
    ))
}

fn aperture_beyond_fraction(field: &ComplexField, x_lim: f64) -> f64 {
    let total = field.power();
    if total == 0.0 {
        return 0.0;
    }
    let g = &field.grid;
    let outer: f64 = field
        .data
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let (x, y) = g.xy(*idx);
            x.abs() > x_lim || y.abs() > x_lim
        })
        .map(|(_, c)| c.norm_sqr())
        .sum();
    outer * g.pitch * g.pitch / total
}

/// Scan starting from an already computed focal-plane field.
pub fn scan_focal_field(
    focal: &ComplexField,
    z_min: f64,
    z_max: f64,
    n_planes: usize,
    settings: &ScanSettings,
    source: SourceInfo,
) -> Result<IntensityVolume> {
    if n_planes < 2 || !(z_max > z_min) {
        return Err(Error::param("scan range needs z_max > z_min and at least two planes"));
    }
    let z_axis = plane_axis(z_min, z_max, n_planes);
    let (_, spec) = spectrum(focal);
    for (i, &z) in z_axis.iter().enumerate() {
        let lim = transfer_limit(&focal.grid, focal.wavelength, z);
        let beyond = beyond_fraction(&spec, &focal.grid, lim);
        if beyond > TRANSFER_GUARD {
            return Err(aliasing(i, z, beyond));
        }
    }
    scan_planes(focal, z_axis, settings, source)
}

fn scan_planes(
    focal: &ComplexField,
    z_axis: Vec<f64>,
    settings: &ScanSettings,
    source: SourceInfo,
) -> Result<IntensityVolume> {
    let grid = focal.grid;
    let lam = focal.wavelength;
    let (fft, spec) = spectrum(focal);
    let kz = kz_table(&grid, lam);
    let sampler = PolarSampler::new(&grid, settings.n_radial, settings.n_angles);

    let anisotropy = anisotropy_of(&sampler, &focal.intensity());

    let rows: Vec<Vec<f64>> = z_axis
        .par_iter()
        .map(|&z| {
            let mut buf = vec![Complex64::new(0.0, 0.0); spec.len()];
            apply_transfer(&spec, &kz, z, &mut buf);
            fft.inverse(&mut buf);
            let inten: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
            sampler.reduce(&inten).0
        })
        .collect();

    Ok(IntensityVolume {
        rho_axis: sampler.rho.clone(),
        z_axis,
        intensity: rows.concat(),
        source,
        anisotropy,
        symmetric: anisotropy < SYMMETRY_TOLERANCE,
    })
}

/// 1/e² radius of a Gaussian of the given waist after `z` (analytic).
pub fn gaussian_width(waist: f64, wavelength: f64, z: f64) -> f64 {
    let zr = PI * waist * waist / wavelength;
    waist * (1.0 + (z / zr).powi(2)).sqrt()
}
