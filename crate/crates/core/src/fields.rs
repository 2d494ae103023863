//! Transverse source fields, SLM phase masks and the Laguerre-Gaussian basis.
//!
//! Every field lives on a square [`GridSpec`] whose physical origin sits at
//! sample `(n/2, n/2)`. Amplitudes are in √(W/m²), so `Σ|E|²·pitch²` is the
//! beam power in watts.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Uniform square sampling of a transverse plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub pitch: f64,
    /// Physical coordinates of the grid origin sample.
    pub center: (f64, f64),
}

impl GridSpec {
    pub fn new(n: usize, pitch: f64) -> Result<Self> {
        if n < 64 || !n.is_power_of_two() {
            return Err(Error::param(format!("grid size {n} must be a power of two >= 64")));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::param(format!("grid pitch {pitch} must be positive")));
        }
        Ok(Self { n, pitch, center: (0.0, 0.0) })
    }

    /// Grid with `n` samples spanning `extent` meters.
    pub fn with_extent(n: usize, extent: f64) -> Result<Self> {
        Self::new(n, extent / n as f64)
    }

    /// Default SLM-plane sampling: 1024 samples over 16 mm.
    pub fn slm_default() -> Self {
        Self::with_extent(1024, 16e-3).expect("valid default grid")
    }

    pub fn extent(&self) -> f64 {
        self.n as f64 * self.pitch
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Physical coordinate of sample index `i` along either axis, relative
    /// to the grid center.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.pitch
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// `(x, y)` of flat index `idx` (row-major, `y` is the row).
    #[inline]
    pub fn xy(&self, idx: usize) -> (f64, f64) {
        (self.coord(idx % self.n), self.coord(idx / self.n))
    }

    pub(crate) fn same_sampling(&self, other: &GridSpec) -> bool {
        self.n == other.n
            && (self.pitch - other.pitch).abs() <= 1e-12 * self.pitch
            && self.center == other.center
    }

    fn require_extent(&self, needed: f64, what: &str) -> Result<()> {
        if self.extent() < needed * (1.0 - 1e-12) {
            return Err(Error::Sampling(format!(
                "grid extent {:.4e} m is smaller than the {:.4e} m required by {what}",
                self.extent(),
                needed
            )));
        }
        Ok(())
    }
}

/// Complex scalar field sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: GridSpec,
    pub wavelength: f64,
    /// Row-major samples, `data[iy * n + ix]`.
    pub data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: GridSpec, wavelength: f64) -> Self {
        Self { grid, wavelength, data: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    /// Builds a field by evaluating `f(x, y)` at every sample.
    pub fn from_fn(grid: GridSpec, wavelength: f64, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let data = (0..grid.len())
            .map(|idx| {
                let (x, y) = grid.xy(idx);
                f(x, y)
            })
            .collect();
        Self { grid, wavelength, data }
    }

    /// Total power Σ|E|²·pitch², watts.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.pitch * self.grid.pitch
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn peak_intensity(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max)
    }

    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.data[iy * self.grid.n + ix]
    }

    /// Inner product ⟨self, other⟩ = Σ conj(self)·other·pitch².
    pub fn overlap(&self, other: &ComplexField) -> Result<Complex64> {
        if !self.grid.same_sampling(&other.grid) {
            return Err(Error::Shape("overlap between fields on different grids".into()));
        }
        let s: Complex64 = self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.pitch * self.grid.pitch)
    }

    /// Multiplies every sample by `s`.
    pub fn scaled(mut self, s: f64) -> Self {
        for c in &mut self.data {
            *c *= s;
        }
        self
    }

    /// Second-moment (1/e² intensity) radius along x: `2·sqrt(<x²>)`.
    pub fn second_moment_radius(&self) -> f64 {
        let n = self.grid.n;
        let (mut num, mut den) = (0.0, 0.0);
        for (idx, c) in self.data.iter().enumerate() {
            let x = self.grid.coord(idx % n);
            let w = c.norm_sqr();
            num += w * x * x;
            den += w;
        }
        2.0 * (num / den).sqrt()
    }
}

/// Unit-modulus transmission written to the SLM, radians in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    pub grid: GridSpec,
    pub phase: Vec<f64>,
}

#[inline]
pub(crate) fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl PhaseMask {
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let phase = (0..grid.len())
            .map(|idx| {
                let (x, y) = grid.xy(idx);
                wrap_phase(f(x, y))
            })
            .collect();
        Self { grid, phase }
    }

    /// Pointwise sum of two masks, re-wrapped.
    pub fn compose(&self, other: &PhaseMask) -> Result<PhaseMask> {
        if !self.grid.same_sampling(&other.grid) {
            return Err(Error::Shape("composing masks on different grids".into()));
        }
        let phase = self.phase.iter().zip(&other.phase).map(|(a, b)| wrap_phase(a + b)).collect();
        Ok(PhaseMask { grid: self.grid, phase })
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.phase[iy * self.grid.n + ix]
    }
}

/// Collimated Gaussian `E = E₀·exp(−r²/w₀²)` carrying `power` watts.
pub fn gaussian_beam(grid: GridSpec, w0: f64, power: f64, wavelength: f64) -> Result<ComplexField> {
    if !(w0.is_finite() && w0 > 0.0) {
        return Err(Error::param(format!("beam waist {w0} must be positive")));
    }
    if !(power.is_finite() && power >= 0.0) {
        return Err(Error::param(format!("beam power {power} must be non-negative")));
    }
    grid.require_extent(4.0 * w0, "the Gaussian beam (4·w0)")?;
    if grid.pitch > 0.5 * w0 {
        return Err(Error::Sampling(format!(
            "pitch {:.3e} m undersamples a {:.3e} m waist",
            grid.pitch, w0
        )));
    }
    let e0 = (2.0 * power / (PI * w0 * w0)).sqrt();
    Ok(ComplexField::from_fn(grid, wavelength, |x, y| {
        Complex64::new(e0 * (-(x * x + y * y) / (w0 * w0)).exp(), 0.0)
    }))
}

/// Azimuthal vortex `ℓφ` with an extra π on and outside the circle `r = rc`.
///
/// `rc = +∞` gives a plain vortex mask.
pub fn ring_phase_mask(grid: GridSpec, ell: i32, rc: f64) -> Result<PhaseMask> {
    if ell < 0 {
        return Err(Error::param(format!("azimuthal index {ell} must be >= 0")));
    }
    if rc.is_nan() || rc < 0.0 {
        return Err(Error::param(format!("step radius {rc} must be non-negative")));
    }
    let l = ell as f64;
    Ok(PhaseMask::from_fn(grid, |x, y| {
        let r = x.hypot(y);
        let step = if r >= rc { PI } else { 0.0 };
        l * y.atan2(x) + step
    }))
}

/// Thin-lens phase `−πr²/(fλ)`; negative `f` diverges, infinite `f` is flat.
pub fn lens_phase(grid: GridSpec, f: f64, wavelength: f64) -> Result<PhaseMask> {
    if f == 0.0 || f.is_nan() {
        return Err(Error::param("lens focal length must be nonzero"));
    }
    Ok(PhaseMask::from_fn(grid, |x, y| {
        if f.is_infinite() {
            0.0
        } else {
            -PI * (x * x + y * y) / (f * wavelength)
        }
    }))
}

pub fn apply_mask(field: &ComplexField, mask: &PhaseMask) -> Result<ComplexField> {
    if !field.grid.same_sampling(&mask.grid) {
        return Err(Error::Shape(format!(
            "field grid (n={}, pitch={:e}) differs from mask grid (n={}, pitch={:e})",
            field.grid.n, field.grid.pitch, mask.grid.n, mask.grid.pitch
        )));
    }
    let data = field
        .data
        .iter()
        .zip(&mask.phase)
        .map(|(e, &p)| if p == 0.0 { *e } else { e * Complex64::from_polar(1.0, p) })
        .collect();
    Ok(ComplexField { grid: field.grid, wavelength: field.wavelength, data })
}

/// Generalized Laguerre polynomial `L_p^α(x)` by the three-term recurrence.
pub fn laguerre(p: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..p {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Normalization of LG_p^ℓ so that ∫|u|² dA = 1 at its waist.
fn lg_norm(p: usize, ell: i32) -> f64 {
    let l = ell.unsigned_abs() as usize;
    (2.0 / PI * (ln_factorial(p) - ln_factorial(p + l)).exp()).sqrt()
}

fn check_lg(p: i32, waist: f64) -> Result<usize> {
    if p < 0 {
        return Err(Error::param(format!("radial index {p} must be >= 0")));
    }
    if !(waist.is_finite() && waist > 0.0) {
        return Err(Error::param(format!("mode waist {waist} must be positive")));
    }
    Ok(p as usize)
}

fn check_lg_extent(grid: &GridSpec, p: i32, ell: i32, waist: f64) -> Result<()> {
    let order = (2 * p + ell.abs() + 1) as f64;
    grid.require_extent(4.0 * waist * order.sqrt(), &format!("LG_{p}^{ell}"))
}

/// Unit-power Laguerre-Gaussian mode LG_p^ℓ at its waist plane.
pub fn lg_mode(grid: GridSpec, p: i32, ell: i32, waist: f64, wavelength: f64) -> Result<ComplexField> {
    lg_mode_at(grid, p, ell, waist, wavelength, 0.0)
}

/// Closed-form paraxial LG_p^ℓ a distance `z` from its waist, including the
/// carrier `exp(ikz)`, wavefront curvature and Gouy phase (`exp(+ikz)` convention).
pub fn lg_mode_at(
    grid: GridSpec,
    p: i32,
    ell: i32,
    waist: f64,
    wavelength: f64,
    z: f64,
) -> Result<ComplexField> {
    let pu = check_lg(p, waist)?;
    check_lg_extent(&grid, p, ell, waist)?;
    Ok(lg_field(grid, pu, ell, waist, wavelength, z))
}

fn lg_field(grid: GridSpec, pu: usize, ell: i32, waist: f64, wavelength: f64, z: f64) -> ComplexField {
    let k = TAU / wavelength;
    let zr = PI * waist * waist / wavelength;
    let w = waist * (1.0 + (z / zr).powi(2)).sqrt();
    let inv_r = z / (z * z + zr * zr);
    let gouy = (2 * pu as i32 + ell.abs() + 1) as f64 * (z / zr).atan();
    let norm = lg_norm(pu, ell) / w;
    let l = ell.abs();
    let lf = ell as f64;
    ComplexField::from_fn(grid, wavelength, |x, y| {
        let r2 = x * x + y * y;
        let s = 2.0 * r2 / (w * w);
        let radial = norm * s.sqrt().powi(l) * laguerre(pu, l as f64, s) * (-r2 / (w * w)).exp();
        let phase = k * z + 0.5 * k * r2 * inv_r - gouy + lf * y.atan2(x);
        Complex64::from_polar(radial, phase)
    })
}

/// Power fractions of a field in the LG_p^ℓ basis, `p = 0..=p_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub basis_waist: f64,
    pub ell: i32,
    pub fractions: Vec<f64>,
    pub residual: f64,
}

impl ModeSpectrum {
    pub fn fraction(&self, p: usize) -> f64 {
        self.fractions.get(p).copied().unwrap_or(0.0)
    }

    /// `p,fraction` rows plus the residual, as CSV text.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,ell,basis_waist_m,fraction\n");
        for (p, f) in self.fractions.iter().enumerate() {
            s.push_str(&format!("{p},{},{:e},{:.9}\n", self.ell, self.basis_waist, f));
        }
        s.push_str(&format!("residual,{},{:e},{:.9}\n", self.ell, self.basis_waist, self.residual));
        s
    }
}

/// Projects `field` onto LG_p^ℓ(basis_waist), `p ≤ p_max`.
pub fn decompose(field: &ComplexField, basis_waist: f64, ell: i32, p_max: i32) -> Result<ModeSpectrum> {
    if p_max < 1 {
        return Err(Error::param(format!("p_max {p_max} must be >= 1")));
    }
    let total = field.power();
    if !(total > 0.0) {
        return Err(Error::param("cannot decompose a zero-power field"));
    }
    let mut fractions = Vec::with_capacity(p_max as usize + 1);
    for p in 0..=p_max {
        // High-order basis modes may overhang the grid; the field has no
        // power there, so only the on-grid part of each mode matters.
        let pu = check_lg(p, basis_waist)?;
        let mode = lg_field(field.grid, pu, ell, basis_waist, field.wavelength, 0.0);
        // Renormalize on the grid so Cauchy-Schwarz bounds each fraction by 1.
        let mode_power = mode.power();
        let c = mode.overlap(field)?;
        fractions.push(c.norm_sqr() / (mode_power * total));
    }
    let residual = 1.0 - fractions.iter().sum::<f64>();
    Ok(ModeSpectrum { basis_waist, ell, fractions, residual })
}

/// Decomposes over a range of basis waists; returns every spectrum and the
/// index of the one with the largest `target_p` fraction.
pub fn scan_basis_waist(
    field: &ComplexField,
    waists: &[f64],
    ell: i32,
    p_max: i32,
    target_p: usize,
) -> Result<(Vec<ModeSpectrum>, usize)> {
    let spectra = waists
        .iter()
        .map(|&w| decompose(field, w, ell, p_max))
        .collect::<Result<Vec<_>>>()?;
    let best = spectra
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.fraction(target_p).total_cmp(&b.1.fraction(target_p)))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::param("empty waist scan"))?;
    Ok((spectra, best))
}
