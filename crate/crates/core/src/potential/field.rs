use crate::constants::G_EARTH;
use crate::error::{Error, Result};
use crate::propagation::IntensityVolume;

use super::{AtomicParams, ScatteringRates};

/// Interpolated light intensity and its Cartesian gradient at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalLight {
    pub intensity: f64,
    pub gradient: [f64; 3],
}

/// Dipole potential of a cylindrically symmetric beam plus optional gravity.
///
/// Coordinates are `(x, y, z)` with the beam along `z` and `y` pointing up.
/// `I(ρ, z)` is interpolated with Keys cubic convolution (a = −1/2), which is
/// C¹; the ρ axis is mirrored through zero so `∂I/∂ρ = 0` on the axis.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub params: AtomicParams,
    pub gravity: bool,
    /// Translation of the trap along z.
    pub z_offset: f64,
    d_rho: f64,
    z0: f64,
    dz: f64,
    n_rho: usize,
    n_z: usize,
    intensity: Vec<f64>,
    per_intensity: f64,
    rates: ScatteringRates,
    omega_max: f64,
}

fn uniform_step(axis: &[f64], name: &str) -> Result<f64> {
    if axis.len() < 4 {
        return Err(Error::param(format!("{name} axis needs at least 4 samples")));
    }
    let step = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    let uniform = axis.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs());
    if !(step > 0.0) || !uniform {
        return Err(Error::param(format!("{name} axis must be uniform and increasing")));
    }
    Ok(step)
}

#[inline]
fn keys(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

/// √(max|∂²U|/m) from second differences at a two-sample stride, which
/// smooths the kinks left by bilinear azimuthal resampling.
fn curvature_frequency(volume: &IntensityVolume, d_rho: f64, dz: f64, per_i: f64, mass: f64) -> f64 {
    let (nr, nz) = (volume.n_rho(), volume.n_z());
    let mut c: f64 = 0.0;
    for iz in 0..nz {
        let row = volume.rho_profile(iz);
        for ir in 2..nr.saturating_sub(2) {
            c = c.max((row[ir + 2] - 2.0 * row[ir] + row[ir - 2]).abs() / (4.0 * d_rho * d_rho));
        }
    }
    for iz in 2..nz.saturating_sub(2) {
        for ir in 0..nr {
            let d = volume.at(iz + 2, ir) - 2.0 * volume.at(iz, ir) + volume.at(iz - 2, ir);
            c = c.max(d.abs() / (4.0 * dz * dz));
        }
    }
    (c * per_i / mass).sqrt()
}

impl PotentialField {
    pub fn new(volume: &IntensityVolume, params: AtomicParams, gravity: bool) -> Result<Self> {
        let d_rho = uniform_step(&volume.rho_axis, "rho")?;
        if volume.rho_axis[0].abs() > 1e-9 * d_rho {
            return Err(Error::param("rho axis must start at zero"));
        }
        let dz = uniform_step(&volume.z_axis, "z")?;
        let per_intensity = params.potential_per_intensity()?;
        let omega_max = curvature_frequency(volume, d_rho, dz, per_intensity.abs(), params.mass);
        Ok(Self {
            params,
            gravity,
            z_offset: 0.0,
            d_rho,
            z0: volume.z_axis[0],
            dz,
            n_rho: volume.n_rho(),
            n_z: volume.n_z(),
            intensity: volume.intensity.clone(),
            per_intensity,
            rates: params.rates_per_intensity()?,
            omega_max,
        })
    }

    /// Same potential translated by `offset` along z. The trap minimum must
    /// stay inside the sampled z-range.
    pub fn displaced(&self, offset: f64) -> Result<Self> {
        let (lo, hi) = self.z_range();
        if !(offset > lo && offset < hi) {
            return Err(Error::param(format!(
                "displacement {:.3} mm is outside the volume z-range [{:.3}, {:.3}] mm",
                offset * 1e3,
                lo * 1e3,
                hi * 1e3
            )));
        }
        let mut out = self.clone();
        out.z_offset = offset;
        Ok(out)
    }

    pub fn rho_max(&self) -> f64 {
        (self.n_rho - 1) as f64 * self.d_rho
    }

    /// z-extent in trap coordinates (before the offset).
    pub fn z_range(&self) -> (f64, f64) {
        (self.z0, self.z0 + (self.n_z - 1) as f64 * self.dz)
    }

    /// J per W/m².
    pub fn potential_per_intensity(&self) -> f64 {
        self.per_intensity
    }

    pub fn rates_per_intensity(&self) -> ScatteringRates {
        self.rates
    }

    /// Highest local oscillation frequency √(|∂²U|/m) on the grid, rad/s.
    pub fn max_frequency(&self) -> f64 {
        self.omega_max
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let rho = p[0].hypot(p[1]);
        let z = p[2] - self.z_offset;
        let (lo, hi) = self.z_range();
        rho <= self.rho_max() && z >= lo && z <= hi
    }

    #[inline]
    fn sample(&self, ir: isize, iz: isize) -> f64 {
        let ir = ir.unsigned_abs().min(self.n_rho - 1);
        let iz = iz.clamp(0, self.n_z as isize - 1) as usize;
        self.intensity[iz * self.n_rho + ir]
    }

    /// Intensity and gradient at `p`, or `None` outside the volume.
    pub fn light(&self, p: [f64; 3]) -> Option<LocalLight> {
        if !self.contains(p) {
            return None;
        }
        let rho = p[0].hypot(p[1]);
        let ur = rho / self.d_rho;
        let uz = (p[2] - self.z_offset - self.z0) / self.dz;
        let ir = (ur.floor() as isize).min(self.n_rho as isize - 2);
        let iz = (uz.floor() as isize).clamp(0, self.n_z as isize - 2);
        let (wr, dwr) = keys(ur - ir as f64);
        let (wz, dwz) = keys(uz - iz as f64);
        let (mut v, mut d_rho, mut d_z) = (0.0, 0.0, 0.0);
        for (a, (&wza, &dwza)) in wz.iter().zip(&dwz).enumerate() {
            let (mut row, mut drow) = (0.0, 0.0);
            for b in 0..4 {
                let s = self.sample(ir - 1 + b as isize, iz - 1 + a as isize);
                row += wr[b] * s;
                drow += dwr[b] * s;
            }
            v += wza * row;
            d_rho += wza * drow;
            d_z += dwza * row;
        }
        d_rho /= self.d_rho;
        d_z /= self.dz;
        let (gx, gy) = if rho > 0.0 { (d_rho * p[0] / rho, d_rho * p[1] / rho) } else { (0.0, 0.0) };
        Some(LocalLight { intensity: v.max(0.0), gradient: [gx, gy, d_z] })
    }

    fn light_or_err(&self, p: [f64; 3]) -> Result<LocalLight> {
        self.light(p).ok_or_else(|| {
            Error::OutOfDomain(format!(
                "point ({:.3e}, {:.3e}, {:.3e}) m lies outside rho <= {:.3e} m, z in [{:.3e}, {:.3e}] m",
                p[0],
                p[1],
                p[2],
                self.rho_max(),
                self.z_range().0 + self.z_offset,
                self.z_range().1 + self.z_offset
            ))
        })
    }

    pub fn gravity_energy(&self, y: f64) -> f64 {
        if self.gravity {
            self.params.mass * G_EARTH * y
        } else {
            0.0
        }
    }

    /// Total potential energy, J.
    pub fn energy(&self, p: [f64; 3]) -> Result<f64> {
        let l = self.light_or_err(p)?;
        Ok(self.per_intensity * l.intensity + self.gravity_energy(p[1]))
    }

    /// ∇U, J/m.
    pub fn gradient(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let l = self.light_or_err(p)?;
        let s = self.per_intensity;
        let g = if self.gravity { self.params.mass * G_EARTH } else { 0.0 };
        Ok([s * l.gradient[0], s * l.gradient[1] + g, s * l.gradient[2]])
    }

    pub fn rates(&self, p: [f64; 3]) -> Result<ScatteringRates> {
        let i = self.light_or_err(p)?.intensity;
        Ok(ScatteringRates { total: self.rates.total * i, raman: self.rates.raman * i })
    }
}
