//! Dipole potential, photon-scattering rates, barrier analysis and the
//! equal-barrier search for the ring radius.
//!
//! The potential of a blue-detuned beam on the Rb D lines is
//!
//! ```text
//! U = (ħΓ·I / 24·I_s) · (Γ/(Δ + Δ_LS) + 2Γ/Δ)
//! ```
//!
//! with Δ the (angular) detuning from the D2 line and Δ_LS the fine-structure
//! splitting. Scattering rates use the same two-line structure.

mod barrier;
mod field;

pub use barrier::{
    barrier_report, equal_barrier_rc, equal_barrier_rc_with, BarrierReport, EqualBarrierSearch, QuadFit,
    RcSearchSettings,
};
pub use field::{LocalLight, PotentialField};

use std::f64::consts::TAU;

use crate::constants::*;
use crate::error::{Error, Result};

/// Fraction of `2E_rec/k_B` deposited per scattering event when converting
/// a scattering rate to a heating rate. One absorption plus one emission
/// recoil, counted fully as temperature.
pub const RECOIL_BUDGET: f64 = 1.0;

/// Default share of the Raman term that actually changes the hyperfine level.
pub const DEFAULT_RAMAN_BRANCHING: f64 = 2.0 / 3.0;

/// Atomic constants plus the trap-light detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicParams {
    /// Natural linewidth, rad/s.
    pub gamma: f64,
    /// W/m².
    pub sat_intensity: f64,
    /// rad/s.
    pub fine_structure: f64,
    pub mass: f64,
    /// D2 resonance wavelength, m.
    pub resonance: f64,
    /// Detuning from the D2 line, rad/s; positive is blue.
    pub detuning: f64,
    pub raman_branching: f64,
}

impl AtomicParams {
    /// Rb-85 with a detuning given in nm below the D2 line (negative for red).
    pub fn rb85(detuning_nm: f64) -> Self {
        Self {
            gamma: RB_GAMMA,
            sat_intensity: RB_SAT_INTENSITY,
            fine_structure: RB_FINE_STRUCTURE,
            mass: RB85_MASS,
            resonance: RB_D2_WAVELENGTH,
            detuning: detuning_from_nm(detuning_nm),
            raman_branching: DEFAULT_RAMAN_BRANCHING,
        }
    }

    pub fn with_detuning_nm(mut self, detuning_nm: f64) -> Self {
        self.detuning = detuning_from_nm(detuning_nm);
        self
    }

    pub fn detuning_nm(&self) -> f64 {
        self.detuning / detuning_from_nm(1.0)
    }

    pub fn trap_wavelength(&self) -> f64 {
        self.resonance - self.detuning_nm() * 1e-9
    }

    /// Energy unit ħΓ, joules.
    pub fn hbar_gamma(&self) -> f64 {
        HBAR * self.gamma
    }

    fn check(&self) -> Result<()> {
        let d = self.detuning;
        if !d.is_finite() || d == 0.0 {
            return Err(Error::Singular("detuning is zero (on resonance)".into()));
        }
        if (d + self.fine_structure).abs() < 1e-9 * self.fine_structure {
            return Err(Error::Singular("detuning sits on the D1 line".into()));
        }
        Ok(())
    }

    /// Potential per unit intensity, J/(W/m²).
    pub fn potential_per_intensity(&self) -> Result<f64> {
        self.check()?;
        let (g, d) = (self.gamma, self.detuning);
        Ok(HBAR * g / (24.0 * self.sat_intensity) * (g / (d + self.fine_structure) + 2.0 * g / d))
    }

    /// Total and Raman scattering rates per unit intensity, s⁻¹/(W/m²).
    pub fn rates_per_intensity(&self) -> Result<ScatteringRates> {
        self.check()?;
        let (g, d, ls) = (self.gamma, self.detuning, self.fine_structure);
        let pre = g * g * g / (24.0 * self.sat_intensity);
        Ok(ScatteringRates {
            total: pre * (2.0 / (d * d) + 1.0 / ((d + ls) * (d + ls))),
            raman: self.raman_branching * pre * (1.0 / d - 1.0 / (d + ls)).powi(2),
        })
    }
}

/// Dipole potential energy (J) at intensity `intensity` (W/m²).
pub fn dipole_potential(intensity: f64, params: &AtomicParams) -> Result<f64> {
    Ok(params.potential_per_intensity()? * intensity)
}

/// Photon-scattering rates, s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringRates {
    pub total: f64,
    /// Hyperfine-changing part.
    pub raman: f64,
}

pub fn scattering_rates(intensity: f64, params: &AtomicParams) -> Result<ScatteringRates> {
    let r = params.rates_per_intensity()?;
    Ok(ScatteringRates { total: r.total * intensity, raman: r.raman * intensity })
}

/// Single-photon recoil energy divided by k_B, kelvin.
pub fn recoil_temperature(params: &AtomicParams) -> f64 {
    let k = TAU / params.trap_wavelength();
    (HBAR * k).powi(2) / (2.0 * params.mass * K_B)
}

/// Heating rate (K/s) caused by `scatter_rate` photon-scattering events per second.
pub fn recoil_heating_rate(scatter_rate: f64, params: &AtomicParams) -> Result<f64> {
    if !(scatter_rate >= 0.0) {
        return Err(Error::param(format!("scatter rate {scatter_rate} must be non-negative")));
    }
    Ok(scatter_rate * RECOIL_BUDGET * 2.0 * recoil_temperature(params))
}

/// Mean photon-scattering time of atoms held in a red-detuned trap of the
/// given depth (J). Atoms sit at the intensity maximum, lifted by the mean
/// potential energy `(3/2)·k_B·T` of a thermal cloud in a harmonic well.
pub fn red_trap_scattering_time(depth: f64, params: &AtomicParams, temperature: f64) -> Result<f64> {
    let per_i = params.potential_per_intensity()?;
    if per_i >= 0.0 {
        return Err(Error::param("red-trap comparison needs a red (negative) detuning"));
    }
    if !(depth > 0.0) || !(temperature >= 0.0) {
        return Err(Error::param("depth must be positive and temperature non-negative"));
    }
    let mean_u = (depth - 1.5 * K_B * temperature).max(0.0);
    let intensity = mean_u / per_i.abs();
    let rate = scattering_rates(intensity, params)?.total;
    Ok(1.0 / rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_intensity_gives_zero() {
        let p = AtomicParams::rb85(1.0);
        assert_eq!(dipole_potential(0.0, &p).unwrap(), 0.0);
        let r = scattering_rates(0.0, &p).unwrap();
        assert_eq!((r.total, r.raman), (0.0, 0.0));
    }

    #[test]
    fn blue_is_repulsive() {
        assert!(dipole_potential(1e6, &AtomicParams::rb85(0.5)).unwrap() > 0.0);
        assert!(dipole_potential(1e6, &AtomicParams::rb85(-0.5)).unwrap() < 0.0);
    }

    #[test]
    fn on_resonance_is_singular() {
        let p = AtomicParams::rb85(0.0);
        assert!(matches!(dipole_potential(1.0, &p), Err(Error::Singular(_))));
        let mut d1 = p;
        d1.detuning = -d1.fine_structure;
        assert!(matches!(scattering_rates(1.0, &d1), Err(Error::Singular(_))));
    }

    #[test]
    fn doubling_small_detuning_halves_potential() {
        let a = dipole_potential(1e6, &AtomicParams::rb85(0.25)).unwrap();
        let b = dipole_potential(1e6, &AtomicParams::rb85(0.5)).unwrap();
        assert!((b / a - 0.5).abs() < 0.03);
    }

    #[test]
    fn two_level_limit() {
        let mut p = AtomicParams::rb85(1.0);
        p.fine_structure = 1e30;
        let u = dipole_potential(1e6, &p).unwrap();
        let two_level = HBAR * p.gamma * 1e6 / (24.0 * p.sat_intensity) * 2.0 * p.gamma / p.detuning;
        assert!((u / two_level - 1.0).abs() < 1e-6);
    }

    #[test]
    fn heating_is_linear() {
        let p = AtomicParams::rb85(1.0);
        assert_eq!(recoil_heating_rate(0.0, &p).unwrap(), 0.0);
        let a = recoil_heating_rate(1.0, &p).unwrap();
        let b = recoil_heating_rate(2.0, &p).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-20);
        assert!(recoil_heating_rate(-1.0, &p).is_err());
    }
}
