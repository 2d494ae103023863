//! Physical constants (CODATA 2018) and the Rb-85 D-line presets.

use std::f64::consts::PI;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const C: f64 = 299_792_458.0;
pub const PLANCK: f64 = 2.0 * PI * HBAR;
/// Standard gravity, m/s².
pub const G_EARTH: f64 = 9.806_65;

/// D2 resonance wavelength.
pub const RB_D2_WAVELENGTH: f64 = 780.24e-9;
/// Natural linewidth Γ, rad/s.
pub const RB_GAMMA: f64 = 2.0 * PI * 6.1e6;
/// Saturation intensity, W/m² (1.6 mW/cm²).
pub const RB_SAT_INTENSITY: f64 = 16.0;
/// Fine-structure splitting Δ_LS, rad/s.
pub const RB_FINE_STRUCTURE: f64 = 2.0 * PI * 7.1e12;
pub const RB85_MASS: f64 = 1.4100e-25;

/// Angular-frequency detuning corresponding to a wavelength offset below
/// the D2 line (positive = blue): δν = c·δλ/λ².
pub fn detuning_from_nm(delta_nm: f64) -> f64 {
    2.0 * PI * C * delta_nm * 1e-9 / (RB_D2_WAVELENGTH * RB_D2_WAVELENGTH)
}

/// Trap-light wavelength for a blue detuning given in nm.
pub fn wavelength_from_detuning_nm(delta_nm: f64) -> f64 {
    RB_D2_WAVELENGTH - delta_nm * 1e-9
}
