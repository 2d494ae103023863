use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::solver::{solve, Model};
use crate::error::{Error, Result};

/// Spectral peak must exceed this multiple of the median periodogram bin.
pub const PEAK_OVER_FLOOR: f64 = 20.0;
const ZERO_PAD: usize = 8;

/// Damped sinusoid `offset + amplitude·exp(−damping·t)·cos(2π·frequency·t + phase)`,
/// with `t` measured from the first sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Oscillation {
    /// Hz.
    pub frequency: f64,
    pub amplitude: f64,
    /// 1/s.
    pub damping: f64,
    pub phase: f64,
    pub offset: f64,
    /// Frequency of the periodogram peak that seeded the fit, Hz.
    pub spectral_frequency: f64,
    pub peak_over_floor: f64,
    pub converged: bool,
}

/// `[offset, A, γ, ω, φ]`.
struct Damped;

impl Model for Damped {
    fn n_params(&self) -> usize {
        5
    }

    fn eval(&self, p: &[f64], t: f64, grad: Option<&mut [f64]>) -> f64 {
        let e = (-p[2] * t).exp();
        let (sn, cs) = (p[3] * t + p[4]).sin_cos();
        if let Some(g) = grad {
            g[0] = 1.0;
            g[1] = e * cs;
            g[2] = -t * p[1] * e * cs;
            g[3] = -p[1] * e * sn * t;
            g[4] = -p[1] * e * sn;
        }
        p[0] + p[1] * e * cs
    }
}

/// Dominant oscillation of a uniformly sampled trace: the periodogram peak
/// seeds a damped-sinusoid least-squares fit.
pub fn oscillation_frequency(times: &[f64], values: &[f64]) -> Result<Oscillation> {
    let n = times.len();
    if n != values.len() {
        return Err(Error::Shape("trace columns differ in length".into()));
    }
    if n < 8 {
        return Err(Error::param("trace needs at least 8 samples"));
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) / dt - 1.0).abs() > 1e-6) {
        return Err(Error::param("trace must be uniformly sampled"));
    }
    let span = times[n - 1] - times[0];
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    if centered.iter().all(|v| v.abs() <= 1e-300 + 1e-14 * mean.abs()) {
        return Err(Error::NoOscillation("trace is constant".into()));
    }

    let periodogram = |pad: usize| -> Vec<f64> {
        let m = n * pad;
        let mut buf: Vec<Complex64> = centered.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(m, Complex64::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        buf[..m / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    };

    let plain = periodogram(1);
    let mut bins: Vec<f64> = plain[1..].to_vec();
    bins.sort_by(f64::total_cmp);
    let floor = bins[bins.len() / 2].max(f64::MIN_POSITIVE);
    let peak = plain[1..].iter().copied().fold(0.0, f64::max);
    let ratio = peak / floor;
    if ratio < PEAK_OVER_FLOOR {
        return Err(Error::NoOscillation(format!("spectral peak only {ratio:.1}× the noise floor")));
    }

    let fine = periodogram(ZERO_PAD);
    let m = n * ZERO_PAD;
    // Skip the DC lobe of the padded spectrum.
    let k = (ZERO_PAD..fine.len()).max_by(|&a, &b| fine[a].total_cmp(&fine[b])).unwrap();
    let shift = if k + 1 < fine.len() {
        let (a, b, c) = (fine[k - 1].ln(), fine[k].ln(), fine[k + 1].ln());
        let den = a - 2.0 * b + c;
        if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 }
    } else {
        0.0
    };
    let f_seed = (k as f64 + shift) / (m as f64 * dt);
    if f_seed * span < 2.0 {
        return Err(Error::NoOscillation(format!("{f_seed:.3} Hz spans fewer than two periods of the trace")));
    }

    let t: Vec<f64> = times.iter().map(|t| t - times[0]).collect();
    let omega = TAU * f_seed;
    let (s, c) = t.iter().zip(&centered).fold((0.0, 0.0), |(s, c), (&t, &v)| (s + v * (omega * t).sin(), c + v * (omega * t).cos()));
    let amp = 2.0 * (s * s + c * c).sqrt() / n as f64;
    let phase = (-s).atan2(c);
    let w = vec![1.0; n];
    let sol = solve(&Damped, &t, values, &w, &[mean, amp, 0.0, omega, phase]);
    let mut p = sol.params.clone();
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[4] += std::f64::consts::PI;
    }
    let frequency = p[3].abs() / TAU;
    let sane = sol.converged && (frequency / f_seed - 1.0).abs() < 0.5;
    Ok(Oscillation {
        frequency: if sane { frequency } else { f_seed },
        amplitude: if sane { p[1] } else { amp },
        damping: if sane { p[2] } else { 0.0 },
        phase: if sane { p[4].rem_euclid(TAU) } else { phase },
        offset: if sane { p[0] } else { mean },
        spectral_frequency: f_seed,
        peak_over_floor: ratio,
        converged: sane,
    })
}
