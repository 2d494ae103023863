//! Monte Carlo loading, motion and hyperfine relaxation of trapped atoms.
//!
//! Atoms do not interact, so each one is integrated over the whole run on
//! its own ChaCha8 stream keyed by `(seed, atom index)`; ensemble statistics
//! are reduced afterwards in atom order. The result is therefore identical
//! whatever the number of rayon workers.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use rayon::prelude::*;

use crate::constants::{G_EARTH, HBAR, K_B};
use crate::error::{Error, Result};
use crate::potential::{AtomicParams, PotentialField};

/// Largest allowed hyperfine-flip probability per step.
pub const MAX_FLIP_PROBABILITY: f64 = 0.1;
/// Share of the Raman rate that moves F=2 → F=3; the rest moves F=3 → F=2.
pub const F2_TO_F3_SHARE: f64 = 7.0 / 12.0;

const SAMPLE_KEY: u64 = 0x6d6f_745f_636c_6f75;
const EVOLVE_KEY: u64 = 0x7472_6170_5f72_756e;

fn atom_rng(seed: u64, key: u64, atom: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key);
    rng.set_stream(atom as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hyperfine {
    F2,
    F3,
}

/// Positions (m), velocities (m/s) and hyperfine labels of an atom cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomEnsemble {
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    pub hyperfine: Vec<Hyperfine>,
    pub seed: u64,
    /// Word position reached by each atom's sampling stream.
    pub counters: Vec<u128>,
}

impl AtomEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn count(&self, level: Hyperfine) -> usize {
        self.hyperfine.iter().filter(|h| **h == level).count()
    }
}

/// Isotropic Gaussian cloud at the origin with Maxwell–Boltzmann velocities,
/// all atoms in F=2.
pub fn sample_ensemble(
    n: usize,
    sigma: f64,
    temperature: f64,
    params: &AtomicParams,
    seed: u64,
) -> Result<AtomEnsemble> {
    if n == 0 {
        return Err(Error::param("ensemble needs at least one atom"));
    }
    if !(sigma > 0.0) || !(temperature > 0.0) {
        return Err(Error::param("cloud size and temperature must be positive"));
    }
    let sv = (K_B * temperature / params.mass).sqrt();
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    let mut counters = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = atom_rng(seed, SAMPLE_KEY, i);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        positions.push([sigma * g(), sigma * g(), sigma * g()]);
        velocities.push([sv * g(), sv * g(), sv * g()]);
        counters.push(rng.get_word_pos());
    }
    Ok(AtomEnsemble { positions, velocities, hyperfine: vec![Hyperfine::F2; n], seed, counters })
}

/// F=3 share of an ensemble.
pub fn measure_f3_fraction(ensemble: &AtomEnsemble) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::UndefinedFraction("empty ensemble".into()));
    }
    Ok(ensemble.count(Hyperfine::F3) as f64 / ensemble.len() as f64)
}

/// What a trap provides at one point (trap coordinates, full power).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapSample {
    /// Optical force, N.
    pub force: [f64; 3],
    /// Optical potential energy, J.
    pub energy: f64,
    /// Hyperfine-changing scattering rate, s⁻¹.
    pub raman: f64,
    /// Total photon-scattering rate, s⁻¹.
    pub total: f64,
}

/// A conservative trap the integrator can drive atoms through.
pub trait Trap: Sync {
    /// `None` outside the region where the trap is defined (no light there).
    fn sample(&self, p: [f64; 3]) -> Option<TrapSample>;
    fn mass(&self) -> f64;
    /// Gravitational force magnitude m·g (acts along −y), or 0.
    fn weight(&self) -> f64;
    /// Atoms far enough away to drop out of the statistics.
    fn excluded(&self, p: [f64; 3]) -> bool;
    /// Highest local oscillation frequency, rad/s.
    fn max_frequency(&self) -> f64;
    /// z-range in which the trap minimum may be displaced.
    fn z_range(&self) -> (f64, f64);
    /// Photon wavenumber for recoil kicks, 1/m.
    fn wavenumber(&self) -> f64;
}

impl Trap for PotentialField {
    fn sample(&self, p: [f64; 3]) -> Option<TrapSample> {
        let l = self.light(p)?;
        let s = self.potential_per_intensity();
        let r = self.rates_per_intensity();
        Some(TrapSample {
            force: [-s * l.gradient[0], -s * l.gradient[1], -s * l.gradient[2]],
            energy: s * l.intensity,
            raman: r.raman * l.intensity,
            total: r.total * l.intensity,
        })
    }

    fn mass(&self) -> f64 {
        self.params.mass
    }

    fn weight(&self) -> f64 {
        if self.gravity {
            self.params.mass * G_EARTH
        } else {
            0.0
        }
    }

    fn excluded(&self, p: [f64; 3]) -> bool {
        let (lo, hi) = PotentialField::z_range(self);
        let z = p[2] - self.z_offset;
        p[0].hypot(p[1]) > 2.0 * self.rho_max() || z < 2.0 * lo.min(0.0) || z > 2.0 * hi.max(0.0)
    }

    fn max_frequency(&self) -> f64 {
        PotentialField::max_frequency(self)
    }

    fn z_range(&self) -> (f64, f64) {
        PotentialField::z_range(self)
    }

    fn wavenumber(&self) -> f64 {
        TAU / self.params.trap_wavelength()
    }
}

/// Analytic anisotropic harmonic trap with a uniform scattering rate; used
/// as an oracle and for motion-free relaxation studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicTrap {
    pub omega: [f64; 3],
    pub center: [f64; 3],
    pub mass: f64,
    pub raman: f64,
    pub total: f64,
    pub gravity: bool,
}

impl Trap for HarmonicTrap {
    fn sample(&self, p: [f64; 3]) -> Option<TrapSample> {
        let mut force = [0.0; 3];
        let mut energy = 0.0;
        for a in 0..3 {
            let k = self.mass * self.omega[a] * self.omega[a];
            let d = p[a] - self.center[a];
            force[a] = -k * d;
            energy += 0.5 * k * d * d;
        }
        Some(TrapSample { force, energy, raman: self.raman, total: self.total })
    }

    fn mass(&self) -> f64 {
        self.mass
    }

    fn weight(&self) -> f64 {
        if self.gravity {
            self.mass * G_EARTH
        } else {
            0.0
        }
    }

    fn excluded(&self, _: [f64; 3]) -> bool {
        false
    }

    fn max_frequency(&self) -> f64 {
        self.omega.iter().copied().fold(0.0, f64::max)
    }

    fn z_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn wavenumber(&self) -> f64 {
        TAU / crate::constants::RB_D2_WAVELENGTH
    }
}

/// Timing and switches of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSchedule {
    /// Linear intensity ramp from 0 to full, s.
    pub ramp: f64,
    pub duration: f64,
    pub dt: f64,
    /// Trap minimum displacement along z, m.
    pub displacement: f64,
    pub record_interval: f64,
    /// Times at which full position snapshots are kept.
    pub snapshot_times: Vec<f64>,
    pub detuning_nm: f64,
    /// Beam power, W.
    pub power: f64,
    pub flips: bool,
    /// Two random ħk kicks per total-scattering event.
    pub recoil_kicks: bool,
    /// Hold atoms in place (relaxation only).
    pub freeze_motion: bool,
}

impl Default for SimulationSchedule {
    fn default() -> Self {
        Self {
            ramp: 5e-3,
            duration: 1.5,
            dt: 10e-6,
            displacement: 0.0,
            record_interval: 5e-3,
            snapshot_times: Vec::new(),
            detuning_nm: 1.0,
            power: 0.15,
            flips: true,
            recoil_kicks: false,
            freeze_motion: false,
        }
    }
}

impl SimulationSchedule {
    fn steps(&self, interval: f64) -> usize {
        (interval / self.dt).round().max(1.0) as usize
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Checks durations and the integrator stability bound
    /// `dt ≤ 2π/(20·ω)` for the trap's highest frequency `omega`.
    pub fn validate(&self, omega: f64) -> Result<()> {
        for (name, v) in [("duration", self.duration), ("dt", self.dt), ("record interval", self.record_interval)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.ramp >= 0.0) {
            return Err(Error::param("ramp duration must be non-negative"));
        }
        if self.record_interval < self.dt || self.dt > self.duration {
            return Err(Error::param("need dt <= record interval and dt <= duration"));
        }
        if omega > 0.0 && self.dt > TAU / omega / 20.0 {
            return Err(Error::Stability(format!(
                "dt = {:.3e} s exceeds 1/20 of the shortest oscillation period {:.3e} s",
                self.dt,
                TAU / omega
            )));
        }
        Ok(())
    }

    fn scale(&self, t: f64) -> f64 {
        if self.ramp > 0.0 {
            (t / self.ramp).min(1.0)
        } else {
            1.0
        }
    }
}

/// Positions of every atom at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub positions: Vec<[f64; 3]>,
    pub hyperfine: Vec<Hyperfine>,
    /// Atoms still counted in the statistics.
    pub included: Vec<bool>,
}

/// Ensemble observables sampled at regular times.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub f3_fraction: Vec<f64>,
    pub centroid: Vec<[f64; 3]>,
    pub n_included: Vec<usize>,
    pub n_escaped: Vec<usize>,
    /// Mean Raman rate of the included atoms, s⁻¹.
    pub mean_raman_rate: Vec<f64>,
    /// Hyperfine flips since the previous sample.
    pub flips: Vec<u64>,
    /// Expected number of photon-scattering events over the run.
    pub scattering_events: f64,
    pub snapshots: Vec<Snapshot>,
    pub final_state: AtomEnsemble,
    pub seed: u64,
}

impl TrajectoryRecord {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record([
            "time_s",
            "f3_fraction",
            "centroid_x_m",
            "centroid_y_m",
            "centroid_z_m",
            "n_included",
            "n_escaped",
            "mean_raman_rate_per_s",
            "flips",
        ]);
        for i in 0..self.times.len() {
            let c = self.centroid[i];
            let _ = w.write_record([
                format!("{:.6}", self.times[i]),
                format!("{:.9}", self.f3_fraction[i]),
                format!("{:.9e}", c[0]),
                format!("{:.9e}", c[1]),
                format!("{:.9e}", c[2]),
                self.n_included[i].to_string(),
                self.n_escaped[i].to_string(),
                format!("{:.9e}", self.mean_raman_rate[i]),
                self.flips[i].to_string(),
            ]);
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }

    /// `(t, f3, binomial σ)` for samples after `t_min` with atoms present.
    pub fn relaxation_samples(&self, t_min: f64) -> Vec<(f64, f64, f64)> {
        (0..self.times.len())
            .filter(|&i| self.times[i] >= t_min && self.n_included[i] > 0)
            .map(|i| {
                let f = self.f3_fraction[i];
                let n = self.n_included[i] as f64;
                (self.times[i], f, (f * (1.0 - f) / n).sqrt().max(0.5 / n))
            })
            .collect()
    }

    /// Mean of `mean_raman_rate` over samples in `[t0, t1]`.
    pub fn mean_rate_between(&self, t0: f64, t1: f64) -> f64 {
        let v: Vec<f64> = (0..self.times.len())
            .filter(|&i| self.times[i] >= t0 && self.times[i] <= t1)
            .map(|i| self.mean_raman_rate[i])
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

struct AtomSample {
    pos: [f64; 3],
    f3: bool,
    raman: f64,
    excluded: bool,
    flips: u32,
}

struct AtomRun {
    samples: Vec<AtomSample>,
    snaps: Vec<[f64; 3]>,
    pos: [f64; 3],
    vel: [f64; 3],
    hf: Hyperfine,
    scattering: f64,
}

struct Plan {
    n_steps: usize,
    record_every: usize,
    snapshot_steps: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
fn run_atom<T: Trap>(
    i: usize,
    mut x: [f64; 3],
    mut v: [f64; 3],
    mut hf: Hyperfine,
    trap: &T,
    sched: &SimulationSchedule,
    plan: &Plan,
    seed: u64,
) -> Result<AtomRun> {
    let mut rng = atom_rng(seed, EVOLVE_KEY, i);
    let m = trap.mass();
    let weight = trap.weight();
    let shift = sched.displacement;
    let dt = sched.dt;
    let recoil_dv = HBAR * trap.wavenumber() / m;
    let local = |x: [f64; 3]| trap.sample([x[0], x[1], x[2] - shift]);
    let accel = |s: Option<TrapSample>, scale: f64| -> [f64; 3] {
        let f = s.map_or([0.0; 3], |s| s.force);
        [scale * f[0] / m, (scale * f[1] - weight) / m, scale * f[2] / m]
    };
    let trap_frame = |x: [f64; 3]| [x[0], x[1], x[2] - shift];

    let mut samples = Vec::with_capacity(plan.n_steps / plan.record_every + 1);
    let mut snaps = Vec::with_capacity(plan.snapshot_steps.len());
    let mut here = local(x);
    let mut a = accel(here, sched.scale(0.0));
    let mut flips = 0u32;
    let mut scattering = 0.0;
    let mut snap_iter = plan.snapshot_steps.iter().peekable();
    let record = |x: [f64; 3], hf: Hyperfine, here: Option<TrapSample>, scale: f64, flips: u32| AtomSample {
        pos: x,
        f3: hf == Hyperfine::F3,
        raman: scale * here.map_or(0.0, |s| s.raman),
        excluded: trap.excluded(trap_frame(x)),
        flips,
    };
    samples.push(record(x, hf, here, sched.scale(0.0), 0));
    while snap_iter.peek() == Some(&&0) {
        snaps.push(x);
        snap_iter.next();
    }

    for k in 0..plan.n_steps {
        let t1 = (k + 1) as f64 * dt;
        let s1 = sched.scale(t1);
        if !sched.freeze_motion {
            for d in 0..3 {
                v[d] += 0.5 * dt * a[d];
                x[d] += dt * v[d];
            }
            here = local(x);
            a = accel(here, s1);
            for d in 0..3 {
                v[d] += 0.5 * dt * a[d];
            }
            if !(a.iter().all(|c| c.is_finite()) && x.iter().all(|c| c.is_finite())) {
                return Err(Error::Stability(format!("non-finite force or position on atom {i} at t = {t1:.6} s")));
            }
        }
        if let Some(s) = here {
            let raman = s1 * s.raman;
            let total = s1 * s.total;
            scattering += total * dt;
            if sched.flips && raman > 0.0 {
                let rate = match hf {
                    Hyperfine::F2 => F2_TO_F3_SHARE * raman,
                    Hyperfine::F3 => (1.0 - F2_TO_F3_SHARE) * raman,
                };
                let p = rate * dt;
                if p >= MAX_FLIP_PROBABILITY {
                    return Err(Error::Stability(format!(
                        "flip probability {p:.3} >= {MAX_FLIP_PROBABILITY} for atom {i} at t = {t1:.6} s; reduce dt"
                    )));
                }
                if rng.random::<f64>() < p {
                    hf = match hf {
                        Hyperfine::F2 => Hyperfine::F3,
                        Hyperfine::F3 => Hyperfine::F2,
                    };
                    flips += 1;
                }
            }
            if sched.recoil_kicks && total > 0.0 && rng.random::<f64>() < total * dt {
                for _ in 0..2 {
                    let u: [f64; 3] = UnitSphere.sample(&mut rng);
                    for d in 0..3 {
                        v[d] += recoil_dv * u[d];
                    }
                }
            }
        }
        let step = k + 1;
        if step % plan.record_every == 0 {
            samples.push(record(x, hf, here, s1, flips));
            flips = 0;
        }
        while snap_iter.peek() == Some(&&step) {
            snaps.push(x);
            snap_iter.next();
        }
    }
    Ok(AtomRun { samples, snaps, pos: x, vel: v, hf, scattering })
}

/// Integrates every atom through the (ramped) trap with velocity Verlet and
/// stochastic hyperfine flips.
///
/// Positions are in the lab frame; the trap minimum sits at
/// `z = schedule.displacement`.
pub fn evolve<T: Trap>(
    ensemble: &AtomEnsemble,
    trap: &T,
    schedule: &SimulationSchedule,
    seed: u64,
) -> Result<TrajectoryRecord> {
    if ensemble.is_empty() {
        return Err(Error::param("cannot evolve an empty ensemble"));
    }
    schedule.validate(trap.max_frequency())?;
    let dt = schedule.dt;
    let mut snapshot_steps: Vec<usize> = schedule
        .snapshot_times
        .iter()
        .map(|t| ((t / dt).round().max(0.0) as usize).min(schedule.n_steps()))
        .collect();
    snapshot_steps.sort_unstable();
    let plan = Plan { n_steps: schedule.n_steps(), record_every: schedule.steps(schedule.record_interval), snapshot_steps };

    let runs: Vec<AtomRun> = (0..ensemble.len())
        .into_par_iter()
        .map(|i| {
            run_atom(
                i,
                ensemble.positions[i],
                ensemble.velocities[i],
                ensemble.hyperfine[i],
                trap,
                schedule,
                &plan,
                seed,
            )
        })
        .collect::<Result<_>>()?;

    let n_rec = runs[0].samples.len();
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n_rec),
        f3_fraction: Vec::with_capacity(n_rec),
        centroid: Vec::with_capacity(n_rec),
        n_included: Vec::with_capacity(n_rec),
        n_escaped: Vec::with_capacity(n_rec),
        mean_raman_rate: Vec::with_capacity(n_rec),
        flips: Vec::with_capacity(n_rec),
        scattering_events: runs.iter().map(|r| r.scattering).sum(),
        snapshots: Vec::new(),
        final_state: ensemble.clone(),
        seed,
    };
    for j in 0..n_rec {
        let (mut n_in, mut n3, mut flips) = (0usize, 0usize, 0u64);
        let mut c = [0.0; 3];
        let mut rate = 0.0;
        for r in &runs {
            let s = &r.samples[j];
            flips += s.flips as u64;
            if s.excluded {
                continue;
            }
            n_in += 1;
            n3 += s.f3 as usize;
            rate += s.raman;
            for d in 0..3 {
                c[d] += s.pos[d];
            }
        }
        let nf = n_in.max(1) as f64;
        rec.times.push((j * plan.record_every) as f64 * dt);
        rec.f3_fraction.push(if n_in > 0 { n3 as f64 / nf } else { f64::NAN });
        rec.centroid.push([c[0] / nf, c[1] / nf, c[2] / nf]);
        rec.n_included.push(n_in);
        rec.n_escaped.push(ensemble.len() - n_in);
        rec.mean_raman_rate.push(rate / nf);
        rec.flips.push(flips);
    }
    for (k, &step) in plan.snapshot_steps.iter().enumerate() {
        let positions: Vec<[f64; 3]> = runs.iter().map(|r| r.snaps[k]).collect();
        let mut hyperfine = Vec::with_capacity(runs.len());
        let mut included = Vec::with_capacity(runs.len());
        // Hyperfine labels are only kept at record times; use the nearest one.
        let j = ((step as f64 / plan.record_every as f64).round() as usize).min(n_rec - 1);
        for r in &runs {
            hyperfine.push(if r.samples[j].f3 { Hyperfine::F3 } else { Hyperfine::F2 });
        }
        for p in &positions {
            included.push(!trap.excluded([p[0], p[1], p[2] - schedule.displacement]));
        }
        rec.snapshots.push(Snapshot { time: step as f64 * dt, positions, hyperfine, included });
    }
    let fs = &mut rec.final_state;
    for (i, r) in runs.iter().enumerate() {
        fs.positions[i] = r.pos;
        fs.velocities[i] = r.vel;
        fs.hyperfine[i] = r.hf;
    }
    Ok(rec)
}

/// [`evolve`] with the trap minimum moved by `offset` along z.
pub fn displaced_run<T: Trap>(
    ensemble: &AtomEnsemble,
    trap: &T,
    base: &SimulationSchedule,
    offset: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let (lo, hi) = trap.z_range();
    if !(offset > lo && offset < hi) {
        return Err(Error::param(format!(
            "offset {:.3} mm is outside the potential z-range [{:.3}, {:.3}] mm",
            offset * 1e3,
            lo * 1e3,
            hi * 1e3
        )));
    }
    let schedule = SimulationSchedule { displacement: offset, ..base.clone() };
    evolve(ensemble, trap, &schedule, seed)
}

/// Viewing direction of a synthetic absorption image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageAxis {
    /// Looking along x: horizontal is z, vertical is y.
    X,
    /// Looking along z: horizontal is x, vertical is y.
    Z,
}

/// Column-count histogram, row 0 at the top (largest y).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixel: f64,
    /// Physical `(horizontal, vertical)` of the frame center.
    pub center: (f64, f64),
    pub counts: Vec<u32>,
}

impl Image {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn at(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.width + col]
    }

    /// Counts in the rows above and below the frame center.
    pub fn top_bottom(&self) -> (u64, u64) {
        let half = self.height / 2;
        let mut top = 0u64;
        let mut bottom = 0u64;
        for r in 0..self.height {
            let s: u64 = self.counts[r * self.width..(r + 1) * self.width].iter().map(|&c| c as u64).sum();
            if r < half {
                top += s;
            } else if r >= self.height - half {
                bottom += s;
            }
        }
        (top, bottom)
    }
}

/// Projects atom positions onto a `width × height` pixel frame.
pub fn synthetic_image(
    positions: &[[f64; 3]],
    axis: ImageAxis,
    pixel: f64,
    width: usize,
    height: usize,
    center: (f64, f64),
) -> Result<Image> {
    if !(pixel > 0.0) || width == 0 || height == 0 {
        return Err(Error::param("image needs a positive pixel size and non-empty frame"));
    }
    let mut counts = vec![0u32; width * height];
    for p in positions {
        let (h, v) = match axis {
            ImageAxis::X => (p[2], p[1]),
            ImageAxis::Z => (p[0], p[1]),
        };
        let col = ((h - center.0) / pixel + width as f64 / 2.0).floor();
        let row = ((center.1 - v) / pixel + height as f64 / 2.0).floor();
        if col >= 0.0 && row >= 0.0 && (col as usize) < width && (row as usize) < height {
            counts[row as usize * width + col as usize] += 1;
        }
    }
    Ok(Image { width, height, pixel, center, counts })
}
