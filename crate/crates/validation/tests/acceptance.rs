//! End-to-end acceptance run: every criterion prints one PASS/FAIL line and
//! the process fails if any criterion does.

use std::collections::HashMap;
use std::ffi::OsString;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use darkring::analysis::oscillation_frequency;
use darkring::constants::{G_EARTH, HBAR};
use darkring::fields::*;
use darkring::potential::*;
use darkring::propagation::*;
use darkring_cli::commands::dispatch;
use darkring_cli::Cli;
use num_complex::Complex64;

const W0: f64 = 1.7e-3;
const F: f64 = 0.215;

type Outcome = Result<(bool, String), String>;

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

struct Work {
    root: tempfile::TempDir,
}

impl Work {
    fn dir(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    /// Runs one CLI command in-process; `Ok(dir)` on success.
    fn run(&self, cmd: &str, config: &Path, out: &str, extra: &[&str]) -> Result<PathBuf, String> {
        let dir = self.dir(out);
        let mut args: Vec<OsString> = vec!["darkring".into(), cmd.into(), "--config".into(), config.into()];
        args.extend(["--out".into(), dir.clone().into_os_string()]);
        args.extend(extra.iter().map(OsString::from));
        let cli = Cli::try_parse_from(&args).map_err(|e| e.to_string())?;
        dispatch(&cli.command).map_err(|e| format!("`darkring {cmd} --config {}` failed: {e}", config.display()))?;
        Ok(dir)
    }

    fn preset(&self, cmd: &str, name: &str, out: &str, extra: &[&str]) -> Result<PathBuf, String> {
        self.run(cmd, &presets().join(format!("{name}.ini")), out, extra)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.root.path().join(format!("{name}.ini"));
        std::fs::write(&p, text).expect("write config");
        p
    }
}

fn key_values(path: &Path) -> Result<HashMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

fn num(kv: &HashMap<String, String>, key: &str) -> Result<f64, String> {
    kv.get(key).ok_or_else(|| format!("missing `{key}`"))?.parse().map_err(|e| format!("`{key}`: {e}"))
}

/// Header and rows of a plain numeric CSV.
fn table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    Ok((header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect()))
}

fn column(path: &Path, name: &str) -> Result<Vec<f64>, String> {
    let (h, rows) = table(path)?;
    let i = h.iter().position(|c| c == name).ok_or_else(|| format!("no column `{name}`"))?;
    rows.iter().map(|r| r[i].parse::<f64>().map_err(|e| e.to_string())).collect()
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x / target - 1.0).abs() <= rel
}

fn beam_config(ell: &str, rc: &str, detuning: f64) -> String {
    format!(
        "[beam]\nw0 = 1.7 mm\npower = 150 mW\ndetuning_nm = {detuning}\nell = {ell}\nrc_over_w0 = {rc}\n\n\
         [optics]\nf = 215 mm\ngrid_n = 1024\ngrid_extent = 16 mm\nz_span = 10 mm\nn_planes = 201\n"
    )
}

fn ring_volume(source: &ComplexField, ell: i32, rc: f64, lam: f64) -> darkring::Result<IntensityVolume> {
    let info = SourceInfo { ell, rc_over_w0: rc, w0: W0, f: F, wavelength: lam, power: source.power() };
    focus_scan(source, F, 10e-3, 201, &ScanSettings::default(), info)
}

fn masked_beam(ell: i32, rc: f64, lam: f64) -> darkring::Result<ComplexField> {
    let g = GridSpec::slm_default();
    apply_mask(&gaussian_beam(g, W0, 0.15, lam)?, &ring_phase_mask(g, ell, rc * W0)?)
}

fn c1_equal_barrier(w: &Work) -> Outcome {
    let cfg = w.config("optimize", &beam_config("0, 1, 2", "inf", 1.0));
    let dir = w.run("optimize-rc", &cfg, "c1", &[])?;
    let rc = column(&dir.join("rc_table.csv"), "rc_over_w0")?;
    let target = [0.71, 0.79, 0.85];
    let ok = rc.len() == 3 && rc.iter().zip(&target).all(|(r, t)| (r - t).abs() <= 0.02);
    Ok((ok, format!("Rc/w0 = {:.3?} (target {target:?} ± 0.02)", rc)))
}

fn c2_mode_fractions(w: &Work) -> Outcome {
    let cfg = w.config("beam_l0", &beam_config("0", "0.71", 1.0));
    let dir = w.run("beam", &cfg, "c2", &[])?;
    let frac = |file: &str| -> Result<(f64, f64), String> {
        let (_, rows) = table(&dir.join(file))?;
        let get = |p: &str| {
            rows.iter().find(|r| r[0] == p).map(|r| r[3].parse::<f64>().unwrap_or(f64::NAN)).ok_or("missing row")
        };
        Ok((get("0")?, get("1")?))
    };
    let hit = |(p0, p1): (f64, f64)| (p0 - 0.13).abs() <= 0.03 && (p1 - 0.78).abs() <= 0.03;
    let at_w0 = frac("spectrum_l0.csv")?;
    let best = frac("spectrum_best_l0.csv")?;
    let archived = dir.join("waist_scan_l0.csv").exists();
    Ok((
        (hit(at_w0) || hit(best)) && archived,
        format!(
            "p0/p1 = {:.1}%/{:.1}% at w0, {:.1}%/{:.1}% at best scanned waist (target 13%/78% ± 3 points)",
            100.0 * at_w0.0,
            100.0 * at_w0.1,
            100.0 * best.0,
            100.0 * best.1
        ),
    ))
}

fn c3_depths(w: &Work) -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, target) in [("0.5nm", 0.26), ("1nm", 0.13), ("2nm", 0.065), ("4nm", 0.033)] {
        let dir = w.preset("scan", &format!("fig3_delta{name}"), &format!("c3_{name}"), &[])?;
        let depth = num(&key_values(&dir.join("barrier_l1.txt"))?, "depth_hbar_gamma")?;
        let pass = within(depth, target, 0.10);
        ok &= pass;
        msg.push(format!("{name}: {depth:.4} vs {target} {}", if pass { "ok" } else { "off" }));
    }
    Ok((ok, format!("depth/ħΓ {}", msg.join(", "))))
}

fn c4_frequencies(w: &Work) -> Outcome {
    let dir = w.preset("scan", "fig1c_l1", "c4", &[])?;
    let kv = key_values(&dir.join("barrier_l1.txt"))?;
    let (perp, par, aspect) = (num(&kv, "omega_perp_hz")?, num(&kv, "omega_par_hz")?, num(&kv, "aspect_ratio")?);
    let ok = within(perp, 800.0, 0.15) && within(par, 3.0, 0.30) && within(aspect, 1.0 / 300.0, 0.25);
    Ok((ok, format!("ω⊥/2π = {perp:.0} Hz (800 ± 15%), ω∥/2π = {par:.2} Hz (3 ± 30%), ω∥/ω⊥ = {aspect:.2e} (3.33e-3 ± 25%)")))
}

fn c5_barrier_structure(w: &Work) -> Outcome {
    let mut ratios = Vec::new();
    for ell in 0..3 {
        let dir = w.preset("scan", &format!("fig1c_l{ell}"), &format!("c5_l{ell}"), &[])?;
        ratios.push(num(&key_values(&dir.join(format!("barrier_l{ell}.txt")))?, "inner_outer_ratio")?);
    }
    let p = AtomicParams::rb85(1.0);
    let lam = p.trap_wavelength();
    let lg = lg_mode(GridSpec::slm_default(), 1, 1, W0, lam).map_err(|e| e.to_string())?;
    let lg = lg.clone().scaled((0.15 / lg.power()).sqrt());
    let v = ring_volume(&lg, 1, f64::INFINITY, lam).map_err(|e| e.to_string())?;
    let r = barrier_report(&v, &p).map_err(|e| e.to_string())?;
    let pure = r.barrier_ratio();
    let ok = ratios.iter().all(|x| (0.25..=0.35).contains(x)) && within(pure, 3.0, 0.30);
    Ok((ok, format!("presets U_in/U_out = {ratios:.3?} (in [0.25, 0.35]); pure LG_1^1 {pure:.2} (3 ± 30%), z-bounded = {}", r.z_bounded())))
}

fn c6_gravity(_: &Work) -> Outcome {
    let p = AtomicParams::rb85(1.0);
    let lam = p.trap_wavelength();
    let e = |e: darkring::Error| e.to_string();
    let v = ring_volume(&masked_beam(2, 0.858, lam).map_err(e)?, 2, 0.858, lam).map_err(e)?;
    let rep = barrier_report(&v, &p).map_err(e)?;
    let field = PotentialField::new(&v, p, true).map_err(e)?;
    // Lowest point of the ring straight above and straight below the axis.
    let null = |sign: f64| -> Result<f64, String> {
        let mut best = f64::INFINITY;
        for i in 0..=4000 {
            let rho = rep.ring_radius * (0.5 + i as f64 / 4000.0);
            best = best.min(field.energy([0.0, sign * rho, 0.0]).map_err(e)?);
        }
        Ok(best)
    };
    let du = (null(1.0)? - null(-1.0)?) / p.hbar_gamma();
    let diameter = 2.0 * rep.ring_radius;
    let derived = HBAR * p.gamma / 30.0 / (p.mass * G_EARTH);
    let ok = within(du, 1.0 / 30.0, 0.15) && within(diameter, derived, 0.15);
    Ok((
        ok,
        format!(
            "U(top) − U(bottom) = ħΓ/{:.1} (ħΓ/30 ± 15%), ring diameter {:.1} µm vs derived {:.1} µm",
            1.0 / du,
            diameter * 1e6,
            derived * 1e6
        ),
    ))
}

fn mc_and_fit(w: &Work, preset: &str, out: &str) -> Result<(PathBuf, HashMap<String, String>), String> {
    let dir = w.preset("mc", preset, out, &[])?;
    let input = dir.join("relaxation.csv");
    let fit_dir = w.preset("fit", preset, &format!("{out}_fit"), &["--input", input.to_str().unwrap_or_default()])?;
    Ok((dir, key_values(&fit_dir.join(if fit_dir.join("comparison.txt").exists() { "comparison.txt" } else { "fit_single.txt" }))?
        .into_iter()
        .chain(key_values(&fit_dir.join("fit_chirped.txt")).unwrap_or_default().into_iter().map(|(k, v)| (format!("chirped.{k}"), v)))
        .chain(key_values(&fit_dir.join("fit_single.txt")).unwrap_or_default().into_iter().map(|(k, v)| (format!("single.{k}"), v)))
        .collect()))
}

fn c7_relaxation(w: &Work) -> Outcome {
    let (dir, a) = mc_and_fit(w, "fig3_delta0.5nm", "c7_05")?;
    let (_, b) = mc_and_fit(w, "fig3_delta4nm", "c7_4")?;
    let preferred = a.get("preferred").map(String::as_str) == Some("chirped");
    let p = num(&a, "p_value")?;
    let ratio_a = num(&a, "chirped.tau_500ms_s")? / num(&a, "chirped.tau0_s")?;
    let tau_b = num(&b, "chirped.tau0_s")?;
    let ratio_b = num(&b, "chirped.tau_500ms_s")? / tau_b;
    let ok = preferred && ratio_a >= 2.0 && (tau_b / 1.44).max(1.44 / tau_b) <= 3.0 && ratio_b < 1.3;

    // Informational: flip-rate ordering in the 0.5 nm run.
    let traj = dir.join("trajectory.csv");
    let (t, flips, n) = (column(&traj, "time_s")?, column(&traj, "flips")?, column(&traj, "n_included")?);
    let rate = |t0: f64, t1: f64| {
        let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] > t0 + 1e-9 && t[i] <= t1 + 1e-9).collect();
        let f: f64 = idx.iter().map(|&i| flips[i]).sum();
        let n_mean = idx.iter().map(|&i| n[i]).sum::<f64>() / idx.len().max(1) as f64;
        f / (n_mean * (t1 - t0))
    };
    let (early, late) = (rate(0.0, 0.05), rate(1.0, 1.05));
    println!(
        "  info: flip rate per atom 0-50 ms = {early:.2}/s, 1000-1050 ms = {late:.2}/s (early > late expected: {})",
        if early > late { "holds" } else { "does not hold" }
    );
    Ok((
        ok,
        format!(
            "0.5 nm: preferred = {} (p = {p:.1e}), τ(500 ms)/τ0 = {ratio_a:.2} (≥ 2); 4 nm: τ0 = {:.0} ms (1440 ms within ×3), τ(500 ms)/τ0 = {ratio_b:.2} (< 1.3)",
            a.get("preferred").cloned().unwrap_or_default(),
            tau_b * 1e3
        ),
    ))
}

fn c8_displacement(w: &Work) -> Outcome {
    let mut taus = Vec::new();
    let mut osc = None;
    for off in ["3mm", "1.5mm", "0mm"] {
        let (dir, kv) = mc_and_fit(w, &format!("fig4_displace{off}"), &format!("c8_{off}"))?;
        taus.push(num(&kv, "single.tau0_s")?);
        if off == "3mm" {
            let traj = dir.join("trajectory.csv");
            let (t, z) = (column(&traj, "time_s")?, column(&traj, "centroid_z_m")?);
            let keep: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= 0.02).collect();
            let tt: Vec<f64> = keep.iter().map(|&i| t[i]).collect();
            let zz: Vec<f64> = keep.iter().map(|&i| z[i]).collect();
            osc = Some(oscillation_frequency(&tt, &zz).map_err(|e| e.to_string())?.frequency);
        }
    }
    let scan = w.preset("scan", "fig4_displace3mm", "c8_scan", &[])?;
    let par = num(&key_values(&scan.join("barrier_l1.txt"))?, "omega_par_hz")?;
    let freq = osc.unwrap_or(f64::NAN);
    let ok = taus[0] < taus[1] && taus[1] < taus[2] && within(freq, par, 0.20);
    Ok((
        ok,
        format!(
            "τ(3, 1.5, 0 mm) = {:.0}, {:.0}, {:.0} ms (strictly increasing); 3 mm oscillation {freq:.2} Hz vs ω∥/2π = {par:.2} Hz (± 20%)",
            taus[0] * 1e3,
            taus[1] * 1e3,
            taus[2] * 1e3
        ),
    ))
}

fn c9_propagation(_: &Work) -> Outcome {
    let e = |r: darkring::Result<ComplexField>| r.map_err(|e| e.to_string());
    let lam = 780e-9;
    let g = GridSpec::new(512, 2e-6).map_err(|e| e.to_string())?;
    let w0 = 0.1e-3;
    let zr = PI * w0 * w0 / lam;
    let dist = |a: &ComplexField, b: &ComplexField, align: bool| {
        let inner: Complex64 = b.data.iter().zip(&a.data).map(|(y, x)| y.conj() * x).sum();
        let rot = if align { Complex64::from_polar(1.0, -inner.arg()) } else { Complex64::new(1.0, 0.0) };
        let d: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x * rot - y).norm_sqr()).sum();
        (d / b.data.iter().map(|y| y.norm_sqr()).sum::<f64>()).sqrt()
    };
    let (mut worst_l2, mut worst_power): (f64, f64) = (0.0, 0.0);
    for (p, ell) in [(0, 0), (0, 1), (1, 1)] {
        let start = e(lg_mode(g, p, ell, w0, lam))?;
        let num = e(angular_spectrum(&start, zr))?;
        let exact = e(lg_mode_at(g, p, ell, w0, lam, zr))?;
        worst_l2 = worst_l2.max(dist(&num, &exact, true));
        worst_power = worst_power.max((num.power() / start.power() - 1.0).abs());
    }
    let start = e(lg_mode(g, 1, 1, w0, lam))?;
    let two = e(angular_spectrum(&e(angular_spectrum(&start, 7e-3))?, 11e-3))?;
    let one = e(angular_spectrum(&start, 18e-3))?;
    let back = e(angular_spectrum(&e(angular_spectrum(&start, 20e-3))?, -20e-3))?;
    let (comp, recip) = (dist(&two, &one, false), dist(&back, &start, false));
    let ok = worst_l2 < 1e-3 && worst_power < 1e-6 && comp < 1e-9 && recip < 1e-9;
    Ok((
        ok,
        format!("L2 {worst_l2:.1e} (< 1e-3), power {worst_power:.1e} (< 1e-6), composition {comp:.1e}, reciprocity {recip:.1e} (< 1e-9)"),
    ))
}

fn c10_rate_laws(w: &Work) -> Outcome {
    let products: Vec<f64> = (30..=100)
        .step_by(5)
        .map(|d| {
            let p = AtomicParams::rb85(d as f64);
            p.rates_per_intensity().map(|r| r.raman * p.detuning.powi(4)).unwrap_or(f64::NAN)
        })
        .collect();
    let (lo, hi) = products.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let spread = hi / lo - 1.0;

    let dir = w.preset("scan", "fig3_delta0.5nm", "c10", &[])?;
    let depth = num(&key_values(&dir.join("barrier_l1.txt"))?, "depth_j")?;
    let red = red_trap_scattering_time(depth, &AtomicParams::rb85(-0.5), 5e-6).map_err(|e| e.to_string())?;
    let heat = recoil_heating_rate(1.0, &AtomicParams::rb85(1.0)).map_err(|e| e.to_string())?;
    let ok = spread <= 0.05 && within(red, 2.5e-3, 0.25) && (heat / 400e-9).max(400e-9 / heat) <= 1.5;
    Ok((
        ok,
        format!(
            "Raman·Δ⁴ spread over 30-100 nm {:.1}% (≤ 5%); red trap 1/R = {:.2} ms (2.5 ± 25%); heating {:.0} nK/s per s⁻¹ (400 within ×1.5)",
            100.0 * spread,
            red * 1e3,
            heat * 1e9
        ),
    ))
}

fn c11_determinism(w: &Work) -> Outcome {
    let a = w.preset("mc", "fig1c_l1", "c11_t1", &["--threads", "1"])?;
    let b = w.preset("mc", "fig1c_l1", "c11_t4", &["--threads", "4"])?;
    let c = w.preset("mc", "fig1c_l1", "c11_again", &[])?;
    let mut compared = 0;
    let mut differing = Vec::new();
    for entry in std::fs::read_dir(&a).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().and_then(|s| s.to_str()) != Some("csv") {
            continue;
        }
        let name = path.file_name().unwrap_or_default();
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        for other in [&b, &c] {
            compared += 1;
            if std::fs::read(other.join(name)).ok().as_deref() != Some(bytes.as_slice()) {
                differing.push(name.to_string_lossy().into_owned());
            }
        }
    }
    Ok((
        compared > 0 && differing.is_empty(),
        format!("{compared} CSV comparisons across 1, 4 and default worker counts; differing: {differing:?}"),
    ))
}

type Criterion = fn(&Work) -> Outcome;

fn main() {
    let criteria: [(&str, Criterion, u64); 11] = [
        ("equal-barrier ring radius", c1_equal_barrier, 300),
        ("LG mode fractions", c2_mode_fractions, 60),
        ("trap depths", c3_depths, 120),
        ("trap frequencies", c4_frequencies, 120),
        ("barrier structure", c5_barrier_structure, 600),
        ("gravity identity", c6_gravity, 600),
        ("time-dependent relaxation", c7_relaxation, 1800),
        ("displacement study", c8_displacement, 1200),
        ("propagation oracles", c9_propagation, 60),
        ("scattering-rate laws", c10_rate_laws, 600),
        ("determinism", c11_determinism, 600),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let work = Work { root: tempfile::tempdir().expect("temporary directory") };
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(&work)))
            .unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let (pass, detail) = match res {
            Ok((ok, d)) => (ok && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n:2} {}: {name}: {detail} [{:.1} s{}]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
