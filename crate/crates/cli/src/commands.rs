use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use darkring::analysis::{
    fit_chirped_with, fit_single_exp, lifetime_table, lifetime_table_csv, model_comparison, ChirpForm, FitResult,
    RelaxationCurve,
};
use darkring::constants::RB_D2_WAVELENGTH;
use darkring::fields::{apply_mask, decompose, gaussian_beam, ring_phase_mask, scan_basis_waist, ComplexField, GridSpec};
use darkring::io::{pgm16_counts, pgm16_full_scale, pgm16_scaled, rho_slice_csv, write_volume, RawArray};
use darkring::montecarlo::{displaced_run, evolve, sample_ensemble, synthetic_image, ImageAxis, SimulationSchedule};
use darkring::numeric::polyfit;
use darkring::potential::{
    barrier_report, equal_barrier_rc_with, AtomicParams, BarrierReport, PotentialField, RcSearchSettings,
};
use darkring::propagation::{focus_scan, to_focal_region_on, IntensityVolume, ScanSettings, SourceInfo};

use crate::{CliError, Command, ModelFlag, RunConfig};

type CmdResult = Result<Vec<PathBuf>, CliError>;

pub fn dispatch(cmd: &Command) -> CmdResult {
    let common = match cmd {
        Command::Beam(c) | Command::Scan(c) | Command::OptimizeRc(c) | Command::Mc(c) => c,
        Command::Fit(f) => &f.common,
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.set("atoms", "seed", &seed.to_string())?;
    }
    if let Some(out) = &common.out {
        cfg.set("output", "directory", &out.display().to_string())?;
    }
    let mut out = Output::new(&cfg)?;
    if common.manifest {
        let m = cfg.manifest();
        print!("{m}");
        out.text("manifest.ini", &m)?;
    }
    let (cfg, o) = (&cfg, &mut out);
    let mut run = move || match cmd {
        Command::Beam(_) => cmd_beam(cfg, o),
        Command::Scan(_) => cmd_scan(cfg, o),
        Command::OptimizeRc(_) => cmd_optimize_rc(cfg, o),
        Command::Mc(_) => cmd_mc(cfg, o),
        Command::Fit(f) => {
            let input = match &f.input {
                Some(p) => p.clone(),
                None => PathBuf::from(cfg.text("fit", "input")?),
            };
            let model = match f.model {
                Some(m) => m,
                None => parse_model(cfg)?,
            };
            cmd_fit(cfg, o, &input, model)
        }
    };
    let result = match common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| darkring::Error::Parameter(e.to_string()))?
            .install(run),
        None => run(),
    };
    result.map(|_| out.written)
}

/// Artifact writer honoring `output.formats`.
pub struct Output {
    pub dir: PathBuf,
    formats: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl Output {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = PathBuf::from(cfg.text("output", "directory")?);
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, formats: cfg.texts("output", "formats")?, written: Vec::new() })
    }

    fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    /// Always written (reports, manifests).
    fn text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        self.put(name, content.as_bytes())
    }

    fn csv(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        if self.wants("csv") {
            self.put(name, content.as_bytes())?;
        }
        Ok(())
    }

    fn pgm(&mut self, name: &str, make: impl FnOnce() -> darkring::Result<Vec<u8>>) -> Result<(), CliError> {
        if self.wants("pgm") {
            let bytes = make()?;
            self.put(name, &bytes)?;
        }
        Ok(())
    }

    fn raw(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> darkring::Result<()>) -> Result<(), CliError> {
        if self.wants("raw") {
            let mut buf = Vec::new();
            write(&mut buf)?;
            self.put(name, &buf)?;
        }
        Ok(())
    }
}

/// Beam section resolved to SI, one `(ℓ, Rc/w0)` pair per requested index.
#[derive(Debug, Clone)]
pub struct BeamSetup {
    pub w0: f64,
    pub power: f64,
    pub detuning_nm: f64,
    pub wavelength: f64,
    pub modes: Vec<(i32, f64)>,
    pub f: f64,
    pub grid: GridSpec,
    pub z_span: f64,
    pub n_planes: usize,
    pub scan: ScanSettings,
}

impl BeamSetup {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        let w0 = cfg.positive("beam", "w0")?;
        let power = cfg.float("beam", "power")?;
        if power < 0.0 {
            return Err(darkring::Error::Parameter("beam.power must be non-negative".into()).into());
        }
        let (detuning_nm, wavelength) = if cfg.has("beam", "wavelength") {
            let lam = cfg.positive("beam", "wavelength")?;
            ((RB_D2_WAVELENGTH - lam) * 1e9, lam)
        } else {
            if !cfg.has("beam", "detuning_nm") {
                return Err(crate::ConfigError {
                    origin: "config".into(),
                    line: None,
                    message: "missing required key `beam.detuning_nm` (or `beam.wavelength`)".into(),
                }
                .into());
            }
            let d = cfg.float("beam", "detuning_nm")?;
            (d, RB_D2_WAVELENGTH - d * 1e-9)
        };
        let ells: Vec<i32> = cfg.ints("beam", "ell")?.into_iter().map(|l| l as i32).collect();
        let rcs = cfg.floats("beam", "rc_over_w0")?;
        let rcs = match rcs.len() {
            1 => vec![rcs[0]; ells.len()],
            n if n == ells.len() => rcs,
            n => {
                return Err(darkring::Error::Parameter(format!(
                    "beam.rc_over_w0 has {n} entries for {} values of beam.ell",
                    ells.len()
                ))
                .into())
            }
        };
        let grid = GridSpec::with_extent(cfg.count("optics", "grid_n")?, cfg.positive("optics", "grid_extent")?)?;
        let scan = ScanSettings {
            focal_n: cfg.count("optics", "focal_n")?,
            focal_pitch: cfg.positive("optics", "focal_pitch")?,
            ..ScanSettings::default()
        };
        Ok(Self {
            w0,
            power,
            detuning_nm,
            wavelength,
            modes: ells.into_iter().zip(rcs).collect(),
            f: cfg.positive("optics", "f")?,
            grid,
            z_span: cfg.positive("optics", "z_span")?,
            n_planes: cfg.count("optics", "n_planes")?,
            scan,
        })
    }

    pub fn params(&self) -> AtomicParams {
        AtomicParams::rb85(self.detuning_nm)
    }

    /// Masked source field on the SLM grid.
    pub fn source(&self, ell: i32, rc_over_w0: f64) -> darkring::Result<ComplexField> {
        let beam = gaussian_beam(self.grid, self.w0, self.power, self.wavelength)?;
        let mask = ring_phase_mask(self.grid, ell, rc_over_w0 * self.w0)?;
        apply_mask(&beam, &mask)
    }

    pub fn source_info(&self, ell: i32, rc_over_w0: f64) -> SourceInfo {
        SourceInfo { ell, rc_over_w0, w0: self.w0, f: self.f, wavelength: self.wavelength, power: self.power }
    }

    pub fn volume(&self, ell: i32, rc_over_w0: f64) -> darkring::Result<IntensityVolume> {
        let field = self.source(ell, rc_over_w0)?;
        focus_scan(&field, self.f, self.z_span, self.n_planes, &self.scan, self.source_info(ell, rc_over_w0))
    }

    pub fn focal_waist(&self) -> f64 {
        self.wavelength * self.f / (std::f64::consts::PI * self.w0)
    }
}

fn parse_model(cfg: &RunConfig) -> Result<ModelFlag, CliError> {
    match cfg.text("fit", "model")?.as_str() {
        "single" => Ok(ModelFlag::Single),
        "chirped" => Ok(ModelFlag::Chirped),
        "both" => Ok(ModelFlag::Both),
        m => Err(darkring::Error::Parameter(format!("fit.model `{m}` is not single, chirped or both")).into()),
    }
}

fn parse_form(cfg: &RunConfig) -> Result<ChirpForm, CliError> {
    match cfg.text("fit", "chirp_form")?.as_str() {
        "direct" => Ok(ChirpForm::Direct),
        "integrated" => Ok(ChirpForm::Integrated),
        m => Err(darkring::Error::Parameter(format!("fit.chirp_form `{m}` is not direct or integrated")).into()),
    }
}

fn suffix(ell: i32) -> String {
    format!("l{ell}")
}

pub fn cmd_beam(cfg: &RunConfig, out: &mut Output) -> CmdResult {
    let setup = BeamSetup::from_config(cfg)?;
    let p_max = cfg.count("optics", "p_max")? as i32;
    for &(ell, rc) in &setup.modes {
        let s = suffix(ell);
        let mask = ring_phase_mask(setup.grid, ell, rc * setup.w0)?;
        let n = setup.grid.n;
        out.pgm(&format!("mask_{s}.pgm"), || pgm16_full_scale(&mask.phase, n, n, TAU))?;
        out.raw(&format!("mask_{s}.drf"), |b| RawArray::from_mask(&mask).write(b))?;

        let field = apply_mask(&gaussian_beam(setup.grid, setup.w0, setup.power, setup.wavelength)?, &mask)?;
        let focal_grid = GridSpec::new(setup.scan.focal_n, setup.scan.focal_pitch)?;
        let focal = to_focal_region_on(&field, setup.f, focal_grid)?;
        let fi = focal.intensity();
        out.pgm(&format!("focal_{s}.pgm"), || pgm16_scaled(&fi, focal_grid.n, focal_grid.n))?;
        out.raw(&format!("focal_{s}.drf"), |b| RawArray::from_field(&focal).write(b))?;

        let spectrum = decompose(&field, setup.w0, ell, p_max)?;
        out.csv(&format!("spectrum_{s}.csv"), &spectrum.to_csv())?;
        let waists: Vec<f64> = (0..=40).map(|i| setup.w0 * (0.6 + 0.02 * i as f64)).collect();
        let (spectra, best) = scan_basis_waist(&field, &waists, ell, p_max, 1)?;
        let mut scan = String::from("basis_waist_m,p0_fraction,p1_fraction,residual\n");
        for sp in &spectra {
            let _ = writeln!(scan, "{:e},{:.9},{:.9},{:.9}", sp.basis_waist, sp.fraction(0), sp.fraction(1), sp.residual);
        }
        out.csv(&format!("waist_scan_{s}.csv"), &scan)?;
        out.csv(&format!("spectrum_best_{s}.csv"), &spectra[best].to_csv())?;
    }
    Ok(Vec::new())
}

/// Radial potential at the plane of the minimum with the harmonic overlay.
fn rho_profile_csv(v: &IntensityVolume, r: &BarrierReport, coef: f64) -> String {
    let iz = v.z_index(r.min_position.1);
    let f = &r.radial_fit;
    let mut s = String::from("rho_m,u_hbar_gamma,harmonic_fit_hbar_gamma\n");
    for (rho, i) in v.rho_axis.iter().zip(v.rho_profile(iz)) {
        let fit = if (rho - f.center).abs() <= f.half_window { format!("{:.9e}", r.in_units(f.eval(*rho))) } else { String::new() };
        let _ = writeln!(s, "{rho:.9e},{:.9e},{fit}", r.in_units(coef * i));
    }
    s
}

/// Potential along the minimum path with the axial overlay.
fn z_profile_csv(r: &BarrierReport) -> String {
    let mut s = String::from("z_m,rho_m,u_hbar_gamma,harmonic_fit_hbar_gamma\n");
    for p in &r.z_path {
        let fit = match &r.axial_fit {
            Some(f) if (p[0] - f.center).abs() <= f.half_window => format!("{:.9e}", r.in_units(f.eval(p[0]))),
            _ => String::new(),
        };
        let _ = writeln!(s, "{:.9e},{:.9e},{:.9e},{fit}", p[0], p[1], r.in_units(p[2]));
    }
    s
}

pub fn cmd_scan(cfg: &RunConfig, out: &mut Output) -> CmdResult {
    let setup = BeamSetup::from_config(cfg)?;
    let params = setup.params();
    let coef = params.potential_per_intensity()?;
    let mut radii = Vec::new();
    let mut open = Vec::new();
    for &(ell, rc) in &setup.modes {
        let s = suffix(ell);
        let vol = setup.volume(ell, rc)?;
        out.raw(&format!("volume_{s}.drv"), |b| write_volume(&vol, b))?;
        let iz0 = vol.z_index(0.0);
        out.csv(&format!("focal_profile_{s}.csv"), &rho_slice_csv(&vol, iz0))?;
        let report = barrier_report(&vol, &params)?;
        out.text(&format!("barrier_{s}.txt"), &report.to_key_value())?;
        out.csv(&format!("barrier_{s}.csv"), &report.to_csv())?;
        out.csv(&format!("rho_profile_{s}.csv"), &rho_profile_csv(&vol, &report, coef))?;
        out.csv(&format!("z_profile_{s}.csv"), &z_profile_csv(&report))?;
        if let Err(e) = report.require_bounded() {
            open.push((ell, e));
        }
        radii.push((ell, rc, report.ring_radius));
    }
    if radii.len() > 1 {
        let x: Vec<f64> = radii.iter().map(|r| r.0 as f64).collect();
        let y: Vec<f64> = radii.iter().map(|r| r.2).collect();
        let line = polyfit(&x, &y, 1);
        let mut s = String::from("ell,rc_over_w0,ring_radius_m,linear_fit_m\n");
        for (ell, rc, r) in &radii {
            let fit = line.as_ref().map_or(String::new(), |c| format!("{:.6e}", c[0] + c[1] * *ell as f64));
            let _ = writeln!(s, "{ell},{rc},{r:.6e},{fit}");
        }
        out.csv("ring_radius.csv", &s)?;
    }
    match open.into_iter().next() {
        Some((ell, e)) => Err(match e {
            darkring::Error::Topology(m) => darkring::Error::Topology(format!("ell = {ell}: {m}")),
            other => other,
        }
        .into()),
        None => Ok(Vec::new()),
    }
}

pub fn cmd_optimize_rc(cfg: &RunConfig, out: &mut Output) -> CmdResult {
    let setup = BeamSetup::from_config(cfg)?;
    let settings = RcSearchSettings { grid: setup.grid, scan: setup.scan, ..RcSearchSettings::default() };
    let mut table = String::from("ell,rc_over_w0,evaluations\n");
    let mut failure = None;
    for &(ell, _) in &setup.modes {
        match equal_barrier_rc_with(ell, setup.w0, setup.f, setup.wavelength, &settings) {
            Ok(search) => {
                let _ = writeln!(table, "{ell},{:.6},{}", search.rc_over_w0, search.evaluations);
                let mut scan = String::from("rc_over_w0,relative_barrier_difference\n");
                for (x, d) in &search.scan {
                    let _ = writeln!(scan, "{x:.6},{}", d.map_or(String::new(), |d| format!("{d:.6e}")));
                }
                out.csv(&format!("rc_scan_{}.csv", suffix(ell)), &scan)?;
            }
            Err(e) => {
                out.text(&format!("rc_failure_{}.txt", suffix(ell)), &format!("{e}\n"))?;
                failure.get_or_insert((ell, e));
            }
        }
    }
    out.csv("rc_table.csv", &table)?;
    match failure {
        Some((ell, e)) => Err(match e {
            darkring::Error::Optimization(m) => darkring::Error::Optimization(format!("ell = {ell}: {m}")),
            other => other,
        }
        .into()),
        None => Ok(Vec::new()),
    }
}

/// Schedule section resolved to SI.
pub fn schedule_from(cfg: &RunConfig, setup: &BeamSetup) -> Result<SimulationSchedule, CliError> {
    Ok(SimulationSchedule {
        ramp: cfg.float("schedule", "ramp_ms")? * 1e-3,
        duration: cfg.positive("schedule", "duration_ms")? * 1e-3,
        dt: cfg.positive("schedule", "dt_us")? * 1e-6,
        displacement: cfg.float("schedule", "displacement_mm")? * 1e-3,
        record_interval: cfg.positive("schedule", "record_ms")? * 1e-3,
        snapshot_times: cfg.floats("schedule", "snapshot_ms")?.iter().map(|t| t * 1e-3).collect(),
        detuning_nm: setup.detuning_nm,
        power: setup.power,
        flips: cfg.boolean("schedule", "flips")?,
        recoil_kicks: cfg.boolean("schedule", "recoil_kicks")?,
        freeze_motion: false,
    })
}

pub fn cmd_mc(cfg: &RunConfig, out: &mut Output) -> CmdResult {
    let setup = BeamSetup::from_config(cfg)?;
    let &(ell, rc) = setup.modes.first().expect("ell list is non-empty");
    let params = setup.params();
    let vol = setup.volume(ell, rc)?;
    let trap = PotentialField::new(&vol, params, cfg.boolean("atoms", "gravity")?)?;
    let schedule = schedule_from(cfg, &setup)?;
    let seed = cfg.int("atoms", "seed")? as u64;
    let ensemble = sample_ensemble(
        cfg.count("atoms", "n")?,
        cfg.positive("atoms", "sigma")?,
        cfg.positive("atoms", "temperature_uK")? * 1e-6,
        &params,
        seed,
    )?;
    let record = if schedule.displacement != 0.0 {
        displaced_run(&ensemble, &trap, &schedule, schedule.displacement, seed)?
    } else {
        evolve(&ensemble, &trap, &schedule, seed)?
    };
    out.csv("trajectory.csv", &record.to_csv())?;
    let start = cfg.float("fit", "start_ms")? * 1e-3;
    let curve = RelaxationCurve::from_record(&record, start)?;
    out.csv("relaxation.csv", &curve.to_csv())?;

    let pixel = cfg.positive("output", "image_pixel")?;
    let size = cfg.count("output", "image_size")?;
    let mut summary = String::new();
    let _ = writeln!(summary, "ell = {ell}");
    let _ = writeln!(summary, "rc_over_w0 = {rc}");
    let _ = writeln!(summary, "detuning_nm = {}", setup.detuning_nm);
    let _ = writeln!(summary, "seed = {seed}");
    let _ = writeln!(summary, "n_atoms = {}", ensemble.len());
    let _ = writeln!(summary, "n_included_final = {}", record.n_included.last().copied().unwrap_or(0));
    let _ = writeln!(summary, "f3_fraction_final = {}", record.f3_fraction.last().copied().unwrap_or(f64::NAN));
    let _ = writeln!(summary, "expected_scattering_events = {:.1}", record.scattering_events);
    for snap in &record.snapshots {
        let tag = format!("{:.0}ms", snap.time * 1e3);
        out.raw(&format!("snapshot_{tag}.drf"), |b| RawArray::from_snapshot(snap).write(b))?;
        let kept: Vec<[f64; 3]> =
            snap.positions.iter().zip(&snap.included).filter(|(_, &i)| i).map(|(p, _)| *p).collect();
        for (axis, name, center) in [
            (ImageAxis::Z, "z", (0.0, 0.0)),
            (ImageAxis::X, "x", (schedule.displacement, 0.0)),
        ] {
            let img = synthetic_image(&kept, axis, pixel, size, size, center)?;
            let (top, bottom) = img.top_bottom();
            let _ = writeln!(summary, "image_{name}_{tag}_counts = {}", img.total());
            let _ = writeln!(summary, "image_{name}_{tag}_top_bottom = {top},{bottom}");
            out.pgm(&format!("image_{name}_{tag}.pgm"), || pgm16_counts(&img))?;
        }
    }
    out.text("summary.txt", &summary)?;
    Ok(Vec::new())
}

pub fn cmd_fit(cfg: &RunConfig, out: &mut Output, input: &Path, model: ModelFlag) -> CmdResult {
    let curve = RelaxationCurve::read_csv(input)?;
    let form = parse_form(cfg)?;
    let detuning = if cfg.has("beam", "detuning_nm") { cfg.float("beam", "detuning_nm")? } else { f64::NAN };
    let mut fits: Vec<FitResult> = Vec::new();
    if model != ModelFlag::Chirped {
        let f = fit_single_exp(&curve)?;
        out.text("fit_single.txt", &f.to_key_value())?;
        fits.push(f);
    }
    if model != ModelFlag::Single {
        let f = fit_chirped_with(&curve, form)?;
        out.text("fit_chirped.txt", &f.to_key_value())?;
        fits.push(f);
    }
    let mut w = String::new();
    w.push_str(&darkring::analysis::FitResult::CSV_HEADER.join(","));
    w.push('\n');
    for f in &fits {
        w.push_str(&f.csv_row().join(","));
        w.push('\n');
    }
    out.csv("fits.csv", &w)?;
    if model == ModelFlag::Both && form == ChirpForm::Direct {
        out.text("comparison.txt", &model_comparison(&curve)?.to_key_value())?;
    }
    if let Some(chirped) = fits.iter().find(|f| f.model == darkring::analysis::ModelKind::Chirped && f.converged) {
        let rows = lifetime_table(&[(detuning, chirped.clone())])?;
        out.csv("lifetime_table.csv", &lifetime_table_csv(&rows))?;
    }
    if let Some(bad) = fits.iter().find(|f| !f.converged) {
        return Err(CliError::NotConverged(format!("{} fit (gradient cosine {:.2e})", bad.model.tag(), bad.gradient_cosine)));
    }
    Ok(Vec::new())
}
