//! Relaxation-curve fits, oscillation-frequency extraction and lifetime
//! tables.
//!
//! Two models are fitted to the F=3 fraction:
//!
//! ```text
//! single:   N3(t) = C·(1 − exp(−t/τ))
//! chirped:  N3(t) = C·(1 − exp(−t/τ(t))),   τ(t) = τ0 + β·√t
//! ```
//!
//! The chirped model can alternatively be read with the rate integrated,
//! `N3 = C·(1 − exp(−∫₀ᵗ dt′/τ(t′)))`; see [`ChirpForm`].
//!
//! Fits run on times normalized by the last sample time, so rescaling the
//! time unit leaves the dimensionless parameters unchanged.

mod oscillation;
pub mod solver;

pub use oscillation::{oscillation_frequency, Oscillation};

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::montecarlo::TrajectoryRecord;
use solver::{solve, Model, Solution};

/// Significance level of the model comparison.
pub const MODEL_TEST_LEVEL: f64 = 0.95;

/// Simulated curves are fitted from this time on (s). By then atoms that
/// were not loaded into the trap have fallen out of the counted region.
pub const DEFAULT_FIT_START: f64 = 0.02;

/// (time, F=3 fraction) samples with optional per-point standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationCurve {
    pub times: Vec<f64>,
    pub f3: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl RelaxationCurve {
    pub fn new(times: Vec<f64>, f3: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if times.len() != f3.len() || sigma.as_ref().is_some_and(|s| s.len() != times.len()) {
            return Err(Error::Shape("curve columns differ in length".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("curve times must be finite and strictly increasing"));
        }
        if let Some(i) = f3.iter().position(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::param(format!("f3 = {} at row {i} is outside [0, 1]", f3[i])));
        }
        if let Some(s) = &sigma {
            if let Some(i) = s.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::param(format!("sigma at row {i} must be positive")));
            }
        }
        Ok(Self { times, f3, sigma })
    }

    /// Samples of a simulated record from `t_min` on, weighted by binomial
    /// errors.
    pub fn from_record(record: &TrajectoryRecord, t_min: f64) -> Result<Self> {
        let s = record.relaxation_samples(t_min);
        Self::new(s.iter().map(|v| v.0).collect(), s.iter().map(|v| v.1).collect(), Some(s.iter().map(|v| v.2).collect()))
    }

    /// Reads `time_s,f3[,sigma]` rows; a header line is optional.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(reader);
        let (mut t, mut f, mut s) = (Vec::new(), Vec::new(), Vec::new());
        let mut with_sigma = None;
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 1;
            let rec = rec.map_err(|e| Error::Format(format!("line {line}: {e}")))?;
            if rec.iter().all(|c| c.is_empty()) {
                continue;
            }
            let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let nums = match nums {
                Ok(v) => v,
                Err(_) if i == 0 => continue,
                Err(_) => return Err(Error::Format(format!("line {line}: non-numeric field"))),
            };
            if !(2..=3).contains(&nums.len()) {
                return Err(Error::Format(format!("line {line}: expected 2 or 3 columns, found {}", nums.len())));
            }
            let has = nums.len() == 3;
            if *with_sigma.get_or_insert(has) != has {
                return Err(Error::Format(format!("line {line}: inconsistent column count")));
            }
            t.push(nums[0]);
            f.push(nums[1]);
            if has {
                s.push(nums[2]);
            }
        }
        if t.is_empty() {
            return Err(Error::Format("no data rows".into()));
        }
        Self::new(t, f, with_sigma.unwrap_or(false).then_some(s)).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: &[&str] = if self.sigma.is_some() { &["time_s", "f3", "sigma"] } else { &["time_s", "f3"] };
        w.write_record(header).unwrap();
        for i in 0..self.len() {
            let mut row = vec![self.times[i].to_string(), self.f3[i].to_string()];
            if let Some(s) = &self.sigma {
                row.push(s[i].to_string());
            }
            w.write_record(&row).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn prepare(&self, min_points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.len() < min_points {
            return Err(Error::param(format!("need at least {min_points} points, have {}", self.len())));
        }
        let (lo, hi) = self.f3.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi - lo < 1e-12 {
            return Err(Error::DegenerateFit("constant curve carries no decay information".into()));
        }
        if !(self.t_max() > 0.0) {
            return Err(Error::param("last sample time must be positive"));
        }
        let t = self.times.iter().map(|t| t / self.t_max()).collect();
        let w = match &self.sigma {
            Some(s) => s.iter().map(|s| 1.0 / s).collect(),
            None => vec![1.0; self.len()],
        };
        Ok((t, w))
    }

    fn tail_level(&self) -> f64 {
        let k = (self.len() / 5).max(1);
        let tail = &self.f3[self.len() - k..];
        (tail.iter().sum::<f64>() / k as f64).clamp(1e-3, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Single,
    Chirped,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Single => "single",
            ModelKind::Chirped => "chirped",
        }
    }
}

/// How τ(t) enters the chirped model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChirpForm {
    /// `exp(−t/τ(t))`.
    #[default]
    Direct,
    /// `exp(−∫₀ᵗ dt′/τ(t′))`.
    Integrated,
}

impl ChirpForm {
    pub fn tag(self) -> &'static str {
        match self {
            ChirpForm::Direct => "direct",
            ChirpForm::Integrated => "integrated",
        }
    }
}

/// Fitted model parameters. `beta` is zero for the single-exponential model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ModelKind,
    pub form: ChirpForm,
    pub c: f64,
    /// s.
    pub tau0: f64,
    /// s^(1/2).
    pub beta: f64,
    /// Standard errors of (C, τ0, β).
    pub errors: [f64; 3],
    /// Sum of squared (weighted) residuals.
    pub ssr: f64,
    pub weighted: bool,
    pub n_points: usize,
    pub converged: bool,
    /// The chirp wanted β < 0 and was pinned at zero.
    pub beta_at_bound: bool,
    /// Largest cosine between the residual vector and a Jacobian column.
    pub gradient_cosine: f64,
    /// Last sample time of the fitted curve, s.
    pub t_max: f64,
    pub evaluations: usize,
    pub used_fallback: bool,
}

impl FitResult {
    /// Lifetime at time `t`.
    pub fn tau_at(&self, t: f64) -> f64 {
        self.tau0 + self.beta * t.max(0.0).sqrt()
    }

    /// Model F=3 fraction at time `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let exponent = match (self.model, self.form) {
            (ModelKind::Chirped, ChirpForm::Integrated) => integrated_rate(self.tau0, self.beta, t),
            _ => t / self.tau_at(t),
        };
        self.c * (1.0 - (-exponent).exp())
    }

    /// True when the fit converged to parameters inside the admissible set
    /// with a lifetime resolved by the data.
    pub fn well_determined(&self) -> bool {
        self.converged
            && self.c > 0.0
            && self.c <= 1.0 + 3.0 * self.errors[0].max(0.0)
            && self.tau0 > 0.0
            && self.beta >= 0.0
            && self.errors[1].is_finite()
            && self.errors[1] < self.tau0
            && self.tau0 < 100.0 * self.t_max
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model = {}", self.model.tag());
        let _ = writeln!(s, "chirp_form = {}", self.form.tag());
        let _ = writeln!(s, "c = {}", self.c);
        let _ = writeln!(s, "c_err = {}", self.errors[0]);
        let _ = writeln!(s, "tau0_s = {}", self.tau0);
        let _ = writeln!(s, "tau0_err_s = {}", self.errors[1]);
        let _ = writeln!(s, "beta_s_per_sqrt_s = {}", self.beta);
        let _ = writeln!(s, "beta_err = {}", self.errors[2]);
        let _ = writeln!(s, "tau_500ms_s = {}", self.tau_at(0.5));
        let _ = writeln!(s, "ssr = {}", self.ssr);
        let _ = writeln!(s, "weighted = {}", self.weighted);
        let _ = writeln!(s, "n_points = {}", self.n_points);
        let _ = writeln!(s, "converged = {}", self.converged);
        let _ = writeln!(s, "beta_at_bound = {}", self.beta_at_bound);
        let _ = writeln!(s, "gradient_cosine = {}", self.gradient_cosine);
        let _ = writeln!(s, "fallback = {}", self.used_fallback);
        s
    }

    pub const CSV_HEADER: [&'static str; 13] = [
        "model", "chirp_form", "c", "c_err", "tau0_s", "tau0_err_s", "beta", "beta_err", "tau_500ms_s", "ssr", "n_points",
        "converged", "beta_at_bound",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.model.tag().into(),
            self.form.tag().into(),
            self.c.to_string(),
            self.errors[0].to_string(),
            self.tau0.to_string(),
            self.errors[1].to_string(),
            self.beta.to_string(),
            self.errors[2].to_string(),
            self.tau_at(0.5).to_string(),
            self.ssr.to_string(),
            self.n_points.to_string(),
            self.converged.to_string(),
            self.beta_at_bound.to_string(),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::CSV_HEADER).unwrap();
        w.write_record(self.csv_row()).unwrap();
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// `∫₀ᵗ dt′/(τ0 + β√t′)`.
fn integrated_rate(tau0: f64, beta: f64, t: f64) -> f64 {
    let s = t.max(0.0).sqrt();
    let x = beta * s / tau0;
    if x.abs() < 1e-4 {
        t / tau0 * (1.0 - 2.0 * x / 3.0 + 0.5 * x * x)
    } else {
        2.0 / beta * (s - tau0 / beta * x.ln_1p())
    }
}

/// `[C, ln τ]` in normalized time.
struct SingleExp;

impl Model for SingleExp {
    fn n_params(&self) -> usize {
        2
    }

    fn eval(&self, p: &[f64], t: f64, grad: Option<&mut [f64]>) -> f64 {
        let tau = p[1].exp();
        let e = (-t / tau).exp();
        if let Some(g) = grad {
            g[0] = 1.0 - e;
            g[1] = -p[0] * e * t / tau;
        }
        p[0] * (1.0 - e)
    }
}

/// `[C, ln τ0, β]` in normalized time.
struct Chirped(ChirpForm);

impl Chirped {
    fn value(&self, p: &[f64], t: f64) -> f64 {
        let tau0 = p[1].exp();
        let u = match self.0 {
            ChirpForm::Direct => {
                let tau = tau0 + p[2] * t.sqrt();
                if tau <= 0.0 {
                    return f64::NAN;
                }
                t / tau
            }
            ChirpForm::Integrated => {
                if p[2] < 0.0 && tau0 + p[2] * t.sqrt() <= 0.0 {
                    return f64::NAN;
                }
                integrated_rate(tau0, p[2], t)
            }
        };
        p[0] * (1.0 - (-u).exp())
    }
}

impl Model for Chirped {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, p: &[f64], t: f64, grad: Option<&mut [f64]>) -> f64 {
        let Some(g) = grad else { return self.value(p, t) };
        match self.0 {
            ChirpForm::Direct => {
                let tau0 = p[1].exp();
                let st = t.sqrt();
                let tau = tau0 + p[2] * st;
                let e = (-t / tau).exp();
                let d_tau = -p[0] * e * t / (tau * tau);
                g[0] = 1.0 - e;
                g[1] = d_tau * tau0;
                g[2] = d_tau * st;
                p[0] * (1.0 - e)
            }
            ChirpForm::Integrated => {
                let v = self.value(p, t);
                let mut q = p.to_vec();
                for j in 0..3 {
                    let h = 1e-6 * p[j].abs().max(1e-3);
                    q[j] = p[j] + h;
                    let up = self.value(&q, t);
                    q[j] = p[j] - h;
                    let dn = self.value(&q, t);
                    q[j] = p[j];
                    g[j] = (up - dn) / (2.0 * h);
                }
                v
            }
        }
    }
}

fn best_of(mut sols: Vec<Solution>) -> Solution {
    sols.sort_by(|a, b| (!a.converged).cmp(&!b.converged).then(a.ssr.total_cmp(&b.ssr)));
    sols.swap_remove(0)
}

fn single_solution(curve: &RelaxationCurve, t: &[f64], w: &[f64]) -> Solution {
    let c0 = curve.tail_level();
    let sols = [0.1, 1.0 / 3.0, 1.0].iter().map(|&tau| solve(&SingleExp, t, &curve.f3, w, &[c0, f64::ln(tau)])).collect();
    best_of(sols)
}

fn single_result(curve: &RelaxationCurve, s: &Solution) -> FitResult {
    let tm = curve.t_max();
    let tau0 = s.params[1].exp() * tm;
    FitResult {
        model: ModelKind::Single,
        form: ChirpForm::Direct,
        c: s.params[0],
        tau0,
        beta: 0.0,
        errors: [s.errors[0], s.errors[1] * tau0, 0.0],
        ssr: s.ssr,
        weighted: curve.sigma.is_some(),
        n_points: curve.len(),
        converged: s.converged,
        beta_at_bound: false,
        gradient_cosine: s.gradient_cosine,
        t_max: tm,
        evaluations: s.evaluations,
        used_fallback: s.fallback,
    }
}

/// Single-exponential fit, multi-started from τ = t_max/10, t_max/3, t_max.
pub fn fit_single_exp(curve: &RelaxationCurve) -> Result<FitResult> {
    let (t, w) = curve.prepare(4)?;
    Ok(single_result(curve, &single_solution(curve, &t, &w)))
}

/// Chirped-lifetime fit in the direct form.
pub fn fit_chirped(curve: &RelaxationCurve) -> Result<FitResult> {
    fit_chirped_with(curve, ChirpForm::Direct)
}

/// Chirped-lifetime fit. The single-exponential optimum is always one of the
/// starts, so the chirped residual never exceeds the single one. A fit that
/// drives β negative is pinned at β = 0 and reported through
/// `beta_at_bound`.
pub fn fit_chirped_with(curve: &RelaxationCurve, form: ChirpForm) -> Result<FitResult> {
    let (t, w) = curve.prepare(6)?;
    let single = single_solution(curve, &t, &w);
    let model = Chirped(form);
    let mut starts = vec![[single.params[0], single.params[1], 0.0]];
    let c0 = curve.tail_level();
    for tau in [0.1, 1.0 / 3.0, 1.0] {
        for beta in [0.0, tau] {
            starts.push([c0, f64::ln(tau), beta]);
        }
    }
    let sols: Vec<Solution> = starts.iter().map(|s| solve(&model, &t, &curve.f3, &w, s)).collect();
    let best = best_of(sols);
    let mut out = single_result(curve, &single);
    out.model = ModelKind::Chirped;
    out.form = form;
    out.evaluations += best.evaluations;
    if best.params[2] < 0.0 || (best.ssr > single.ssr && single.converged) {
        out.beta_at_bound = best.params[2] < 0.0;
        return Ok(out);
    }
    let tm = curve.t_max();
    let tau0 = best.params[1].exp() * tm;
    out.c = best.params[0];
    out.tau0 = tau0;
    out.beta = best.params[2] * tm.sqrt();
    out.errors = [best.errors[0], best.errors[1] * tau0, best.errors[2] * tm.sqrt()];
    out.ssr = best.ssr;
    out.converged = best.converged;
    out.gradient_cosine = best.gradient_cosine;
    out.used_fallback = best.fallback;
    Ok(out)
}

/// Nested-model F-test of chirped against single exponential.
#[derive(Debug, Clone)]
pub struct ModelComparison {
    pub single: FitResult,
    pub chirped: FitResult,
    pub f_statistic: f64,
    pub p_value: f64,
    /// `None` when either fit failed to converge.
    pub preferred: Option<ModelKind>,
}

impl ModelComparison {
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ssr_single = {}", self.single.ssr);
        let _ = writeln!(s, "ssr_chirped = {}", self.chirped.ssr);
        let _ = writeln!(s, "f_statistic = {}", self.f_statistic);
        let _ = writeln!(s, "p_value = {}", self.p_value);
        let _ = writeln!(s, "preferred = {}", self.preferred.map_or("undetermined", ModelKind::tag));
        s
    }
}

pub fn model_comparison(curve: &RelaxationCurve) -> Result<ModelComparison> {
    let single = fit_single_exp(curve)?;
    let chirped = fit_chirped(curve)?;
    let n = curve.len() as f64;
    let dof = n - 3.0;
    let f_statistic = if chirped.ssr > 0.0 { ((single.ssr - chirped.ssr).max(0.0)) / (chirped.ssr / dof) } else { f64::INFINITY };
    let p_value = FisherSnedecor::new(1.0, dof).map(|d| d.sf(f_statistic)).unwrap_or(f64::NAN);
    let preferred = (single.converged && chirped.converged).then(|| {
        if !chirped.beta_at_bound && p_value < 1.0 - MODEL_TEST_LEVEL {
            ModelKind::Chirped
        } else {
            ModelKind::Single
        }
    });
    Ok(ModelComparison { single, chirped, f_statistic, p_value, preferred })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeRow {
    pub detuning_nm: f64,
    pub tau0: f64,
    pub tau_500ms: f64,
    pub c: f64,
    pub beta: f64,
    pub converged: bool,
}

/// Lifetimes τ(0) and τ(500 ms) per detuning.
pub fn lifetime_table(fits: &[(f64, FitResult)]) -> Result<Vec<LifetimeRow>> {
    if !fits.iter().any(|(_, f)| f.model == ModelKind::Chirped && f.converged) {
        return Err(Error::param("lifetime table needs at least one converged chirped fit"));
    }
    Ok(fits
        .iter()
        .map(|(d, f)| LifetimeRow {
            detuning_nm: *d,
            tau0: f.tau_at(0.0),
            tau_500ms: f.tau_at(0.5),
            c: f.c,
            beta: f.beta,
            converged: f.converged,
        })
        .collect())
}

pub fn lifetime_table_csv(rows: &[LifetimeRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["detuning_nm", "tau0_s", "tau_500ms_s", "c", "beta_s_per_sqrt_s", "converged"]).unwrap();
    for r in rows {
        w.write_record([
            r.detuning_nm.to_string(),
            r.tau0.to_string(),
            r.tau_500ms.to_string(),
            r.c.to_string(),
            r.beta.to_string(),
            r.converged.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn synth(c: f64, tau0: f64, beta: f64, noise: f64, seed: u64) -> RelaxationCurve {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let times: Vec<f64> = (1..=150).map(|i| i as f64 * 0.01).collect();
        let f3 = times
            .iter()
            .map(|&t| (c * (1.0 - (-t / (tau0 + beta * t.sqrt())).exp()) + noise * n.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        RelaxationCurve::new(times, f3, None).unwrap()
    }

    #[test]
    fn single_recovers_exact_model() {
        let f = fit_single_exp(&synth(0.58, 0.230, 0.0, 0.0, 0)).unwrap();
        assert!(f.converged);
        assert!((f.c / 0.58 - 1.0).abs() < 1e-2 && (f.tau0 / 0.230 - 1.0).abs() < 1e-2, "{f:?}");
    }

    #[test]
    fn chirped_recovers_exact_model() {
        let f = fit_chirped(&synth(0.58, 0.035, 0.148, 0.0, 0)).unwrap();
        assert!(f.converged && !f.beta_at_bound);
        assert!((f.tau0 / 0.035 - 1.0).abs() < 1e-3 && (f.beta / 0.148 - 1.0).abs() < 1e-3, "{f:?}");
        assert!((f.tau_at(0.5) - (f.tau0 + f.beta * 0.5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn chirped_nests_single() {
        let curve = synth(0.58, 0.230, 0.0, 0.0, 0);
        let s = fit_single_exp(&curve).unwrap();
        let c = fit_chirped(&curve).unwrap();
        assert!((c.tau0 / s.tau0 - 1.0).abs() < 1e-2 && (c.c / s.c - 1.0).abs() < 1e-2);
        assert!(c.beta.abs() < 1e-3);
    }

    #[test]
    fn constant_curve_is_degenerate() {
        let curve = RelaxationCurve::new((0..10).map(f64::from).collect(), vec![0.4; 10], None).unwrap();
        assert!(matches!(fit_single_exp(&curve), Err(Error::DegenerateFit(_))));
        assert!(matches!(fit_chirped(&curve), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn comparison_on_true_models() {
        let single = model_comparison(&synth(0.58, 0.230, 0.0, 0.01, 3)).unwrap();
        assert_eq!(single.preferred, Some(ModelKind::Single), "{}", single.to_key_value());
        let chirp = model_comparison(&synth(0.58, 0.035, 0.148, 0.01, 3)).unwrap();
        assert_eq!(chirp.preferred, Some(ModelKind::Chirped));
    }

    #[test]
    fn time_unit_does_not_change_dimensionless_parameters() {
        let s = synth(0.58, 0.05, 0.1, 0.01, 9);
        let ms = RelaxationCurve::new(s.times.iter().map(|t| t * 1e3).collect(), s.f3.clone(), None).unwrap();
        let (a, b) = (fit_chirped(&s).unwrap(), fit_chirped(&ms).unwrap());
        assert!((a.c - b.c).abs() < 1e-6);
        assert!((a.tau0 * 1e3 / b.tau0 - 1.0).abs() < 1e-6);
        assert!((a.beta * 1e3f64.sqrt() / b.beta - 1.0).abs() < 1e-6);
    }

    #[test]
    fn integrated_form_small_beta_matches_closed_form() {
        let (tau0, t) = (0.2, 0.7);
        let a = integrated_rate(tau0, 1e-9, t);
        assert!((a - t / tau0).abs() < 1e-7);
        let b = integrated_rate(tau0, 0.3, t);
        let n = 20000;
        let num: f64 = (0..n).map(|i| (i as f64 + 0.5) * t / n as f64).map(|s| t / n as f64 / (tau0 + 0.3 * s.sqrt())).sum();
        assert!((b / num - 1.0).abs() < 1e-5);
        let f = fit_chirped_with(&synth(0.6, 0.1, 0.0, 0.0, 0), ChirpForm::Integrated).unwrap();
        assert_eq!(f.form, ChirpForm::Integrated);
        assert!((f.tau0 / 0.1 - 1.0).abs() < 1e-2);
    }

    #[test]
    fn csv_round_trip() {
        let curve = RelaxationCurve::new(vec![0.0, 0.1, 0.2], vec![0.0, 0.2, 0.3], Some(vec![0.01; 3])).unwrap();
        let back = RelaxationCurve::from_csv_reader(curve.to_csv().as_bytes()).unwrap();
        assert_eq!(back, curve);
        assert!(matches!(RelaxationCurve::from_csv_reader("t,f\n0,0.1\n1,abc\n".as_bytes()), Err(Error::Format(m)) if m.contains("line 3")));
    }

    #[test]
    fn table_evaluates_tau_at_half_second() {
        let f = fit_chirped(&synth(0.58, 0.035, 0.148, 0.0, 0)).unwrap();
        let rows = lifetime_table(&[(0.5, f.clone())]).unwrap();
        assert!((rows[0].tau_500ms - (f.tau0 + f.beta * 0.5f64.sqrt())).abs() < 1e-15);
        assert!(lifetime_table_csv(&rows).starts_with("detuning_nm,"));
        let single = fit_single_exp(&synth(0.58, 0.2, 0.0, 0.0, 0)).unwrap();
        assert!(lifetime_table(&[(1.0, single)]).is_err());
    }
}
