//! Weighted nonlinear least squares: Levenberg–Marquardt with a
//! Nelder–Mead fallback.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};

/// Relative parameter-change tolerance.
pub const XTOL: f64 = 1e-8;
/// Cosine between residual and Jacobian columns below which a point counts
/// as stationary.
pub const GTOL: f64 = 1e-6;

/// Model value at `t`; fills `grad` with ∂m/∂p when it is `Some`.
pub trait Model {
    fn n_params(&self) -> usize;
    fn eval(&self, p: &[f64], t: f64, grad: Option<&mut [f64]>) -> f64;
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub params: Vec<f64>,
    pub ssr: f64,
    /// Standard errors from the scaled inverse normal matrix; NaN if singular.
    pub errors: Vec<f64>,
    pub gradient_cosine: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub fallback: bool,
}

struct Problem<'a, M: Model> {
    model: &'a M,
    t: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
    p: DVector<f64>,
}

impl<M: Model> Problem<'_, M> {
    fn residuals_of(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.t.len(), |i, _| self.w[i] * (self.y[i] - self.model.eval(p, self.t[i], None)))
    }

    fn jacobian_of(&self, p: &[f64]) -> DMatrix<f64> {
        let k = self.model.n_params();
        let mut jac = DMatrix::zeros(self.t.len(), k);
        let mut g = vec![0.0; k];
        for i in 0..self.t.len() {
            self.model.eval(p, self.t[i], Some(&mut g));
            for j in 0..k {
                jac[(i, j)] = -self.w[i] * g[j];
            }
        }
        jac
    }
}

impl<M: Model> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, M> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = self.residuals_of(self.p.as_slice());
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let j = self.jacobian_of(self.p.as_slice());
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

/// Least-squares fit of `model` to `(t, y)` with per-point weights `w`
/// (1/σ) starting from `start`.
pub fn solve<M: Model>(model: &M, t: &[f64], y: &[f64], w: &[f64], start: &[f64]) -> Solution {
    let mut problem = Problem { model, t, y, w, p: DVector::from_column_slice(start) };
    let lm = LevenbergMarquardt::new().with_xtol(XTOL).with_ftol(1e-14).with_gtol(1e-14).with_patience(400);
    let (solved, report) = lm.minimize(problem);
    problem = solved;
    let mut evaluations = report.number_of_evaluations;
    let mut params: Vec<f64> = problem.p.iter().copied().collect();
    let mut fallback = false;
    let lm_ok = report.termination.was_successful() && params.iter().all(|v| v.is_finite());
    if !lm_ok {
        let ssr = |p: &[f64]| problem.residuals_of(p).norm_squared();
        let from = if params.iter().all(|v| v.is_finite()) && ssr(&params).is_finite() { params.clone() } else { start.to_vec() };
        let (p, n) = nelder_mead(ssr, &from, 4000);
        params = p;
        evaluations += n;
        fallback = true;
    }
    finish(&problem, params, evaluations, fallback)
}

fn finish<M: Model>(problem: &Problem<'_, M>, params: Vec<f64>, evaluations: usize, fallback: bool) -> Solution {
    let r = problem.residuals_of(&params);
    let ssr = r.norm_squared();
    let jac = problem.jacobian_of(&params);
    let n = r.len();
    let k = params.len();
    let rn = r.norm();
    let gradient_cosine = if rn == 0.0 || ssr < 1e-28 {
        0.0
    } else {
        (0..k)
            .map(|j| {
                let c = jac.column(j);
                let cn = c.norm();
                if cn == 0.0 { 0.0 } else { c.dot(&r).abs() / (cn * rn) }
            })
            .fold(0.0, f64::max)
    };
    let dof = n.saturating_sub(k).max(1) as f64;
    let errors = match (jac.transpose() * &jac).try_inverse() {
        // A non-positive variance means the normal matrix is numerically singular.
        Some(cov) => (0..k).map(|j| if cov[(j, j)] > 0.0 { (cov[(j, j)] * ssr / dof).sqrt() } else { f64::NAN }).collect(),
        None => vec![f64::NAN; k],
    };
    let converged = ssr.is_finite() && gradient_cosine < GTOL && params.iter().all(|v| v.is_finite());
    Solution { params, ssr, errors, gradient_cosine, converged, evaluations, fallback }
}

/// Derivative-free simplex minimization. Returns the best vertex and the
/// number of function evaluations.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], max_evals: usize) -> (Vec<f64>, usize) {
    let k = start.len();
    let eval = |p: &[f64]| {
        let v = f(p);
        if v.is_finite() { v } else { f64::INFINITY }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
    simplex.push((start.to_vec(), eval(start)));
    for j in 0..k {
        let mut p = start.to_vec();
        p[j] = if p[j] != 0.0 { p[j] * 1.05 } else { 2.5e-4 };
        let v = eval(&p);
        simplex.push((p, v));
    }
    let mut evals = k + 1;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[k].1);
        let spread = simplex.iter().flat_map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs() / b.abs().max(1e-12))).fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-15 * best.abs().max(1e-300) || spread < XTOL {
            break;
        }
        let centroid: Vec<f64> = (0..k).map(|j| simplex[..k].iter().map(|(p, _)| p[j]).sum::<f64>() / k as f64).collect();
        let along = |s: f64| -> Vec<f64> { (0..k).map(|j| centroid[j] + s * (simplex[k].0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[k] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[k - 1].1 {
            simplex[k] = (xr, fr);
        } else {
            let xc = if fr < simplex[k].1 { along(-0.5) } else { along(0.5) };
            let fc = eval(&xc);
            evals += 1;
            if fc < fr.min(simplex[k].1) {
                simplex[k] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for j in 0..k {
                        v.0[j] = x0[j] + 0.5 * (v.0[j] - x0[j]);
                    }
                    v.1 = eval(&v.0);
                }
                evals += k;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex.swap_remove(0).0, evals)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line;
    impl Model for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn eval(&self, p: &[f64], t: f64, grad: Option<&mut [f64]>) -> f64 {
            if let Some(g) = grad {
                g[0] = 1.0;
                g[1] = t;
            }
            p[0] + p[1] * t
        }
    }

    #[test]
    fn fits_a_line() {
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = t.iter().map(|t| 1.5 - 0.25 * t).collect();
        let s = solve(&Line, &t, &y, &vec![1.0; 10], &[0.0, 0.0]);
        assert!(s.converged);
        assert!((s.params[0] - 1.5).abs() < 1e-9 && (s.params[1] + 0.25).abs() < 1e-9);
    }

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let f = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let (p, _) = nelder_mead(f, &[-1.2, 1.0], 20_000);
        assert!((p[0] - 1.0).abs() < 1e-4 && (p[1] - 1.0).abs() < 1e-4, "{p:?}");
    }
}
