//! 2D FFTs on row-major square grids and a Bluestein scaled DFT for
//! arbitrary output sampling.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse square 2D FFT with cached plans. The inverse is scaled by `1/n²`.
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let s = 1.0 / (self.n * self.n) as f64;
        for c in data.iter_mut() {
            *c *= s;
        }
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    }
}

pub(crate) fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Spatial frequencies (cycles/m) of FFT bin `k` for `n` samples at `pitch`.
#[inline]
pub fn fft_freq(k: usize, n: usize, pitch: f64) -> f64 {
    let k = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
    k / (n as f64 * pitch)
}

/// Centered DFT `X_m = Σ_j x_j·exp(−2πi·α·(j − N/2)(m − M/2))` for an
/// arbitrary scale `α`, evaluated by Bluestein's chirp convolution.
pub struct ScaledDft {
    n_in: usize,
    n_out: usize,
    len: usize,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    kernel: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl ScaledDft {
    pub fn new(n_in: usize, n_out: usize, alpha: f64) -> Self {
        let len = (n_in + n_out - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let chirp = |t: f64| Complex64::from_polar(1.0, PI * alpha * t * t);
        let a0 = (n_in / 2) as f64;
        let b0 = (n_out / 2) as f64;
        let pre = (0..n_in).map(|j| chirp(j as f64 - a0).conj()).collect();
        let post = (0..n_out).map(|m| chirp(m as f64 - b0).conj()).collect();
        // b_m − a_j = (m − j) + shift
        let shift = a0 - b0;
        let mut kernel = vec![Complex64::new(0.0, 0.0); len];
        for k in 0..n_out {
            kernel[k] = chirp(k as f64 + shift);
        }
        for k in 1..n_in {
            kernel[len - k] = chirp(-(k as f64) + shift);
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len()];
        fwd.process_with_scratch(&mut kernel, &mut scratch);
        Self { n_in, n_out, len, pre, post, kernel, fwd, inv }
    }

    /// Transforms one contiguous line of `n_in` samples into `out` (`n_out`).
    pub fn apply(&self, input: &[Complex64], out: &mut [Complex64], buf: &mut Vec<Complex64>) {
        debug_assert_eq!(input.len(), self.n_in);
        debug_assert_eq!(out.len(), self.n_out);
        buf.clear();
        buf.extend(input.iter().zip(&self.pre).map(|(x, p)| x * p));
        buf.resize(self.len, Complex64::new(0.0, 0.0));
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())];
        self.fwd.process_with_scratch(buf, &mut scratch);
        for (b, k) in buf.iter_mut().zip(&self.kernel) {
            *b *= k;
        }
        self.inv.process_with_scratch(buf, &mut scratch);
        let s = 1.0 / self.len as f64;
        for (m, o) in out.iter_mut().enumerate() {
            *o = buf[m] * self.post[m] * s;
        }
    }

    /// Separable 2D transform of an `n_in × n_in` row-major array.
    pub fn apply_2d(&self, input: &[Complex64]) -> Vec<Complex64> {
        let (ni, no) = (self.n_in, self.n_out);
        let mut buf = Vec::with_capacity(self.len);
        // Rows: ni rows of ni -> ni rows of no.
        let mut stage = vec![Complex64::new(0.0, 0.0); ni * no];
        for r in 0..ni {
            self.apply(&input[r * ni..(r + 1) * ni], &mut stage[r * no..(r + 1) * no], &mut buf);
        }
        // Columns.
        let mut col = vec![Complex64::new(0.0, 0.0); ni];
        let mut col_out = vec![Complex64::new(0.0, 0.0); no];
        let mut out = vec![Complex64::new(0.0, 0.0); no * no];
        for c in 0..no {
            for r in 0..ni {
                col[r] = stage[r * no + c];
            }
            self.apply(&col, &mut col_out, &mut buf);
            for r in 0..no {
                out[r * no + c] = col_out[r];
            }
        }
        out
    }
}
