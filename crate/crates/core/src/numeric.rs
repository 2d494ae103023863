//! Small dense least-squares helpers.

use nalgebra::{DMatrix, DVector};

/// Least-squares polynomial coefficients `c[0] + c[1]·x + … + c[deg]·x^deg`.
///
/// Returns `None` when there are fewer points than coefficients or the
/// system is rank deficient.
pub fn polyfit(x: &[f64], y: &[f64], deg: usize) -> Option<Vec<f64>> {
    let n = x.len();
    if n != y.len() || n < deg + 1 {
        return None;
    }
    let a = DMatrix::from_fn(n, deg + 1, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || svd.singular_values.min() < 1e-13 * smax {
        return None;
    }
    let c = svd.solve(&b, 1e-13 * smax).ok()?;
    Some(c.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cubic() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x * x).collect();
        let c = polyfit(&x, &y, 3).unwrap();
        for (a, b) in c.iter().zip([1.0, -2.0, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(polyfit(&x[..2], &y[..2], 2).is_none());
    }
}
