//! Central finite differences, the oracle behind every gradient test.

use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x` over every coordinate.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    finite_diff_grad_at(f, x, h, &coords)
}

/// Central differences restricted to `coords`; output is aligned with `coords`.
pub fn finite_diff_grad_at<F>(f: F, x: &[f64], h: f64, coords: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::config(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &d in coords {
        if d >= x.len() {
            return Err(Error::dim(format!("coordinate {d} out of range {}", x.len())));
        }
        let orig = probe[d];
        probe[d] = orig + h;
        let fp = f(&probe);
        probe[d] = orig - h;
        let fm = f(&probe);
        probe[d] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite function value probing coordinate {d}"
            )));
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Outcome of comparing an analytic gradient against finite differences.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradComparison {
    pub max_rel_err: f64,
    pub max_abs_err_small: f64,
    pub compared: usize,
    pub skipped_small: usize,
}

impl GradComparison {
    pub fn passes(&self, rel_tol: f64, small_abs_tol: f64) -> bool {
        self.max_rel_err <= rel_tol && self.max_abs_err_small <= small_abs_tol
    }

    pub fn merge(&mut self, other: GradComparison) {
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.max_abs_err_small = self.max_abs_err_small.max(other.max_abs_err_small);
        self.compared += other.compared;
        self.skipped_small += other.skipped_small;
    }
}

/// Relative error `|a - n| / max(|a|, |n|)` over components whose magnitude
/// exceeds `floor`; smaller components only contribute absolute error.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], floor: f64) -> GradComparison {
    let mut out = GradComparison::default();
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale > floor {
            out.max_rel_err = out.max_rel_err.max((a - n).abs() / scale);
            out.compared += 1;
        } else {
            out.max_abs_err_small = out.max_abs_err_small.max((a - n).abs());
            out.skipped_small += 1;
        }
    }
    out
}
