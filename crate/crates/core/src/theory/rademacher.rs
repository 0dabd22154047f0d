//! Empirical Rademacher complexity of norm-ball linear classes and the
//! data-dependent constants that enter its bound.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_stream, dot, mean, norm, std_error, RngStream};
use crate::theory::family::GlmFamily;
use crate::theory::risk::ScoredData;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// `(1/k) Σ xᵢxᵢᵀ`.
pub fn second_moment_matrix(x: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = x.first().map_or(0, Vec::len);
    if x.is_empty() || x.iter().any(|r| r.len() != d) {
        return Err(Error::dim("second moment needs non-empty rows of equal length"));
    }
    let mut m = DMatrix::zeros(d, d);
    for r in x {
        let v = nalgebra::DVector::from_column_slice(r);
        m.ger(1.0, &v, &v, 1.0);
    }
    Ok(m / x.len() as f64)
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    // Symmetric PSD input: singular values are the absolute eigenvalues.
    let mut s: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    let top = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|v| **v > RANK_TOL * top).count()
}

/// Smallest singular value above the rank threshold.
pub fn lowest_nonzero_singular_value(m: &DMatrix<f64>) -> Result<f64> {
    let s = singular_values(m);
    let top = s.first().copied().unwrap_or(0.0);
    s.into_iter()
        .rfind(|v| *v > RANK_TOL * top)
        .ok_or_else(|| Error::LinAlg("matrix has no nonzero singular value".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte Carlo over sign vectors of `(radius/k)·‖Σ ξᵢxᵢ‖`, the supremum of
/// the Rademacher correlation over the ball `‖θ‖ ≤ radius`.
pub fn empirical_rademacher(
    x: &[Vec<f64>],
    radius: f64,
    n_mc: usize,
    rng: &RngStream,
) -> Result<RademacherEstimate> {
    if !(radius >= 0.0) {
        return Err(Error::config(format!("radius must be >= 0, got {radius}")));
    }
    let d = x.first().map_or(0, Vec::len);
    if x.is_empty() || x.iter().any(|r| r.len() != d) {
        return Err(Error::dim("rows must be non-empty and of equal length"));
    }
    if n_mc == 0 {
        return Err(Error::config("n_mc must be >= 1"));
    }
    let k = x.len() as f64;
    let draws: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|m| {
            let mut r = rng.child("signs", m as u64);
            let mut acc = vec![0.0; d];
            for row in x {
                let s = r.sign();
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += s * v);
            }
            radius * norm(&acc) / k
        })
        .collect();
    Ok(RademacherEstimate {
        estimate: mean(&draws),
        stderr: if n_mc > 1 { std_error(&draws) } else { 0.0 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoConfig {
    pub n_probes: usize,
    /// Upper bound on `E‖s(x)‖²`.
    pub kappa1: f64,
    /// Lower bound on `‖θ‖²`; defaults to the smallest probe radius squared.
    #[serde(default)]
    pub kappa2: Option<f64>,
    pub radii: Vec<f64>,
}

impl Default for RhoConfig {
    fn default() -> Self {
        Self {
            n_probes: 1000,
            kappa1: 1.0,
            kappa2: None,
            radii: vec![1.0, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub rho_hat: f64,
    /// Raw minimum before clamping at zero.
    pub raw_min: f64,
    pub skipped: usize,
    pub used: usize,
    /// Largest constraint value `(1/k) Σ A''θᵀθ − A'θᵀs` over the probes.
    pub gamma_probe_max: f64,
}

/// Constraint functional of the regularized class at `θ`.
pub fn constraint_value(theta: &[f64], data: &ScoredData, family: GlmFamily) -> f64 {
    let tt = dot(theta, theta);
    let total: f64 = data
        .x
        .iter()
        .zip(&data.scores)
        .map(|(x, s)| {
            let u = dot(theta, x);
            family.a2(u) * tt - family.a1(u) * dot(theta, s)
        })
        .sum();
    total / data.k() as f64
}

/// Probe estimate of the retentiveness constant:
/// `min_θ [E A''(θᵀx) − (κ1/κ2)·√E A'(θᵀx)²] / min{1, E(θᵀx)²}`, clamped at 0.
pub fn estimate_rho(data: &ScoredData, family: GlmFamily, config: &RhoConfig, rng: &RngStream) -> Result<RhoEstimate> {
    if config.radii.is_empty() || config.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::config("probe radii must be positive and non-empty"));
    }
    if config.n_probes == 0 || !(config.kappa1 >= 0.0) {
        return Err(Error::config("need n_probes >= 1 and kappa1 >= 0"));
    }
    let min_r = config.radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let kappa2 = config.kappa2.unwrap_or(min_r * min_r);
    if !(kappa2 > 0.0) {
        return Err(Error::config("kappa2 must be > 0"));
    }
    let d = data.dim();
    let k = data.k() as f64;
    let probes: Vec<(Option<f64>, f64)> = (0..config.n_probes)
        .into_par_iter()
        .map(|p| {
            let mut r = rng.child("probe", p as u64);
            let mut dir = r.normal_vec(d);
            let n = norm(&dir);
            let radius = config.radii[p % config.radii.len()];
            dir.iter_mut().for_each(|v| *v *= radius / n);
            let (mut a2, mut a1sq, mut u2) = (0.0, 0.0, 0.0);
            for x in &data.x {
                let u = dot(&dir, x);
                a2 += family.a2(u);
                a1sq += family.a1(u).powi(2);
                u2 += u * u;
            }
            let (a2, a1sq, u2) = (a2 / k, a1sq / k, u2 / k);
            let den = u2.min(1.0);
            let ratio = (den >= 1e-12).then(|| (a2 - config.kappa1 / kappa2 * a1sq.sqrt()) / den);
            (ratio, constraint_value(&dir, data, family))
        })
        .collect();
    let used: Vec<f64> = probes.iter().filter_map(|p| p.0).collect();
    if used.is_empty() {
        return Err(Error::numeric("every rho probe had a vanishing denominator"));
    }
    let raw_min = used.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RhoEstimate {
        rho_hat: raw_min.max(0.0),
        raw_min,
        skipped: probes.len() - used.len(),
        used: used.len(),
        gamma_probe_max: probes.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Convenience for callers that only hold a seed.
pub fn estimate_rho_seeded(data: &ScoredData, family: GlmFamily, config: &RhoConfig, seed: u64) -> Result<RhoEstimate> {
    estimate_rho(data, family, config, &derive_stream(seed, &[("rho", 0)]))
}
