//! Norm-ball radius, the complexity constant `C` and the generalization bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theory::family::GlmFamily;

/// `r² = max(γ/ρ, √(γ/(ρσ)))`, `C = max((γ/ρ)^{1/2}, (γ/(ρσ))^{1/4})`.
#[allow(non_snake_case)]
pub fn radius_and_C(gamma: f64, rho: f64, sigma: f64) -> Result<(f64, f64)> {
    for (name, v) in [("gamma", gamma), ("rho", rho), ("sigma", sigma)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let a = gamma / rho;
    let b = gamma / (rho * sigma);
    let r2 = a.max(b.sqrt());
    let c = a.sqrt().max(b.powf(0.25));
    Ok((r2.sqrt(), c))
}

/// Loss-dependent constants of the bound on a working box `|θᵀx| ≤ u_max`,
/// `y ∈ [0, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// `sup |∂ℓ/∂(θᵀx)|`.
    pub l: f64,
    /// Lipschitz constant of `A`.
    pub l_a: f64,
    /// `sup |ℓ|`.
    pub b: f64,
}

impl BoundConstants {
    /// Suprema evaluated on a grid over `u`; the loss is affine in `y`, so only
    /// the endpoints of the response range are checked.
    pub fn on_box(family: GlmFamily, u_max: f64, y_max: f64) -> Result<Self> {
        if !(u_max > 0.0) || !(y_max >= 0.0) {
            return Err(Error::config("working box must have u_max > 0 and y_max >= 0"));
        }
        let n = 4001;
        let (mut l, mut l_a, mut b) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            let u = -u_max + 2.0 * u_max * i as f64 / (n - 1) as f64;
            let (a, a1) = (family.a(u), family.a1(u));
            l_a = l_a.max(a1.abs());
            for y in [0.0, y_max] {
                l = l.max((a1 - y).abs());
                b = b.max((a - y * u).abs());
            }
        }
        Ok(Self { l, l_a, b })
    }
}

/// `l_std + 2·L·L_A·C·√(rank/k) + B·√(ln(1/δ)/(2k))`.
#[allow(clippy::too_many_arguments)]
pub fn generalization_bound(
    l_std: f64,
    c: f64,
    rank: usize,
    k: usize,
    l: f64,
    l_a: f64,
    b: f64,
    delta: f64,
) -> Result<f64> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::config(format!("delta must be in (0, 1), got {delta}")));
    }
    if k == 0 || rank == 0 {
        return Err(Error::config("k and rank must be positive"));
    }
    if [c, l, l_a, b].iter().any(|v| !(*v > 0.0)) || !l_std.is_finite() {
        return Err(Error::config("C, L, L_A and B must be positive"));
    }
    let k = k as f64;
    Ok(l_std + 2.0 * l * l_a * c * (rank as f64 / k).sqrt() + b * ((1.0 / delta).ln() / (2.0 * k)).sqrt())
}
