//! Standard and one-step-Langevin augmented risks of a GLM, and the
//! second-order regularizers that relate them.

use crate::error::{Error, Result};
use crate::numerics::{dot, mean, std_error, RngStream};
use crate::synth::GlmVectorDataset;
use crate::theory::family::{GlmFamily, POISSON_MAX_ETA};

/// Covariates, responses and the score `s(x) = ∇ log p(x)` at each row.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoredData {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, scores: Vec<Vec<f64>>) -> Result<Self> {
        let d = x.first().map_or(0, Vec::len);
        if x.len() != y.len() || x.len() != scores.len() {
            return Err(Error::dim(format!(
                "{} rows, {} responses, {} scores",
                x.len(),
                y.len(),
                scores.len()
            )));
        }
        if x.iter().chain(&scores).any(|r| r.len() != d) {
            return Err(Error::dim(format!("all rows and scores must have length {d}")));
        }
        Ok(Self { x, y, scores })
    }

    pub fn from_glm(ds: &GlmVectorDataset) -> Self {
        Self {
            x: ds.x.clone(),
            y: ds.y.clone(),
            scores: ds.scores(),
        }
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::config("empty dataset"));
        }
        if theta.len() != self.dim() {
            return Err(Error::dim(format!("theta has {} entries, data has dim {}", theta.len(), self.dim())));
        }
        Ok(())
    }
}

fn guard(eta: f64, family: GlmFamily) -> Result<()> {
    if !eta.is_finite() || (family == GlmFamily::Poisson && eta > POISSON_MAX_ETA) {
        return Err(Error::numeric(format!("natural parameter {eta} outside the {} working range", family.name())));
    }
    Ok(())
}

/// `A(θᵀx) − y·θᵀx`.
pub fn glm_nll(theta: &[f64], x: &[f64], y: f64, family: GlmFamily) -> Result<f64> {
    if theta.len() != x.len() {
        return Err(Error::dim(format!("theta {} vs x {}", theta.len(), x.len())));
    }
    let eta = dot(theta, x);
    guard(eta, family)?;
    Ok(family.a(eta) - y * eta)
}

/// `x − (β²/2)·s + β·ε`.
pub fn one_step_ld(x: &[f64], score: &[f64], beta: f64, noise: &[f64]) -> Result<Vec<f64>> {
    if x.len() != score.len() || x.len() != noise.len() {
        return Err(Error::dim(format!(
            "x {}, score {}, noise {}",
            x.len(),
            score.len(),
            noise.len()
        )));
    }
    let h = 0.5 * beta * beta;
    Ok(x.iter()
        .zip(score)
        .zip(noise)
        .map(|((xi, si), ni)| xi - h * si + beta * ni)
        .collect())
}

pub fn std_risk(theta: &[f64], data: &ScoredData, family: GlmFamily) -> Result<f64> {
    data.check(theta)?;
    let mut total = 0.0;
    for (x, &y) in data.x.iter().zip(&data.y) {
        total += glm_nll(theta, x, y, family)?;
    }
    Ok(total / data.k() as f64)
}

/// Plain Monte Carlo estimate of the augmented risk, with its standard error
/// over the `n_mc` noise draws (each draw perturbs every row).
pub fn aug_risk_mc(
    theta: &[f64],
    data: &ScoredData,
    beta: f64,
    n_mc: usize,
    family: GlmFamily,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    data.check(theta)?;
    if n_mc == 0 {
        return Err(Error::config("n_mc must be >= 1"));
    }
    if beta == 0.0 {
        return Ok((std_risk(theta, data, family)?, 0.0));
    }
    let d = data.dim();
    let mut noise = vec![0.0; d];
    let mut per_draw = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let mut total = 0.0;
        for ((x, s), &y) in data.x.iter().zip(&data.scores).zip(&data.y) {
            rng.fill_normal(&mut noise);
            let xt = one_step_ld(x, s, beta, &noise)?;
            total += glm_nll(theta, &xt, y, family)?;
        }
        per_draw.push(total / data.k() as f64);
    }
    let se = if n_mc > 1 { std_error(&per_draw) } else { f64::NAN };
    Ok((mean(&per_draw), se))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegTerms {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl RegTerms {
    pub fn total(&self) -> f64 {
        self.r1 + self.r2 + self.r3
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            r1: s * self.r1,
            r2: s * self.r2,
            r3: s * self.r3,
        }
    }
}

/// Second-order terms of the augmented risk for `f_θ(x) = θᵀx`, `h = A`.
/// `R3` vanishes because a linear predictor has zero Hessian.
pub fn reg_terms_general(theta: &[f64], data: &ScoredData, beta: f64, family: GlmFamily) -> Result<RegTerms> {
    data.check(theta)?;
    let tt = dot(theta, theta);
    let (mut r1, mut r2) = (0.0, 0.0);
    for ((x, s), &y) in data.x.iter().zip(&data.scores).zip(&data.y) {
        let eta = dot(theta, x);
        guard(eta, family)?;
        r1 += (family.a1(eta) - y) * dot(theta, s);
        r2 += family.a2(eta) * tt;
    }
    let c = beta * beta / (2.0 * data.k() as f64);
    Ok(RegTerms {
        r1: -c * r1,
        r2: c * r2,
        r3: 0.0,
    })
}

/// The GLM regularizer in its compact form, which omits the `y`-dependent
/// part of `R1`.
pub fn reg_glm(theta: &[f64], data: &ScoredData, beta: f64, family: GlmFamily) -> Result<f64> {
    data.check(theta)?;
    let tt = dot(theta, theta);
    let mut acc = 0.0;
    for (x, s) in data.x.iter().zip(&data.scores) {
        let eta = dot(theta, x);
        guard(eta, family)?;
        acc += family.a2(eta) * tt - family.a1(eta) * dot(theta, s);
    }
    Ok(beta * beta / (2.0 * data.k() as f64) * acc)
}

/// Regularizers for the scalar cubic-feature model `f_θ(x) = θ·x³` on 1-D
/// data, where `R3` is nonzero.
pub fn reg_terms_cubic_1d(theta: f64, data: &ScoredData, beta: f64, family: GlmFamily) -> Result<RegTerms> {
    if data.dim() != 1 || data.x.is_empty() {
        return Err(Error::dim("cubic-feature model needs non-empty 1-D data"));
    }
    let (mut r1, mut r2, mut r3) = (0.0, 0.0, 0.0);
    for ((x, s), &y) in data.x.iter().zip(&data.scores).zip(&data.y) {
        let x = x[0];
        let f = theta * x.powi(3);
        guard(f, family)?;
        let (f1, f2) = (3.0 * theta * x * x, 6.0 * theta * x);
        let resid = family.a1(f) - y;
        r1 += resid * f1 * s[0];
        r2 += family.a2(f) * f1 * f1;
        r3 += resid * f2;
    }
    let c = beta * beta / (2.0 * data.k() as f64);
    Ok(RegTerms {
        r1: -c * r1,
        r2: c * r2,
        r3: c * r3,
    })
}

/// Plain Monte Carlo augmented risk of the cubic-feature model.
pub fn aug_risk_cubic_1d_mc(
    theta: f64,
    data: &ScoredData,
    beta: f64,
    n_mc: usize,
    family: GlmFamily,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if n_mc < 2 {
        return Err(Error::config("n_mc must be >= 2"));
    }
    let mut per_draw = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let mut total = 0.0;
        for ((x, s), &y) in data.x.iter().zip(&data.scores).zip(&data.y) {
            let xt = x[0] - 0.5 * beta * beta * s[0] + beta * rng.normal();
            let f = theta * xt.powi(3);
            guard(f, family)?;
            total += family.a(f) - y * f;
        }
        per_draw.push(total / data.k() as f64);
    }
    Ok((mean(&per_draw), std_error(&per_draw)))
}
