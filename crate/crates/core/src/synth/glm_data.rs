use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{derive_stream, dot, sigmoid};
use crate::theory::GlmFamily;

/// Gaussian covariates with responses from a GLM at a known parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmVectorDataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma_mat: Vec<Vec<f64>>,
    pub theta_star: Vec<f64>,
    pub family: GlmFamily,
    pub seed: u64,
    precision: Vec<Vec<f64>>,
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

fn check_spd(mu: &[f64], sigma: &[Vec<f64>]) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let d = mu.len();
    if sigma.len() != d || sigma.iter().any(|r| r.len() != d) {
        return Err(Error::dim(format!("covariance must be {d}x{d}")));
    }
    let m = to_matrix(sigma);
    if (&m - m.transpose()).abs().max() > 1e-12 * (1.0 + m.abs().max()) {
        return Err(Error::LinAlg("covariance is not symmetric".into()));
    }
    m.cholesky()
        .ok_or_else(|| Error::LinAlg("covariance is not positive definite".into()))
}

impl GlmVectorDataset {
    pub fn k(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Stein score `∇ log N(x; μ, Σ) = −Σ⁻¹(x − μ)`.
    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        self.precision
            .iter()
            .map(|row| -row.iter().zip(x.iter().zip(&self.mu)).map(|(p, (a, m))| p * (a - m)).sum::<f64>())
            .collect()
    }

    /// Gaussian log-density of `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let diff: Vec<f64> = x.iter().zip(&self.mu).map(|(a, m)| a - m).collect();
        let quad: f64 = self
            .precision
            .iter()
            .zip(&diff)
            .map(|(row, di)| di * dot(row, &diff))
            .sum();
        let chol = to_matrix(&self.sigma_mat).cholesky().expect("validated at construction");
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        -0.5 * quad - 0.5 * logdet - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn scores(&self) -> Vec<Vec<f64>> {
        self.x.iter().map(|x| self.score(x)).collect()
    }

    /// Rebuild from stored parts (used by the loader).
    pub fn from_parts(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        mu: Vec<f64>,
        sigma_mat: Vec<Vec<f64>>,
        theta_star: Vec<f64>,
        family: GlmFamily,
        seed: u64,
    ) -> Result<Self> {
        let chol = check_spd(&mu, &sigma_mat)?;
        let inv = chol.inverse();
        let d = mu.len();
        let precision = (0..d).map(|i| (0..d).map(|j| inv[(i, j)]).collect()).collect();
        if x.len() != y.len() || x.iter().any(|r| r.len() != d) || theta_star.len() != d {
            return Err(Error::dim("x, y and theta_star disagree with the covariance dimension"));
        }
        Ok(Self {
            x,
            y,
            mu,
            sigma_mat,
            theta_star,
            family,
            seed,
            precision,
        })
    }
}

/// Draw `k` rows from `N(μ, Σ)` and responses at natural parameter `θ*ᵀx`.
pub fn generate_vector_glm(
    k: usize,
    mu: &[f64],
    sigma_mat: &[Vec<f64>],
    theta_star: &[f64],
    family: GlmFamily,
    seed: u64,
) -> Result<GlmVectorDataset> {
    let chol = check_spd(mu, sigma_mat)?;
    let l = chol.l();
    let d = mu.len();
    if theta_star.len() != d {
        return Err(Error::dim(format!("theta_star has {} entries, expected {d}", theta_star.len())));
    }
    let mut rng = derive_stream(seed, &[("glm-data", 0)]);
    let mut x = Vec::with_capacity(k);
    let mut y = Vec::with_capacity(k);
    for _ in 0..k {
        let z = DVector::from_vec(rng.normal_vec(d));
        let row: Vec<f64> = (&l * z).iter().zip(mu).map(|(a, m)| a + m).collect();
        let eta = dot(theta_star, &row);
        let resp = match family {
            GlmFamily::Gaussian => eta + rng.normal(),
            GlmFamily::Logistic => {
                if rng.uniform() < sigmoid(eta) {
                    1.0
                } else {
                    0.0
                }
            }
            GlmFamily::Poisson => {
                if eta > crate::theory::family::POISSON_MAX_ETA {
                    return Err(Error::numeric(format!("poisson natural parameter {eta} too large")));
                }
                rng.poisson(eta.exp()) as f64
            }
        };
        x.push(row);
        y.push(resp);
    }
    GlmVectorDataset::from_parts(
        x,
        y,
        mu.to_vec(),
        sigma_mat.to_vec(),
        theta_star.to_vec(),
        family,
        seed,
    )
}

pub fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}
