use serde::{Deserialize, Serialize};

use crate::numerics::{sigmoid, softplus};

/// Exponential families with linear sufficient statistics,
/// `p(y | x, θ) ∝ exp(y θᵀx − A(θᵀx))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmFamily {
    Gaussian,
    Logistic,
    Poisson,
}

/// Natural parameters above this make the Poisson log-partition overflow
/// the working range.
pub const POISSON_MAX_ETA: f64 = 30.0;

impl GlmFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GlmFamily::Gaussian => "gaussian",
            GlmFamily::Logistic => "logistic",
            GlmFamily::Poisson => "poisson",
        }
    }

    /// Log-partition `A(u)`.
    pub fn a(&self, u: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => 0.5 * u * u,
            GlmFamily::Logistic => softplus(u),
            GlmFamily::Poisson => u.exp(),
        }
    }

    /// `A'(u)`, the mean function.
    pub fn a1(&self, u: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => u,
            GlmFamily::Logistic => sigmoid(u),
            GlmFamily::Poisson => u.exp(),
        }
    }

    /// `A''(u)`, the variance function.
    pub fn a2(&self, u: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => 1.0,
            GlmFamily::Logistic => {
                let s = sigmoid(u);
                s * (1.0 - s)
            }
            GlmFamily::Poisson => u.exp(),
        }
    }

    /// Lipschitz constant of `A` on `[-bound, bound]`.
    pub fn lipschitz_a(&self, bound: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => bound,
            GlmFamily::Logistic => sigmoid(bound),
            GlmFamily::Poisson => bound.exp(),
        }
    }
}

impl std::str::FromStr for GlmFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(GlmFamily::Gaussian),
            "logistic" => Ok(GlmFamily::Logistic),
            "poisson" => Ok(GlmFamily::Poisson),
            other => Err(format!("unknown GLM family '{other}'")),
        }
    }
}
