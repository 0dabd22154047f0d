//! Synthetic low-rank tasks for the Rademacher and generalization-bound
//! checks: rank-`r` Gaussian latents embedded isometrically in `d` ambient
//! dimensions, with logistic (or other GLM) responses.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_stream, dot, sigmoid};
use crate::theory::bound::{generalization_bound, radius_and_C, BoundConstants};
use crate::theory::family::GlmFamily;
use crate::theory::rademacher::{
    constraint_value, empirical_rademacher, estimate_rho, lowest_nonzero_singular_value, numeric_rank,
    second_moment_matrix, RhoConfig,
};
use crate::theory::risk::{std_risk, ScoredData};
use crate::theory::scan::{BoundInputs, RademacherRow};

/// `d × rank` matrix with orthonormal columns, fixed by `(seed, d)`.
pub fn embedding(d: usize, rank: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if rank == 0 || rank > d {
        return Err(Error::config(format!("need 1 <= rank <= d, got rank {rank}, d {d}")));
    }
    let mut rng = derive_stream(seed, &[("embed", d as u64)]);
    let g = DMatrix::from_fn(d, rank, |_, _| rng.normal());
    let q = g.qr().q();
    Ok((0..d).map(|i| (0..rank).map(|j| q[(i, j)]).collect()).collect())
}

fn embed(u: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    u.iter().map(|row| dot(row, z)).collect()
}

/// Rank-deficient Gaussian task. Latents are `N(0, scale²·I)`; the score is
/// the pseudo-inverse one, `−U z / scale²`, so `E‖s‖² = rank/scale²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowRankTask {
    pub k: usize,
    pub dim: usize,
    pub rank: usize,
    pub latent_scale: f64,
    /// True parameter in latent coordinates; embedded as `U w`.
    pub latent_theta: Vec<f64>,
    pub family: GlmFamily,
}

impl Default for LowRankTask {
    fn default() -> Self {
        Self {
            k: 200,
            dim: 2,
            rank: 2,
            latent_scale: 1.0,
            latent_theta: vec![1.0, -0.5],
            family: GlmFamily::Logistic,
        }
    }
}

impl LowRankTask {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.rank == 0 || self.rank > self.dim {
            return Err(Error::config("need k >= 1 and 1 <= rank <= dim"));
        }
        if !(self.latent_scale > 0.0) {
            return Err(Error::config("latent_scale must be > 0"));
        }
        if self.latent_theta.len() != self.rank {
            return Err(Error::dim(format!(
                "latent_theta has {} entries, expected rank {}",
                self.latent_theta.len(),
                self.rank
            )));
        }
        Ok(())
    }

    pub fn kappa1(&self) -> f64 {
        self.rank as f64 / self.latent_scale.powi(2)
    }

    /// Latent draws depend on `(seed, label, n)` only, so the same sample is
    /// shared by every ambient dimension.
    pub fn sample(&self, u: &[Vec<f64>], n: usize, seed: u64, label: &str) -> Result<(ScoredData, Vec<Vec<f64>>)> {
        self.validate()?;
        let mut rng = derive_stream(seed, &[(label, n as u64)]);
        let (mut xs, mut ys, mut ss, mut zs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let z: Vec<f64> = rng.normal_vec(self.rank).iter().map(|v| v * self.latent_scale).collect();
            let eta = dot(&self.latent_theta, &z);
            let y = match self.family {
                GlmFamily::Gaussian => eta + rng.normal(),
                GlmFamily::Logistic => f64::from(u8::from(rng.uniform() < sigmoid(eta))),
                GlmFamily::Poisson => rng.poisson(eta.exp()) as f64,
            };
            let s: Vec<f64> = z.iter().map(|v| -v / self.latent_scale.powi(2)).collect();
            xs.push(embed(u, &z));
            ss.push(embed(u, &s));
            ys.push(y);
            zs.push(z);
        }
        Ok((ScoredData::new(xs, ys, ss)?, zs))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RademacherStudy {
    pub dims: Vec<usize>,
    pub task: LowRankTask,
    pub n_mc: usize,
    pub rho: RhoConfig,
}

impl Default for RademacherStudy {
    fn default() -> Self {
        Self {
            dims: vec![2, 20, 200],
            task: LowRankTask::default(),
            n_mc: 2000,
            rho: RhoConfig {
                n_probes: 1000,
                kappa1: 2.0,
                kappa2: None,
                radii: vec![5.0, 6.0],
            },
        }
    }
}

/// One row per ambient dimension. `γ` is the largest probe constraint value;
/// rows with `ρ̂ = 0` carry an infinite bound.
pub fn rademacher_study(study: &RademacherStudy, seed: u64) -> Result<Vec<RademacherRow>> {
    study
        .dims
        .iter()
        .map(|&d| {
            let task = LowRankTask { dim: d, ..study.task.clone() };
            let u = embedding(d, task.rank, seed)?;
            let (data, _) = task.sample(&u, task.k, seed, "rad-latent")?;
            let sm = second_moment_matrix(&data.x)?;
            let rank = numeric_rank(&sm);
            let sigma = lowest_nonzero_singular_value(&sm)?;
            let rho = estimate_rho(&data, task.family, &study.rho, &derive_stream(seed, &[("rho", d as u64)]))?;
            let gamma = rho.gamma_probe_max;
            let signs = derive_stream(seed, &[("rademacher", 0)]);
            let unit = empirical_rademacher(&data.x, 1.0, study.n_mc, &signs)?;
            let (c, est) = if rho.rho_hat > 0.0 && gamma > 0.0 {
                let (r, c) = radius_and_C(gamma, rho.rho_hat, sigma)?;
                (c, empirical_rademacher(&data.x, r, study.n_mc, &signs)?)
            } else {
                (f64::INFINITY, unit)
            };
            Ok(RademacherRow {
                k: task.k,
                ambient_dim: d,
                rank,
                rho_hat: rho.rho_hat,
                gamma,
                c,
                estimate: est.estimate,
                stderr: est.stderr,
                bound: c * (rank as f64 / task.k as f64).sqrt(),
                unit_estimate: unit.estimate,
            })
        })
        .collect()
}

pub const COVERAGE_CSV_HEADER: &str = "replicate,l_std,l_test,gap,bound,rho_hat,gamma,C,covered";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageStudy {
    pub replicates: usize,
    pub task: LowRankTask,
    pub n_test: usize,
    pub delta: f64,
    pub rho: RhoConfig,
}

impl Default for CoverageStudy {
    fn default() -> Self {
        Self {
            replicates: 100,
            task: LowRankTask {
                dim: 20,
                ..LowRankTask::default()
            },
            n_test: 20000,
            delta: 0.05,
            rho: RademacherStudy::default().rho,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub replicate: usize,
    pub l_std: f64,
    pub l_test: f64,
    pub inputs: BoundInputs,
}

impl CoverageRow {
    pub fn gap(&self) -> f64 {
        self.l_test - self.l_std
    }

    pub fn covered(&self) -> bool {
        self.l_test <= self.inputs.value
    }
}

pub fn coverage_csv(rows: &[CoverageRow]) -> String {
    let mut s = format!("{COVERAGE_CSV_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
            r.replicate,
            r.l_std,
            r.l_test,
            r.gap(),
            r.inputs.value,
            r.inputs.rho_hat,
            r.inputs.gamma,
            r.inputs.c,
            u8::from(r.covered())
        ));
    }
    s
}

/// Newton's method on the latent coordinates; the embedded estimate `U ŵ`
/// is the minimum-norm maximizer of the likelihood.
pub fn fit_latent_mle(z: &[Vec<f64>], y: &[f64], family: GlmFamily) -> Result<Vec<f64>> {
    let r = z.first().map_or(0, Vec::len);
    let mut w = DVector::zeros(r);
    let ridge = 1e-8;
    for _ in 0..100 {
        let mut g = DVector::from_fn(r, |i, _| ridge * w[i]);
        let mut h = DMatrix::identity(r, r) * ridge;
        for (zi, yi) in z.iter().zip(y) {
            let zv = DVector::from_column_slice(zi);
            let u = w.dot(&zv);
            g += &zv * (family.a1(u) - yi);
            h += &zv * zv.transpose() * family.a2(u);
        }
        let step = h
            .lu()
            .solve(&g)
            .ok_or_else(|| Error::LinAlg("singular Hessian in MLE fit".into()))?;
        w -= &step;
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("MLE fit diverged"));
        }
        if step.norm() < 1e-12 * (1.0 + w.norm()) {
            break;
        }
    }
    Ok(w.iter().copied().collect())
}

/// Replicate fits of the task; each evaluates the bound at the fitted
/// parameter and compares it with the risk on a fresh test sample.
///
/// `γ` is the larger of the probe maximum and the constraint values at the
/// fitted and true parameters, so both lie in the constrained class.
pub fn coverage_study(study: &CoverageStudy, seed: u64) -> Result<Vec<CoverageRow>> {
    if study.replicates == 0 || study.n_test == 0 {
        return Err(Error::config("need replicates >= 1 and n_test >= 1"));
    }
    let task = &study.task;
    task.validate()?;
    (0..study.replicates)
        .into_par_iter()
        .map(|rep| {
            let rseed = derive_stream(seed, &[("replicate", rep as u64)]).next_u64();
            let u = embedding(task.dim, task.rank, rseed)?;
            let (train, z) = task.sample(&u, task.k, rseed, "train")?;
            let (test, _) = task.sample(&u, study.n_test, rseed, "test")?;
            let w = fit_latent_mle(&z, &train.y, task.family)?;
            let theta = embed(&u, &w);
            let theta_star = embed(&u, &task.latent_theta);
            let l_std = std_risk(&theta, &train, task.family)?;
            let l_test = std_risk(&theta, &test, task.family)?;
            let rho = estimate_rho(&train, task.family, &study.rho, &derive_stream(rseed, &[("rho", 0)]))?;
            let gamma = rho
                .gamma_probe_max
                .max(constraint_value(&theta, &train, task.family))
                .max(constraint_value(&theta_star, &train, task.family));
            let sm = second_moment_matrix(&train.x)?;
            let rank = numeric_rank(&sm);
            let sigma = lowest_nonzero_singular_value(&sm)?;
            let u_max = train.x.iter().map(|x| dot(&theta, x).abs()).fold(1e-12, f64::max);
            let y_max = train.y.iter().cloned().fold(0.0, f64::max);
            let consts = BoundConstants::on_box(task.family, u_max, y_max)?;
            let (c, value) = if rho.rho_hat > 0.0 && gamma > 0.0 {
                let (_, c) = radius_and_C(gamma, rho.rho_hat, sigma)?;
                let v = generalization_bound(l_std, c, rank, task.k, consts.l, consts.l_a, consts.b, study.delta)?;
                (c, v)
            } else {
                (f64::INFINITY, f64::INFINITY)
            };
            Ok(CoverageRow {
                replicate: rep,
                l_std,
                l_test,
                inputs: BoundInputs {
                    gamma,
                    rho_hat: rho.rho_hat,
                    sigma,
                    c,
                    l: consts.l,
                    l_a: consts.l_a,
                    b: consts.b,
                    delta: study.delta,
                    value,
                },
            })
        })
        .collect()
}
