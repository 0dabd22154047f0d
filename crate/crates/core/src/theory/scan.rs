//! Remainder scans over the noise scale β.
//!
//! The augmented risk is estimated with antithetic pairs `(ε, −ε)` and the
//! second-order Taylor polynomial in `δ = θᵀ(x̃ − x)` as a control variate,
//! whose mean is known in closed form. Noise is shared across all β values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_stream, dot, mean, ols_slope, std_error};
use crate::theory::family::{GlmFamily, POISSON_MAX_ETA};
use crate::theory::risk::{one_step_ld, reg_glm, reg_terms_general, std_risk, ScoredData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub betas: Vec<f64>,
    /// Antithetic pairs in the first round.
    pub n_mc: usize,
    /// Hard cap on pairs after adaptive doubling.
    pub n_mc_max: usize,
    /// Required `stderr / |remainder|` at every β.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            betas: vec![0.02, 0.04, 0.08, 0.16],
            n_mc: 2_000,
            n_mc_max: 256_000,
            rel_tol: 0.1,
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.betas.len() < 4 {
            return Err(Error::config("a scan needs at least 4 beta values"));
        }
        if self.betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::config("betas must be strictly positive"));
        }
        let lo = self.betas.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.betas.iter().cloned().fold(0.0, f64::max);
        if hi / lo < 8.0 - 1e-9 {
            return Err(Error::config(format!("betas span {lo}..{hi}, less than a factor of 8")));
        }
        if self.n_mc < 2 || self.n_mc_max < self.n_mc {
            return Err(Error::config("need 2 <= n_mc <= n_mc_max"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub beta: f64,
    pub l_std: f64,
    pub l_aug: f64,
    pub mc_stderr: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r_glm: f64,
    pub n_mc: usize,
}

impl ScanRow {
    pub fn rem_gen(&self) -> f64 {
        self.l_aug - self.l_std - (self.r1 + self.r2 + self.r3)
    }

    pub fn rem_glm(&self) -> f64 {
        self.l_aug - self.l_std - self.r_glm
    }

    /// Remainder if the regularizers carried `β²` instead of `β²/2`.
    pub fn rem_doubled(&self) -> f64 {
        self.l_aug - self.l_std - 2.0 * (self.r1 + self.r2 + self.r3)
    }

    fn resolved(&self, rel_tol: f64) -> bool {
        let rem = self.rem_gen().abs();
        self.mc_stderr < rel_tol * rem || (self.mc_stderr == 0.0 && rem == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanStatus {
    Conclusive,
    /// Standard errors still exceed the tolerance at `n_mc_max`.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherRow {
    pub k: usize,
    pub ambient_dim: usize,
    pub rank: usize,
    pub rho_hat: f64,
    pub gamma: f64,
    pub c: f64,
    /// Estimate at the radius implied by `(γ, ρ̂, σ)`.
    pub estimate: f64,
    pub stderr: f64,
    /// `C·√(rank/k)`.
    pub bound: f64,
    /// Estimate over the unit ball, comparable across ambient dimensions.
    pub unit_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub gamma: f64,
    pub rho_hat: f64,
    pub sigma: f64,
    pub c: f64,
    pub l: f64,
    pub l_a: f64,
    pub b: f64,
    pub delta: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub family: GlmFamily,
    pub rows: Vec<ScanRow>,
    pub slope: f64,
    /// Slope of the remainder under the doubled regularizers.
    pub slope_doubled: f64,
    /// Smallest `c` with `|rem| ≤ max(3·stderr, c·β^2.5)` at every β.
    pub fitted_c: f64,
    pub status: ScanStatus,
    #[serde(default)]
    pub rademacher: Vec<RademacherRow>,
    #[serde(default)]
    pub bound: Option<BoundInputs>,
}

pub const REPORT_CSV_HEADER: &str = "beta,l_std,l_aug,mc_stderr,R1,R2,R3,R_glm,rem_gen,rem_glm";

impl TheoryReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.beta,
                r.l_std,
                r.l_aug,
                r.mc_stderr,
                r.r1,
                r.r2,
                r.r3,
                r.r_glm,
                r.rem_gen(),
                r.rem_glm()
            ));
        }
        s
    }

    /// Compact summary: slopes, status, Rademacher rows and bound inputs.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "family": self.family,
            "slope": self.slope,
            "slope_doubled": self.slope_doubled,
            "fitted_c": self.fitted_c,
            "status": self.status,
            "n_mc": self.rows.iter().map(|r| r.n_mc).max().unwrap_or(0),
            "rademacher": self.rademacher,
            "bound": self.bound,
        })
    }

    /// `|rem| ≤ max(3·stderr, c·β^2.5)` at every β.
    pub fn decomposition_holds(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.rem_gen().abs() <= (3.0 * r.mc_stderr).max(self.fitted_c * r.beta.powf(2.5)) * (1.0 + 1e-12))
    }
}

/// Log-log slope over rows with a nonzero value; NaN if fewer than two.
pub fn loglog_slope(betas: &[f64], values: &[f64]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = betas
        .iter()
        .zip(values)
        .filter(|(_, v)| **v != 0.0 && v.is_finite())
        .map(|(b, v)| (b.ln(), v.abs().ln()))
        .unzip();
    if xs.len() < 2 {
        f64::NAN
    } else {
        ols_slope(&xs, &ys)
    }
}

/// Per-pair control-variate residuals for pairs `[start, end)`, one vector
/// per β. Each pair has its own derived stream, so extending a scan reuses
/// the earlier draws.
fn pair_residuals(
    theta: &[f64],
    data: &ScoredData,
    betas: &[f64],
    family: GlmFamily,
    seed: u64,
    start: usize,
    end: usize,
) -> Result<Vec<Vec<f64>>> {
    let d = data.dim();
    let per_pair: Vec<Result<Vec<f64>>> = (start..end)
        .into_par_iter()
        .map(|m| {
            let mut rng = derive_stream(seed, &[("taylor-scan", 0), ("pair", m as u64)]);
            let mut eps = vec![0.0; d];
            let mut neg = vec![0.0; d];
            let mut acc = vec![0.0; betas.len()];
            for (x, s) in data.x.iter().zip(&data.scores) {
                rng.fill_normal(&mut eps);
                neg.iter_mut().zip(&eps).for_each(|(n, e)| *n = -e);
                let u = dot(theta, x);
                let (a0, a1, a2) = (family.a(u), family.a1(u), family.a2(u));
                for (bi, &beta) in betas.iter().enumerate() {
                    let mut pair = 0.0;
                    for noise in [&eps, &neg] {
                        let xt = one_step_ld(x, s, beta, noise)?;
                        let ut = dot(theta, &xt);
                        if !ut.is_finite() || (family == GlmFamily::Poisson && ut > POISSON_MAX_ETA) {
                            return Err(Error::numeric(format!("perturbed natural parameter {ut} out of range")));
                        }
                        let delta = ut - u;
                        // The y-terms of the loss and of the control variate cancel.
                        pair += family.a(ut) - a0 - a1 * delta - 0.5 * a2 * delta * delta;
                    }
                    acc[bi] += 0.5 * pair;
                }
            }
            let k = data.k() as f64;
            Ok(acc.into_iter().map(|a| a / k).collect())
        })
        .collect();
    let mut out = vec![Vec::with_capacity(end - start); betas.len()];
    for p in per_pair {
        for (o, v) in out.iter_mut().zip(p?) {
            o.push(v);
        }
    }
    Ok(out)
}

/// Rows for arbitrary positive betas with exactly `n_pairs` antithetic pairs.
pub fn scan_rows(
    theta: &[f64],
    data: &ScoredData,
    betas: &[f64],
    n_pairs: usize,
    family: GlmFamily,
    seed: u64,
) -> Result<Vec<ScanRow>> {
    let resid = pair_residuals(theta, data, betas, family, seed, 0, n_pairs)?;
    rows_from(theta, data, betas, family, &resid)
}

fn rows_from(
    theta: &[f64],
    data: &ScoredData,
    betas: &[f64],
    family: GlmFamily,
    resid: &[Vec<f64>],
) -> Result<Vec<ScanRow>> {
    let l_std = std_risk(theta, data, family)?;
    let tt = dot(theta, theta);
    betas
        .iter()
        .zip(resid)
        .map(|(&beta, r)| {
            // Exact mean of the control variate: Eδ = −β²v/2, Eδ² = β²‖θ‖² + β⁴v²/4.
            let mut cv = 0.0;
            for ((x, s), &y) in data.x.iter().zip(&data.scores).zip(&data.y) {
                let u = dot(theta, x);
                let v = dot(theta, s);
                let m1 = -0.5 * beta * beta * v;
                let m2 = beta * beta * tt + m1 * m1;
                cv += (family.a1(u) - y) * m1 + 0.5 * family.a2(u) * m2;
            }
            cv /= data.k() as f64;
            let terms = reg_terms_general(theta, data, beta, family)?;
            Ok(ScanRow {
                beta,
                l_std,
                l_aug: l_std + cv + mean(r),
                mc_stderr: if r.len() > 1 { std_error(r) } else { f64::NAN },
                r1: terms.r1,
                r2: terms.r2,
                r3: terms.r3,
                r_glm: reg_glm(theta, data, beta, family)?,
                n_mc: r.len(),
            })
        })
        .collect()
}

/// Scan the Taylor remainder over `config.betas`, doubling the number of
/// pairs until every β has `stderr < rel_tol·|remainder|` or the cap is hit.
pub fn taylor_remainder_scan(
    theta: &[f64],
    data: &ScoredData,
    family: GlmFamily,
    config: &ScanConfig,
) -> Result<TheoryReport> {
    config.validate()?;
    let betas = &config.betas;
    let mut n = config.n_mc;
    let mut resid = pair_residuals(theta, data, betas, family, config.seed, 0, n)?;
    let rows = loop {
        let rows = rows_from(theta, data, betas, family, &resid)?;
        if rows.iter().all(|r| r.resolved(config.rel_tol)) || n >= config.n_mc_max {
            break rows;
        }
        let next = (2 * n).min(config.n_mc_max);
        log::info!("taylor scan: raising pairs {n} -> {next}");
        let more = pair_residuals(theta, data, betas, family, config.seed, n, next)?;
        for (r, m) in resid.iter_mut().zip(more) {
            r.extend(m);
        }
        n = next;
    };
    let status = if rows.iter().all(|r| r.resolved(config.rel_tol)) {
        ScanStatus::Conclusive
    } else {
        ScanStatus::Inconclusive
    };
    let rem: Vec<f64> = rows.iter().map(ScanRow::rem_gen).collect();
    let doubled: Vec<f64> = rows.iter().map(ScanRow::rem_doubled).collect();
    let fitted_c = rows
        .iter()
        .filter(|r| r.rem_gen().abs() > 3.0 * r.mc_stderr)
        .map(|r| r.rem_gen().abs() / r.beta.powf(2.5))
        .fold(0.0, f64::max);
    Ok(TheoryReport {
        family,
        slope: loglog_slope(betas, &rem),
        slope_doubled: loglog_slope(betas, &doubled),
        fitted_c,
        status,
        rows,
        rademacher: Vec::new(),
        bound: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::synth::{generate_vector_glm, identity};
    use crate::theory::risk::aug_risk_mc;

    fn logistic_data(k: usize, seed: u64) -> ScoredData {
        let ds = generate_vector_glm(k, &[0.0, 0.0], &identity(2), &[1.0, -1.0], GlmFamily::Logistic, seed).unwrap();
        ScoredData::from_glm(&ds)
    }

    #[test]
    fn gaussian_zero_score_remainder_vanishes() {
        let d = ScoredData::new(vec![vec![0.0]], vec![0.0], vec![vec![0.0]]).unwrap();
        let rows = scan_rows(&[1.0], &d, &[0.5], 512, GlmFamily::Gaussian, 0).unwrap();
        let r = rows[0];
        assert!((r.l_aug - 0.125).abs() < 1e-15, "{}", r.l_aug);
        assert!(r.rem_gen().abs() <= 3.0 * r.mc_stderr + 1e-15);
    }

    #[test]
    fn control_variate_agrees_with_plain_mc() {
        let d = logistic_data(20, 1);
        let th = [0.7, -0.4];
        let beta = 0.6;
        let rows = scan_rows(&th, &d, &[beta], 4096, GlmFamily::Logistic, 2).unwrap();
        let mut rng: RngStream = derive_stream(3, &[("plain", 0)]);
        let (plain, se) = aug_risk_mc(&th, &d, beta, 20_000, GlmFamily::Logistic, &mut rng).unwrap();
        let gap = (rows[0].l_aug - plain).abs();
        assert!(gap < 4.0 * (se * se + rows[0].mc_stderr.powi(2)).sqrt(), "{gap} vs {se}");
    }

    #[test]
    fn glm_and_general_remainders_differ_by_the_y_term() {
        let d = logistic_data(50, 4);
        let th = [0.5, 0.25];
        let rows = scan_rows(&th, &d, &[0.05, 0.1, 0.3], 256, GlmFamily::Logistic, 0).unwrap();
        for r in rows {
            let ysum: f64 = d.y.iter().zip(&d.scores).map(|(y, s)| y * dot(&th, s)).sum();
            let expect = r.beta * r.beta / (2.0 * d.k() as f64) * ysum;
            assert!((r.rem_glm() - r.rem_gen() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_scan_is_higher_order() {
        let d = logistic_data(200, 5);
        let rep = taylor_remainder_scan(&[1.0, -1.0], &d, GlmFamily::Logistic, &ScanConfig::default()).unwrap();
        assert_eq!(rep.status, ScanStatus::Conclusive);
        assert!(rep.slope > 2.0, "{}", rep.slope);
        assert!(rep.slope_doubled <= 2.1, "{}", rep.slope_doubled);
        assert!(rep.decomposition_holds());
        let mags: Vec<f64> = rep.rows.iter().map(|r| r.rem_gen().abs()).collect();
        assert!(mags.windows(2).all(|w| w[1] > w[0]), "{mags:?}");
        assert!(rep.to_csv().starts_with(REPORT_CSV_HEADER));
    }

    #[test]
    fn scan_preconditions() {
        let d = logistic_data(5, 0);
        let mut c = ScanConfig {
            betas: vec![0.1, 0.2, 0.3],
            ..ScanConfig::default()
        };
        assert!(taylor_remainder_scan(&[1.0, 0.0], &d, GlmFamily::Logistic, &c).is_err());
        c.betas = vec![0.1, 0.2, 0.3, 0.5];
        assert!(taylor_remainder_scan(&[1.0, 0.0], &d, GlmFamily::Logistic, &c).is_err());
        c.betas = vec![0.0, 0.2, 0.4, 0.8];
        assert!(taylor_remainder_scan(&[1.0, 0.0], &d, GlmFamily::Logistic, &c).is_err());
    }

    #[test]
    fn tiny_budget_is_inconclusive() {
        let d = logistic_data(3, 0);
        let c = ScanConfig {
            betas: vec![0.001, 0.01, 0.05, 0.1],
            n_mc: 2,
            n_mc_max: 2,
            rel_tol: 1e-9,
            ..ScanConfig::default()
        };
        let rep = taylor_remainder_scan(&[2.0, 1.0], &d, GlmFamily::Logistic, &c).unwrap();
        assert_eq!(rep.status, ScanStatus::Inconclusive);
    }
}
