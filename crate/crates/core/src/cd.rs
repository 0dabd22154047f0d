//! Contrastive-divergence training of pairwise energies.
//!
//! Each iteration draws positives from the target domain, starts short-run
//! Langevin chains at source-domain samples under the current energy, and
//! steps Adam along `mean ∇θE(pos) − mean ∇θE(neg)`. Chains restart from
//! the source domain every iteration; there is no persistent buffer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyArch, EnergyParams};
use crate::error::{Error, Result};
use crate::langevin::{run_chain, LangevinConfig};
use crate::numerics::{derive_stream, norm, AdamHyper, AdamState, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdConfig {
    pub n_iters: usize,
    pub batch_size: usize,
    /// Training-time sampler; only the final iterate of each chain is used.
    pub ld: LangevinConfig,
    pub adam: AdamHyper,
    pub base_seed: u64,
    /// Rescale the CD gradient to at most this norm.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            n_iters: 200,
            batch_size: 16,
            ld: LangevinConfig {
                step_size: 0.1,
                n_steps: 40,
                store_stride: 40,
                store_offset: 40,
                hook: None,
                clamp: false,
            },
            adam: AdamHyper::default(),
            base_seed: 0,
            grad_clip: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub cd_surrogate: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub entries: Vec<TraceEntry>,
}

impl TrainTrace {
    /// CSV with header `iter,cd_surrogate,grad_norm` (wall time excluded so
    /// reruns are byte-identical).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,cd_surrogate,grad_norm\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{:e},{:e}", e.iter, e.cd_surrogate, e.grad_norm);
        }
        s
    }
}

/// `mean ∇θE(pos) − mean ∇θE(neg)`.
pub fn cd_gradient(params: &EnergyParams, pos: &[&[f64]], neg: &[&[f64]]) -> Result<Vec<f64>> {
    Ok(cd_gradient_with_surrogate(params, pos, neg)?.0)
}

/// CD gradient together with the surrogate `mean E(pos) − mean E(neg)`.
pub fn cd_gradient_with_surrogate(
    params: &EnergyParams,
    pos: &[&[f64]],
    neg: &[&[f64]],
) -> Result<(Vec<f64>, f64)> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::config("contrastive divergence needs non-empty batches"));
    }
    // Separate accumulators so identical batches cancel exactly.
    let mut gp = vec![0.0; params.theta.len()];
    let mut gn = vec![0.0; params.theta.len()];
    let (mut ep, mut en) = (0.0, 0.0);
    let wp = 1.0 / pos.len() as f64;
    for x in pos {
        ep += wp * params.evaluate_scaled(x, false, Some(&mut gp), wp)?.energy;
    }
    let wn = 1.0 / neg.len() as f64;
    for x in neg {
        en += wn * params.evaluate_scaled(x, false, Some(&mut gn), wn)?.energy;
    }
    let g = gp.iter().zip(&gn).map(|(a, b)| a - b).collect();
    let surrogate = ep - en;
    Ok((g, surrogate))
}

fn sample_batch<'a>(pool: &[&'a Tensor], n: usize, perm: &[usize]) -> Vec<&'a Tensor> {
    perm.iter().take(n).map(|&i| pool[i]).collect()
}

fn init_seed(base_seed: u64, pair: (usize, usize)) -> u64 {
    derive_stream(base_seed, &[("init-source", pair.0 as u64), ("init-target", pair.1 as u64)]).next_u64()
}

/// Train `E_θ` so Langevin chains started in `source` land in `target`.
pub fn train_ebm(
    source: &[&Tensor],
    target: &[&Tensor],
    arch: &EnergyArch,
    config: &CdConfig,
    pair: (usize, usize),
) -> Result<(EnergyParams, TrainTrace)> {
    train_ebm_with(source, target, arch, config, pair, &mut |_| Ok(()))
}

/// State handed to the per-iteration observer, after the Adam update.
pub struct IterInfo<'a> {
    /// Number of completed iterations.
    pub completed: usize,
    pub params: &'a EnergyParams,
    /// CD gradient before clipping.
    pub grad: &'a [f64],
}

/// As [`train_ebm`], calling `observer` after every iteration (checkpoints,
/// gradient statistics).
pub fn train_ebm_with(
    source: &[&Tensor],
    target: &[&Tensor],
    arch: &EnergyArch,
    config: &CdConfig,
    pair: (usize, usize),
    observer: &mut dyn FnMut(IterInfo<'_>) -> Result<()>,
) -> Result<(EnergyParams, TrainTrace)> {
    if pair.0 == pair.1 {
        return Err(Error::config(format!("pair ({}, {}) must join distinct domains", pair.0, pair.1)));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::config("source and target domains must be non-empty"));
    }
    if config.batch_size == 0 || config.batch_size > source.len().min(target.len()) {
        return Err(Error::config(format!(
            "batch_size {} must lie in 1..={}",
            config.batch_size,
            source.len().min(target.len())
        )));
    }
    if config.ld.n_steps == 0 {
        return Err(Error::config("training chains need at least one Langevin step"));
    }
    config.ld.validate()?;
    let ld = LangevinConfig {
        store_offset: config.ld.n_steps,
        store_stride: 1,
        ..config.ld.clone()
    };

    let mut params = EnergyParams::init(arch.clone(), init_seed(config.base_seed, pair))?;
    let mut adam = AdamState::new(params.theta.len(), config.adam);
    let mut trace = TrainTrace::default();
    let pair_labels = [("cd-source", pair.0 as u64), ("cd-target", pair.1 as u64)];

    for iter in 0..config.n_iters {
        let started = Instant::now();
        let mut rng = derive_stream(
            config.base_seed,
            &[pair_labels[0], pair_labels[1], ("iter", iter as u64)],
        );
        let pos_perm = rng.permutation(target.len());
        let neg_perm = rng.permutation(source.len());
        let pos = sample_batch(target, config.batch_size, &pos_perm);
        let starts = sample_batch(source, config.batch_size, &neg_perm);

        let frozen = &params;
        let chains: Vec<Result<Tensor>> = starts
            .par_iter()
            .enumerate()
            .map(|(b, x0)| {
                let stream = rng.child("chain", b as u64);
                let rec = run_chain(x0, frozen, &ld, stream, pair)?;
                Ok(rec.stored.into_iter().last().map(|(_, x)| x).expect("final iterate stored"))
            })
            .collect();
        let mut negs = Vec::with_capacity(chains.len());
        for c in chains {
            negs.push(c.map_err(|e| Error::Training {
                iter,
                source: Box::new(e),
            })?);
        }

        let pos_refs: Vec<&[f64]> = pos.iter().map(|t| t.data.as_slice()).collect();
        let neg_refs: Vec<&[f64]> = negs.iter().map(|t| t.data.as_slice()).collect();
        let (mut grad, surrogate) = cd_gradient_with_surrogate(&params, &pos_refs, &neg_refs)
            .map_err(|e| Error::Training {
                iter,
                source: Box::new(e),
            })?;
        let gn = norm(&grad);
        if !gn.is_finite() {
            return Err(Error::Training {
                iter,
                source: Box::new(Error::numeric("non-finite CD gradient")),
            });
        }
        let raw = grad.clone();
        if let Some(cap) = config.grad_clip {
            if gn > cap {
                grad.iter_mut().for_each(|g| *g *= cap / gn);
            }
        }
        adam.update(&mut params.theta, &grad)?;
        trace.entries.push(TraceEntry {
            iter,
            cd_surrogate: surrogate,
            grad_norm: gn,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        observer(IterInfo {
            completed: iter + 1,
            params: &params,
            grad: &raw,
        })?;
    }
    Ok((params, trace))
}

/// One trained energy per ordered pair of distinct domains.
pub type PairModels = BTreeMap<(usize, usize), (EnergyParams, TrainTrace)>;

/// Train all `n(n−1)` ordered pairs. `domains` lists `(domain id, samples)`.
pub fn train_all_pairs(
    domains: &[(usize, Vec<&Tensor>)],
    arch: &EnergyArch,
    config: &CdConfig,
) -> Result<PairModels> {
    if domains.len() < 2 {
        return Err(Error::config(format!("need at least 2 domains, got {}", domains.len())));
    }
    let mut jobs = Vec::new();
    for (a, (i, _)) in domains.iter().enumerate() {
        for (b, (j, _)) in domains.iter().enumerate() {
            if a != b {
                jobs.push((a, b, *i, *j));
            }
        }
    }
    let results: Vec<Result<((usize, usize), (EnergyParams, TrainTrace))>> = jobs
        .par_iter()
        .map(|&(a, b, i, j)| {
            train_ebm(&domains[a].1, &domains[b].1, arch, config, (i, j))
                .map(|r| ((i, j), r))
                .map_err(|e| Error::Pair {
                    i,
                    j,
                    source: Box::new(e),
                })
        })
        .collect();
    results.into_iter().collect()
}
