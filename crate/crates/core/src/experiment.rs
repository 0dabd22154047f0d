//! End-to-end domain generalization runs: pairwise energies on the training
//! splits, per-fold augmentation and the leave-one-out segmentation table.

use std::collections::BTreeMap;

use crate::cd::{train_all_pairs, CdConfig, PairModels};
use crate::energy::{EnergyArch, EnergyParams};
use crate::error::Result;
use crate::langevin::LangevinConfig;
use crate::pipeline::generate_augmented;
use crate::seg::{leave_one_out_eval, EvalResult, LooConfig};
use crate::synth::MultiDomainDataset;

/// Train every ordered pair among `domains` on their training splits.
pub fn train_domain_ebms(
    data: &MultiDomainDataset,
    domains: &[usize],
    arch: &EnergyArch,
    config: &CdConfig,
) -> Result<PairModels> {
    let pools: Vec<(usize, Vec<_>)> = domains.iter().map(|&d| (d, data.train_images(d))).collect();
    train_all_pairs(&pools, arch, config)
}

pub fn params_only(models: &PairModels) -> BTreeMap<(usize, usize), EnergyParams> {
    models.iter().map(|(k, (p, _))| (*k, p.clone())).collect()
}

/// Leave-one-out table with augmentation rebuilt from the source domains of
/// each fold.
pub fn run_dg_experiment(
    data: &MultiDomainDataset,
    ebms: &BTreeMap<(usize, usize), EnergyParams>,
    langevin: &LangevinConfig,
    loo: &LooConfig,
    base_seed: u64,
    config_checksum: &str,
) -> Result<Vec<EvalResult>> {
    leave_one_out_eval(
        data,
        |_, sources| generate_augmented(data, sources, ebms, langevin, base_seed),
        loo,
        config_checksum,
    )
}
