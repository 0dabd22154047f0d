//! Langevin augmentation: run every ordered-pair energy from every training
//! sample of its source domain and keep the stride-retained iterates, each
//! paired with the origin's mask and tagged `(i, j, k)`.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json, FORMAT_VERSION};
use crate::langevin::{run_chain, LangevinConfig, PreservationHook};
use crate::numerics::{derive_stream, Tensor};
use crate::synth::ldtn::{read_tensor, write_tensor, DType};
use crate::synth::store::{stack, unstack};
use crate::synth::MultiDomainDataset;

#[derive(Clone, Debug, PartialEq)]
pub struct AugEntry {
    pub image: Tensor,
    pub mask: Tensor,
    pub source: usize,
    pub target: usize,
    pub step: usize,
    pub origin: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// `"i->j"` → checksum of the energy parameters used.
    pub ebm_checksums: BTreeMap<String, String>,
    pub langevin: Option<LangevinConfig>,
    pub base_seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentedDataset {
    pub entries: Vec<AugEntry>,
    pub provenance: Provenance,
    /// Chains dropped after diverging.
    pub skipped_chains: usize,
}

impl AugmentedDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry counts per `(i, j, k)`.
    pub fn counts(&self) -> BTreeMap<(usize, usize, usize), usize> {
        let mut c = BTreeMap::new();
        for e in &self.entries {
            *c.entry((e.source, e.target, e.step)).or_insert(0) += 1;
        }
        c
    }

    /// Fails if any entry touches `held_out` as source or target.
    pub fn audit_no_leakage(&self, held_out: usize) -> Result<()> {
        if let Some(e) = self.entries.iter().find(|e| e.source == held_out || e.target == held_out) {
            return Err(Error::config(format!(
                "augmentation leaks held-out domain {held_out}: entry ({}, {}, {})",
                e.source, e.target, e.step
            )));
        }
        Ok(())
    }
}

/// The channel hook is only used for multi-channel images.
pub fn default_hook_for(channels: usize) -> Option<PreservationHook> {
    (channels > 1).then_some(PreservationHook::ChannelReplace { channel: 0 })
}

fn pair_key(i: usize, j: usize) -> String {
    format!("{i}->{j}")
}

/// Augment from the training split of every domain in `sources`, using the
/// energy for each ordered pair among them.
pub fn generate_augmented(
    data: &MultiDomainDataset,
    sources: &[usize],
    ebms: &BTreeMap<(usize, usize), EnergyParams>,
    config: &LangevinConfig,
    base_seed: u64,
) -> Result<AugmentedDataset> {
    config.validate()?;
    let mut jobs = Vec::new();
    let mut checksums = BTreeMap::new();
    for &i in sources {
        if i >= data.n_domains() {
            return Err(Error::config(format!("source domain {i} not in dataset")));
        }
        for &j in sources {
            if i == j {
                continue;
            }
            let params = ebms
                .get(&(i, j))
                .ok_or_else(|| Error::config(format!("no energy model for pair ({i}, {j})")))?;
            checksums.insert(pair_key(i, j), params.checksum());
            for &origin in &data.split[i].train {
                jobs.push((i, j, origin, params));
            }
        }
    }

    let chains: Vec<Result<Option<Vec<AugEntry>>>> = jobs
        .par_iter()
        .map(|&(i, j, origin, params)| {
            let rng = derive_stream(
                base_seed,
                &[
                    ("augment-source", i as u64),
                    ("augment-target", j as u64),
                    ("sample", origin as u64),
                ],
            );
            match run_chain(&data.images[i][origin], params, config, rng, (i, j)) {
                Ok(rec) => Ok(Some(
                    rec.stored
                        .into_iter()
                        .map(|(step, image)| AugEntry {
                            image,
                            mask: data.masks[i][origin].clone(),
                            source: i,
                            target: j,
                            step,
                            origin,
                        })
                        .collect(),
                )),
                Err(e) if e.is_divergence() => {
                    log::warn!("chain ({i}->{j}, sample {origin}) diverged: {e}");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut out = AugmentedDataset {
        entries: Vec::new(),
        provenance: Provenance {
            ebm_checksums: checksums,
            langevin: Some(config.clone()),
            base_seed,
        },
        skipped_chains: 0,
    };
    for c in chains {
        match c? {
            Some(entries) => out.entries.extend(entries),
            None => out.skipped_chains += 1,
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamItem {
    /// Index into the flattened source pool.
    Source(usize),
    /// Index into the augmented entries.
    Aug(usize),
}

/// One epoch of shuffled mini-batches mixing source and Langevin data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingStream {
    pub batches: Vec<Vec<StreamItem>>,
}

impl TrainingStream {
    pub fn flatten(&self) -> Vec<StreamItem> {
        self.batches.iter().flatten().copied().collect()
    }
}

/// Shuffle `n_src` source and `n_aug` augmented indices into batches of
/// `batch_size`, `round(mix_ratio · batch_size)` of them augmented. The
/// source part of an epoch is a permutation of the source pool; augmented
/// indices are drawn from a fresh permutation, cycled if needed.
pub fn assemble_training_stream(
    n_src: usize,
    n_aug: usize,
    mix_ratio: f64,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<TrainingStream> {
    if !(0.0..=1.0).contains(&mix_ratio) {
        return Err(Error::config(format!("mix_ratio {mix_ratio} outside [0, 1]")));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    if mix_ratio > 0.0 && n_aug == 0 {
        return Err(Error::config("mix_ratio > 0 but the augmented set is empty"));
    }
    let mut rng = derive_stream(seed, &[("stream", 0), ("epoch", epoch as u64)]);
    let src_perm = rng.permutation(n_src);
    let aug_perm = rng.permutation(n_aug);
    let aug_per_batch = if mix_ratio > 0.0 {
        ((mix_ratio * batch_size as f64).round() as usize).clamp(1, batch_size)
    } else {
        0
    };
    let src_per_batch = batch_size - aug_per_batch;
    let mut batches = Vec::new();
    let mut aug_cursor = 0;
    let mut next_aug = |count: usize, batch: &mut Vec<StreamItem>| {
        for _ in 0..count {
            batch.push(StreamItem::Aug(aug_perm[aug_cursor % n_aug]));
            aug_cursor += 1;
        }
    };
    if src_per_batch == 0 {
        let n_batches = n_aug.div_ceil(batch_size);
        for b in 0..n_batches {
            let mut batch = Vec::with_capacity(batch_size);
            next_aug(batch_size.min(n_aug - b * batch_size), &mut batch);
            batches.push(batch);
        }
    } else {
        for chunk in src_perm.chunks(src_per_batch) {
            let mut batch: Vec<StreamItem> = chunk.iter().map(|&i| StreamItem::Source(i)).collect();
            let n = if chunk.len() == src_per_batch {
                aug_per_batch
            } else {
                (chunk.len() as f64 * aug_per_batch as f64 / src_per_batch as f64).round() as usize
            };
            next_aug(n, &mut batch);
            // Interleave so batch order carries no source/augmented structure.
            let order = rng.permutation(batch.len());
            batches.push(order.into_iter().map(|k| batch[k]).collect());
        }
    }
    Ok(TrainingStream { batches })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairManifest {
    source: usize,
    target: usize,
    file: String,
    steps: Vec<usize>,
    origins: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountRow {
    source: usize,
    target: usize,
    step: usize,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AugManifest {
    pairs: Vec<PairManifest>,
    counts: Vec<CountRow>,
    provenance: Provenance,
    skipped_chains: usize,
    format_version: u32,
}

pub const AUG_MANIFEST: &str = "augmented.meta.json";

/// Writes one LDTN stack per `(i, j)` plus `augmented.meta.json` in `dir`.
pub fn save_augmented(aug: &AugmentedDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut groups: BTreeMap<(usize, usize), Vec<&AugEntry>> = BTreeMap::new();
    for e in &aug.entries {
        groups.entry((e.source, e.target)).or_default().push(e);
    }
    let mut pairs = Vec::new();
    for ((i, j), entries) in &groups {
        let file = format!("aug_{i}_{j}");
        let imgs: Vec<&Tensor> = entries.iter().map(|e| &e.image).collect();
        let masks: Vec<&Tensor> = entries.iter().map(|e| &e.mask).collect();
        write_tensor(&dir.join(format!("{file}.ldtn")), &stack(&imgs, &entries[0].image.shape)?, DType::F64)?;
        write_tensor(&dir.join(format!("{file}.mask.ldtn")), &stack(&masks, &entries[0].mask.shape)?, DType::F64)?;
        pairs.push(PairManifest {
            source: *i,
            target: *j,
            file,
            steps: entries.iter().map(|e| e.step).collect(),
            origins: entries.iter().map(|e| e.origin).collect(),
        });
    }
    let counts = aug
        .counts()
        .into_iter()
        .map(|((source, target, step), count)| CountRow {
            source,
            target,
            step,
            count,
        })
        .collect();
    write_json(
        &dir.join(AUG_MANIFEST),
        &AugManifest {
            pairs,
            counts,
            provenance: aug.provenance.clone(),
            skipped_chains: aug.skipped_chains,
            format_version: FORMAT_VERSION,
        },
    )
}

pub fn load_augmented(dir: &Path) -> Result<AugmentedDataset> {
    let manifest: AugManifest = read_json(&dir.join(AUG_MANIFEST))?;
    let mut entries = Vec::new();
    for p in &manifest.pairs {
        let imgs = unstack(&read_tensor(&dir.join(format!("{}.ldtn", p.file)))?)?;
        let masks = unstack(&read_tensor(&dir.join(format!("{}.mask.ldtn", p.file)))?)?;
        if imgs.len() != p.steps.len() || masks.len() != p.steps.len() || p.origins.len() != p.steps.len() {
            return Err(Error::Format(format!("manifest and payload disagree for {}", p.file)));
        }
        for (((image, mask), &step), &origin) in imgs.into_iter().zip(masks).zip(&p.steps).zip(&p.origins) {
            entries.push(AugEntry {
                image,
                mask,
                source: p.source,
                target: p.target,
                step,
                origin,
            });
        }
    }
    Ok(AugmentedDataset {
        entries,
        provenance: manifest.provenance,
        skipped_chains: manifest.skipped_chains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyArch;
    use crate::synth::{generate_benchmark, BenchmarkConfig};
    use std::collections::HashSet;

    fn small_bench(n_domains: usize, n: usize) -> MultiDomainDataset {
        generate_benchmark(&BenchmarkConfig {
            n_domains,
            n_per_domain: n,
            image_size: 8,
            specs: crate::synth::default_specs()[..n_domains].to_vec(),
            test_fraction: 0.0,
            seed: 2,
            ..BenchmarkConfig::default()
        })
        .unwrap()
    }

    fn quad_ebms(ds: &MultiDomainDataset, sources: &[usize]) -> BTreeMap<(usize, usize), EnergyParams> {
        let arch = EnergyArch::quadratic(&ds.image_shape());
        let mut m = BTreeMap::new();
        for &i in sources {
            for &j in sources {
                if i != j {
                    m.insert((i, j), EnergyParams::new(arch.clone(), vec![0.1 * j as f64; arch.param_count()]).unwrap());
                }
            }
        }
        m
    }

    #[test]
    fn cardinality_and_label_retention() {
        let ds = small_bench(3, 10);
        let ebms = quad_ebms(&ds, &[0, 1, 2]);
        let cfg = LangevinConfig {
            step_size: 0.1,
            n_steps: 15,
            store_stride: 3,
            store_offset: 3,
            ..LangevinConfig::default()
        };
        let aug = generate_augmented(&ds, &[0, 1, 2], &ebms, &cfg, 1).unwrap();
        assert_eq!(cfg.stored_count(), 5);
        assert_eq!(aug.len(), 6 * 10 * 5);
        for e in &aug.entries {
            assert_eq!(e.mask, ds.masks[e.source][e.origin]);
            assert!(cfg.stored_steps().contains(&e.step));
            assert_ne!(e.source, e.target);
        }
        assert_eq!(aug, generate_augmented(&ds, &[0, 1, 2], &ebms, &cfg, 1).unwrap());
    }

    #[test]
    fn missing_pair_is_named() {
        let ds = small_bench(3, 4);
        let mut ebms = quad_ebms(&ds, &[0, 1, 2]);
        ebms.remove(&(2, 1));
        let err = generate_augmented(&ds, &[0, 1, 2], &ebms, &LangevinConfig::default(), 0).unwrap_err();
        assert!(err.to_string().contains("(2, 1)"), "{err}");
    }

    #[test]
    fn displacement_grows_with_step_under_quadratic_energy() {
        let ds = small_bench(2, 20);
        let arch = EnergyArch::quadratic(&ds.image_shape());
        let mut ebms = BTreeMap::new();
        ebms.insert((0, 1), EnergyParams::new(arch.clone(), vec![2.0; arch.param_count()]).unwrap());
        ebms.insert((1, 0), EnergyParams::new(arch.clone(), vec![-2.0; arch.param_count()]).unwrap());
        let cfg = LangevinConfig {
            step_size: 0.2,
            n_steps: 40,
            store_stride: 5,
            store_offset: 5,
            ..LangevinConfig::default()
        };
        let aug = generate_augmented(&ds, &[0, 1], &ebms, &cfg, 3).unwrap();
        let steps = cfg.stored_steps();
        let mut disp = Vec::new();
        for &k in &steps {
            let d: Vec<f64> = aug
                .entries
                .iter()
                .filter(|e| e.step == k)
                .map(|e| {
                    let o = &ds.images[e.source][e.origin];
                    e.image.data.iter().zip(&o.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                })
                .collect();
            disp.push(crate::numerics::mean(&d));
        }
        assert!(disp.windows(2).all(|w| w[1] > w[0]), "{disp:?}");
    }

    #[test]
    fn leakage_audit() {
        let ds = small_bench(3, 3);
        let ebms = quad_ebms(&ds, &[0, 1]);
        let cfg = LangevinConfig {
            step_size: 0.1,
            n_steps: 3,
            ..LangevinConfig::default()
        };
        let aug = generate_augmented(&ds, &[0, 1], &ebms, &cfg, 0).unwrap();
        aug.audit_no_leakage(2).unwrap();
        assert!(aug.audit_no_leakage(1).is_err());
    }

    #[test]
    fn stream_without_augmentation_is_permutation() {
        let s = assemble_training_stream(37, 0, 0.0, 8, 4, 0).unwrap();
        let mut idx: Vec<usize> = s
            .flatten()
            .into_iter()
            .map(|i| match i {
                StreamItem::Source(k) => k,
                StreamItem::Aug(_) => panic!("unexpected augmented item"),
            })
            .collect();
        idx.sort_unstable();
        assert_eq!(idx, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn half_mixed_batches() {
        let s = assemble_training_stream(40, 100, 0.5, 8, 4, 1).unwrap();
        assert_eq!(s.batches.len(), 10);
        for b in &s.batches {
            assert_eq!(b.iter().filter(|i| matches!(i, StreamItem::Aug(_))).count(), 4);
        }
        let augs: HashSet<_> = s.flatten().into_iter().filter(|i| matches!(i, StreamItem::Aug(_))).collect();
        assert_eq!(augs.len(), 40);
        assert_eq!(s, assemble_training_stream(40, 100, 0.5, 8, 4, 1).unwrap());
        assert_ne!(s, assemble_training_stream(40, 100, 0.5, 8, 4, 2).unwrap());
    }

    #[test]
    fn stream_errors() {
        assert!(assemble_training_stream(10, 0, 0.5, 8, 0, 0).is_err());
        assert!(assemble_training_stream(10, 5, 1.5, 8, 0, 0).is_err());
        let all_aug = assemble_training_stream(10, 20, 1.0, 8, 0, 0).unwrap();
        assert_eq!(all_aug.flatten().len(), 20);
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small_bench(2, 4);
        let ebms = quad_ebms(&ds, &[0, 1]);
        let cfg = LangevinConfig {
            step_size: 0.1,
            n_steps: 6,
            ..LangevinConfig::default()
        };
        let aug = generate_augmented(&ds, &[0, 1], &ebms, &cfg, 0).unwrap();
        save_augmented(&aug, dir.path()).unwrap();
        assert_eq!(load_augmented(dir.path()).unwrap(), aug);
    }
}
