//! Mini-batch Adam training of the segmenter and the leave-one-out protocol.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mean, AdamHyper, AdamState, Tensor};
use crate::pipeline::{assemble_training_stream, AugmentedDataset, StreamItem};
use crate::seg::metrics::{dice, iou};
use crate::seg::model::{predict_mask, SegArch, SegModel};
use crate::synth::MultiDomainDataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of each batch drawn from augmented data when any is given.
    pub mix_ratio: f64,
    pub adam: AdamHyper,
    pub threshold: f64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            mix_ratio: 0.5,
            adam: AdamHyper {
                lr: 1e-2,
                ..AdamHyper::default()
            },
            threshold: 0.5,
        }
    }
}

/// `(image, mask)` pairs.
pub type Pool<'a> = Vec<(&'a Tensor, &'a Tensor)>;

/// Train from `init` over source samples and (optionally) augmented samples.
pub fn train_segmenter(
    init: SegModel,
    source: &[(&Tensor, &Tensor)],
    augmented: &[(&Tensor, &Tensor)],
    config: &SegTrainConfig,
    seed: u64,
) -> Result<SegModel> {
    if source.is_empty() && augmented.is_empty() {
        return Err(Error::config("segmenter training stream is empty"));
    }
    let mix = if augmented.is_empty() { 0.0 } else { config.mix_ratio };
    let mut model = init;
    let mut state = AdamState::new(model.theta.len(), config.adam);
    let mut batch_id = 0;
    for epoch in 0..config.epochs {
        let stream = assemble_training_stream(source.len(), augmented.len(), mix, config.batch_size, seed, epoch)?;
        for batch in &stream.batches {
            let weight = 1.0 / batch.len() as f64;
            let mut grad = vec![0.0; model.theta.len()];
            let mut loss = 0.0;
            for item in batch {
                let (img, mask) = match *item {
                    StreamItem::Source(i) => source[i],
                    StreamItem::Aug(i) => augmented[i],
                };
                loss += model
                    .loss_and_grad(img, mask, Some((&mut grad, weight)))
                    .map_err(|e| Error::Training {
                        iter: batch_id,
                        source: Box::new(e),
                    })?;
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    iter: batch_id,
                    source: Box::new(Error::numeric("non-finite loss or gradient")),
                });
            }
            state.update(&mut model.theta, &grad)?;
            batch_id += 1;
        }
    }
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "erm")]
    Erm,
    #[serde(rename = "erm+langdaug")]
    LangDaug,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::LangDaug => "erm+langdaug",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Held-out domain.
    pub fold: usize,
    pub method: Method,
    pub seed: u64,
    pub dice: Vec<f64>,
    pub iou: Vec<f64>,
    pub mean_dice: f64,
    pub mean_iou: f64,
    pub config_checksum: String,
}

pub fn evaluate(model: &SegModel, images: &[Tensor], masks: &[Tensor], threshold: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut d = Vec::with_capacity(images.len());
    let mut j = Vec::with_capacity(images.len());
    for (img, m) in images.iter().zip(masks) {
        let pred = predict_mask(model, img, threshold)?;
        d.push(dice(&pred, m)?);
        j.push(iou(&pred, m)?);
    }
    Ok((d, j))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LooConfig {
    pub seeds: Vec<u64>,
    pub seg: SegTrainConfig,
    /// Also train with augmentation; when false only ERM rows are produced.
    #[serde(default = "yes")]
    pub with_augmentation: bool,
}

fn yes() -> bool {
    true
}

impl Default for LooConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            seg: SegTrainConfig::default(),
            with_augmentation: true,
        }
    }
}

pub const RESULTS_CSV_HEADER: &str = "fold,method,seed,mean_dice,mean_iou";

pub fn results_csv(results: &[EvalResult]) -> String {
    let mut s = String::from(RESULTS_CSV_HEADER);
    s.push('\n');
    for r in results {
        s.push_str(&format!("{},{},{},{},{}\n", r.fold, r.method.name(), r.seed, r.mean_dice, r.mean_iou));
    }
    s
}

/// Per-sample rows: `fold,method,seed,sample,dice,iou`.
pub fn per_sample_csv(results: &[EvalResult]) -> String {
    let mut s = String::from("fold,method,seed,sample,dice,iou\n");
    for r in results {
        for (i, (d, j)) in r.dice.iter().zip(&r.iou).enumerate() {
            s.push_str(&format!("{},{},{},{i},{d},{j}\n", r.fold, r.method.name(), r.seed));
        }
    }
    s
}

/// Mean Dice per method over all folds and seeds.
pub fn mean_dice_by_method(results: &[EvalResult]) -> BTreeMap<Method, f64> {
    let mut groups: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for r in results {
        groups.entry(r.method).or_default().push(r.mean_dice);
    }
    groups.into_iter().map(|(m, v)| (m, mean(&v))).collect()
}

/// Leave-one-out evaluation. For each held-out domain `t`, `build_aug(t,
/// sources)` must produce augmentation from the source domains only; any
/// entry touching `t` is a hard error. Training uses the train split of each
/// source domain; evaluation uses every sample of `t`.
pub fn leave_one_out_eval<F>(
    data: &MultiDomainDataset,
    build_aug: F,
    config: &LooConfig,
    config_checksum: &str,
) -> Result<Vec<EvalResult>>
where
    F: Fn(usize, &[usize]) -> Result<AugmentedDataset> + Sync,
{
    let n = data.n_domains();
    if n < 3 {
        return Err(Error::config(format!("leave-one-out needs >= 3 domains, got {n}")));
    }
    if config.seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    let arch = SegArch::new(&data.image_shape())?;
    let folds: Vec<(usize, Vec<usize>, Option<AugmentedDataset>)> = (0..n)
        .map(|t| {
            let sources: Vec<usize> = (0..n).filter(|&d| d != t).collect();
            let aug = if config.with_augmentation {
                let aug = build_aug(t, &sources)?;
                aug.audit_no_leakage(t)?;
                Some(aug)
            } else {
                None
            };
            Ok((t, sources, aug))
        })
        .collect::<Result<_>>()?;
    let mut methods = vec![Method::Erm];
    if config.with_augmentation {
        methods.push(Method::LangDaug);
    }
    let jobs: Vec<(usize, Method, u64)> = folds
        .iter()
        .flat_map(|(t, _, _)| {
            methods
                .iter()
                .flat_map(move |&m| config.seeds.iter().map(move |&s| (*t, m, s)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(t, method, seed)| {
            let (_, sources, aug) = &folds[t];
            let source: Pool = sources
                .iter()
                .flat_map(|&d| data.split[d].train.iter().map(move |&i| (&data.images[d][i], &data.masks[d][i])))
                .collect();
            let augmented: Pool = match (method, aug) {
                (Method::LangDaug, Some(a)) => a.entries.iter().map(|e| (&e.image, &e.mask)).collect(),
                _ => Vec::new(),
            };
            // Both arms of a fold share the initialization and stream seed.
            let init_seed = crate::numerics::derive_stream(seed, &[("seg-fold", t as u64)]).next_u64();
            let model = train_segmenter(SegModel::init(arch.clone(), init_seed), &source, &augmented, &config.seg, init_seed)?;
            let (d, j) = evaluate(&model, &data.images[t], &data.masks[t], config.seg.threshold)?;
            Ok(EvalResult {
                fold: t,
                method,
                seed,
                mean_dice: mean(&d),
                mean_iou: mean(&j),
                dice: d,
                iou: j,
                config_checksum: config_checksum.to_string(),
            })
        })
        .collect()
}
