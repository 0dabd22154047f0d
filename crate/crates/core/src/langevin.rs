//! Unadjusted Langevin dynamics:
//! `x ← x − (η²/2)·∇E(x) + η·ε`, `ε ~ N(0, I)`, with stride-retained iterates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::io::{artifact_base, read_json, with_suffix, write_json, FORMAT_VERSION};
use crate::numerics::{RngStream, Tensor};
use crate::synth::ldtn::{read_tensor, write_tensor, DType};
use crate::synth::store::{stack, unstack};

/// Per-step projection applied after each Langevin update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreservationHook {
    /// Overwrite one channel with the chain's starting image.
    ChannelReplace { channel: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangevinConfig {
    pub step_size: f64,
    pub n_steps: usize,
    pub store_stride: usize,
    pub store_offset: usize,
    #[serde(default)]
    pub hook: Option<PreservationHook>,
    /// Clamp iterates to [0, 1] after the hook.
    #[serde(default)]
    pub clamp: bool,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            n_steps: 40,
            store_stride: 3,
            store_offset: 3,
            hook: None,
            clamp: false,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(Error::config(format!("step size must be >= 0, got {}", self.step_size)));
        }
        if self.store_stride == 0 || self.store_offset == 0 {
            return Err(Error::config("store_stride and store_offset must be >= 1"));
        }
        Ok(())
    }

    /// `{offset, offset + stride, …} ∩ [1, K]`.
    pub fn stored_steps(&self) -> Vec<usize> {
        (self.store_offset..=self.n_steps).step_by(self.store_stride.max(1)).collect()
    }

    pub fn stored_count(&self) -> usize {
        self.stored_steps().len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRecord {
    pub x0: Tensor,
    pub stored: Vec<(usize, Tensor)>,
    pub pair: (usize, usize),
    pub rng_labels: Vec<(String, u64)>,
}

/// One Langevin update.
pub fn langevin_step(x: &Tensor, grad: &Tensor, step_size: f64, noise: &Tensor) -> Result<Tensor> {
    x.same_shape(grad)?;
    x.same_shape(noise)?;
    let mut out = x.clone();
    langevin_step_in_place(&mut out.data, &grad.data, step_size, &noise.data);
    Ok(out)
}

fn langevin_step_in_place(x: &mut [f64], grad: &[f64], step_size: f64, noise: &[f64]) {
    let drift = 0.5 * step_size * step_size;
    for ((v, g), n) in x.iter_mut().zip(grad).zip(noise) {
        *v += -drift * g + step_size * n;
    }
}

/// Replace channel `channel` of `iterate` by the same channel of `original`.
pub fn channel_replace_hook(iterate: &Tensor, original: &Tensor, channel: usize) -> Result<Tensor> {
    iterate.same_shape(original)?;
    let mut out = iterate.clone();
    channel_replace_in_place(&mut out.data, &original.data, &iterate.shape, channel)?;
    Ok(out)
}

fn channel_replace_in_place(x: &mut [f64], original: &[f64], shape: &[usize], channel: usize) -> Result<()> {
    let channels = *shape.last().unwrap_or(&1);
    if shape.len() < 3 || channel >= channels {
        return Err(Error::config(format!(
            "channel {channel} out of range for shape {shape:?}"
        )));
    }
    if channels == 1 {
        log::warn!("channel replacement on a single-channel image restores the original entirely");
    }
    for (dst, src) in x.chunks_exact_mut(channels).zip(original.chunks_exact(channels)) {
        dst[channel] = src[channel];
    }
    Ok(())
}

/// Run `config.n_steps` Langevin updates under `params`, starting at `x0`.
pub fn run_chain(
    x0: &Tensor,
    params: &EnergyParams,
    config: &LangevinConfig,
    mut rng: RngStream,
    pair: (usize, usize),
) -> Result<ChainRecord> {
    config.validate()?;
    if x0.len() != params.arch.input_len() {
        return Err(Error::dim(format!(
            "chain start has shape {:?}, energy expects {:?}",
            x0.shape, params.arch.input_shape
        )));
    }
    let rng_labels = rng.labels().to_vec();
    let mut x = x0.data.clone();
    let mut noise = vec![0.0; x.len()];
    let mut stored = Vec::with_capacity(config.stored_count());
    let mut next_store = config.store_offset;
    for step in 1..=config.n_steps {
        let eval = params.evaluate(&x, true, None).map_err(|e| match e {
            Error::Numeric(_) => Error::Divergence {
                step,
                energy: f64::NAN,
            },
            other => other,
        })?;
        let grad = eval.grad_input.expect("requested");
        rng.fill_normal(&mut noise);
        langevin_step_in_place(&mut x, &grad, config.step_size, &noise);
        if let Some(PreservationHook::ChannelReplace { channel }) = config.hook {
            channel_replace_in_place(&mut x, &x0.data, &x0.shape, channel)?;
        }
        if config.clamp {
            x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step,
                energy: eval.energy,
            });
        }
        if step == next_store {
            stored.push((
                step,
                Tensor {
                    shape: x0.shape.clone(),
                    data: x.clone(),
                },
            ));
            next_store += config.store_stride;
        }
    }
    Ok(ChainRecord {
        x0: x0.clone(),
        stored,
        pair,
        rng_labels,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainMeta {
    source_domain: usize,
    target_domain: usize,
    steps: Vec<usize>,
    config: LangevinConfig,
    rng_labels: Vec<(String, u64)>,
    format_version: u32,
}

/// Writes `<base>.ldtn` (stacked iterates), `<base>.x0.ldtn` and `<base>.meta.json`.
pub fn save_chain(record: &ChainRecord, config: &LangevinConfig, path: &Path) -> Result<()> {
    let base = artifact_base(path);
    let items: Vec<&Tensor> = record.stored.iter().map(|(_, t)| t).collect();
    write_tensor(&with_suffix(&base, ".ldtn"), &stack(&items, &record.x0.shape)?, DType::F64)?;
    write_tensor(&with_suffix(&base, ".x0.ldtn"), &record.x0, DType::F64)?;
    write_json(
        &with_suffix(&base, ".meta.json"),
        &ChainMeta {
            source_domain: record.pair.0,
            target_domain: record.pair.1,
            steps: record.stored.iter().map(|(k, _)| *k).collect(),
            config: config.clone(),
            rng_labels: record.rng_labels.clone(),
            format_version: FORMAT_VERSION,
        },
    )
}

pub fn load_chain(path: &Path) -> Result<(ChainRecord, LangevinConfig)> {
    let base = artifact_base(path);
    let meta: ChainMeta = read_json(&with_suffix(&base, ".meta.json"))?;
    let x0 = read_tensor(&with_suffix(&base, ".x0.ldtn"))?;
    let iterates = unstack(&read_tensor(&with_suffix(&base, ".ldtn"))?)?;
    if iterates.len() != meta.steps.len() {
        return Err(Error::Format(format!(
            "{} stored iterates for {} step indices",
            iterates.len(),
            meta.steps.len()
        )));
    }
    Ok((
        ChainRecord {
            x0,
            stored: meta.steps.into_iter().zip(iterates).collect(),
            pair: (meta.source_domain, meta.target_domain),
            rng_labels: meta.rng_labels,
        },
        meta.config,
    ))
}
