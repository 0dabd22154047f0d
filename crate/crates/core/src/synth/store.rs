//! Dataset persistence: LDTN payloads plus a `.meta.json` sidecar.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::domains::{DomainSpec, MultiDomainDataset, Split};
use super::glm_data::GlmVectorDataset;
use super::ldtn::{read_tensor, write_tensor, DType};
use crate::error::{Error, Result};
use crate::io::{artifact_base, read_json, with_suffix, write_json, FORMAT_VERSION};
use crate::numerics::Tensor;
use crate::theory::GlmFamily;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchmarkMeta {
    seed: u64,
    domains: Vec<DomainSpec>,
    counts: Vec<usize>,
    split: Vec<Split>,
    format_version: u32,
    #[serde(default)]
    clamp_fraction: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GlmMeta {
    seed: u64,
    family: GlmFamily,
    mu: Vec<f64>,
    sigma_mat: Vec<Vec<f64>>,
    theta_star: Vec<f64>,
    format_version: u32,
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "metadata format_version {v}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

/// Stack equally-shaped tensors along a new leading axis.
pub fn stack(items: &[&Tensor], item_shape: &[usize]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(items.len() * item_shape.iter().product::<usize>());
    for t in items {
        if t.shape != item_shape {
            return Err(Error::dim(format!("cannot stack {:?} with {:?}", t.shape, item_shape)));
        }
        data.extend_from_slice(&t.data);
    }
    let mut shape = vec![items.len()];
    shape.extend_from_slice(item_shape);
    Ok(Tensor { shape, data })
}

/// Split a stacked tensor back into its leading-axis items.
pub fn unstack(t: &Tensor) -> Result<Vec<Tensor>> {
    if t.shape.is_empty() {
        return Err(Error::dim("cannot unstack a scalar tensor"));
    }
    let item_shape = t.shape[1..].to_vec();
    let item_len: usize = item_shape.iter().product();
    if item_len == 0 {
        return Ok(vec![Tensor { shape: item_shape, data: vec![] }; t.shape[0]]);
    }
    Ok(t.data
        .chunks_exact(item_len)
        .map(|c| Tensor {
            shape: item_shape.clone(),
            data: c.to_vec(),
        })
        .collect())
}

pub fn save_benchmark(ds: &MultiDomainDataset, path: &Path) -> Result<()> {
    ds.check()?;
    let base = artifact_base(path);
    let shape = ds.image_shape();
    let mask_shape = shape.get(..2).map(<[usize]>::to_vec).unwrap_or_default();
    let imgs: Vec<&Tensor> = ds.images.iter().flatten().collect();
    let masks: Vec<&Tensor> = ds.masks.iter().flatten().collect();
    write_tensor(&with_suffix(&base, ".ldtn"), &stack(&imgs, &shape)?, DType::F64)?;
    write_tensor(&with_suffix(&base, ".mask.ldtn"), &stack(&masks, &mask_shape)?, DType::F64)?;
    write_json(
        &with_suffix(&base, ".meta.json"),
        &BenchmarkMeta {
            seed: ds.seed,
            domains: ds.specs.clone(),
            counts: ds.counts(),
            split: ds.split.clone(),
            format_version: FORMAT_VERSION,
            clamp_fraction: ds.clamp_fraction,
        },
    )
}

pub fn load_benchmark(path: &Path) -> Result<MultiDomainDataset> {
    let base = artifact_base(path);
    let meta: BenchmarkMeta = read_json(&with_suffix(&base, ".meta.json"))?;
    check_version(meta.format_version)?;
    let imgs = unstack(&read_tensor(&with_suffix(&base, ".ldtn"))?)?;
    let masks = unstack(&read_tensor(&with_suffix(&base, ".mask.ldtn"))?)?;
    let total: usize = meta.counts.iter().sum();
    if imgs.len() != total || masks.len() != total {
        return Err(Error::Format(format!(
            "metadata counts sum to {total}, payload holds {} images / {} masks",
            imgs.len(),
            masks.len()
        )));
    }
    let mut images = Vec::new();
    let mut mask_lists = Vec::new();
    let mut imgs = imgs.into_iter();
    let mut masks = masks.into_iter();
    for &c in &meta.counts {
        images.push(imgs.by_ref().take(c).collect());
        mask_lists.push(masks.by_ref().take(c).collect());
    }
    let ds = MultiDomainDataset {
        images,
        masks: mask_lists,
        specs: meta.domains,
        seed: meta.seed,
        split: meta.split,
        clamp_fraction: meta.clamp_fraction,
    };
    ds.check()?;
    Ok(ds)
}

pub fn save_glm(ds: &GlmVectorDataset, path: &Path) -> Result<()> {
    let base = artifact_base(path);
    let d = ds.dim();
    let x = Tensor {
        shape: vec![ds.k(), d],
        data: ds.x.iter().flatten().copied().collect(),
    };
    let y = Tensor {
        shape: vec![ds.k()],
        data: ds.y.clone(),
    };
    write_tensor(&with_suffix(&base, ".ldtn"), &x, DType::F64)?;
    write_tensor(&with_suffix(&base, ".y.ldtn"), &y, DType::F64)?;
    write_json(
        &with_suffix(&base, ".meta.json"),
        &GlmMeta {
            seed: ds.seed,
            family: ds.family,
            mu: ds.mu.clone(),
            sigma_mat: ds.sigma_mat.clone(),
            theta_star: ds.theta_star.clone(),
            format_version: FORMAT_VERSION,
        },
    )
}

pub fn load_glm(path: &Path) -> Result<GlmVectorDataset> {
    let base = artifact_base(path);
    let meta: GlmMeta = read_json(&with_suffix(&base, ".meta.json"))?;
    check_version(meta.format_version)?;
    let x = read_tensor(&with_suffix(&base, ".ldtn"))?;
    let y = read_tensor(&with_suffix(&base, ".y.ldtn"))?;
    if x.shape.len() != 2 || x.shape[1] != meta.mu.len() || y.shape != [x.shape[0]] {
        return Err(Error::Format(format!(
            "glm payload shapes {:?} / {:?} disagree with dimension {}",
            x.shape,
            y.shape,
            meta.mu.len()
        )));
    }
    let rows = if x.shape[1] == 0 {
        vec![vec![]; x.shape[0]]
    } else {
        x.data.chunks_exact(x.shape[1]).map(<[f64]>::to_vec).collect()
    };
    GlmVectorDataset::from_parts(rows, y.data, meta.mu, meta.sigma_mat, meta.theta_star, meta.family, meta.seed)
}
