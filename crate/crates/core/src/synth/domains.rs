//! Multi-domain toy segmentation benchmark.
//!
//! Every sample is an ellipse mask rendered with foreground and background
//! intensities, then pushed through its domain's appearance transform:
//! gamma, contrast about mid-grey, one oriented sinusoid, additive noise.
//! Geometry depends only on `(seed, domain slot, sample index)`, never on
//! the domain spec, so a shift in appearance never moves a label.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_stream, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub domain_id: usize,
    pub gamma: f64,
    pub contrast: f64,
    /// Cycles per image.
    pub texture_freq: f64,
    pub texture_amp: f64,
    pub noise_sigma: f64,
}

impl DomainSpec {
    pub fn identity(domain_id: usize) -> Self {
        Self {
            domain_id,
            gamma: 1.0,
            contrast: 1.0,
            texture_freq: 1.0,
            texture_amp: 0.0,
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self, image_size: usize) -> Result<()> {
        if !(self.gamma > 0.0) || !(self.contrast > 0.0) {
            return Err(Error::config(format!(
                "domain {}: gamma and contrast must be > 0",
                self.domain_id
            )));
        }
        if self.texture_freq < 0.0 || self.texture_freq > image_size as f64 / 2.0 {
            return Err(Error::config(format!(
                "domain {}: texture_freq {} outside [0, {}]",
                self.domain_id,
                self.texture_freq,
                image_size / 2
            )));
        }
        if self.texture_amp < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::config(format!(
                "domain {}: texture_amp and noise_sigma must be >= 0",
                self.domain_id
            )));
        }
        Ok(())
    }
}

/// Four domains with distinct gamma and texture, used as the default toy benchmark.
pub fn default_specs() -> Vec<DomainSpec> {
    let gammas = [0.6, 0.9, 1.2, 1.6];
    let contrast = [1.0, 0.85, 1.1, 0.9];
    let freq = [2.0, 3.0, 1.5, 2.5];
    let amp = [0.05, 0.08, 0.04, 0.06];
    let noise = [0.03, 0.02, 0.04, 0.03];
    (0..4)
        .map(|d| DomainSpec {
            domain_id: d,
            gamma: gammas[d],
            contrast: contrast[d],
            texture_freq: freq[d],
            texture_amp: amp[d],
            noise_sigma: noise[d],
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub n_domains: usize,
    pub n_per_domain: usize,
    pub image_size: usize,
    pub channels: usize,
    pub specs: Vec<DomainSpec>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_domains: 4,
            n_per_domain: 50,
            image_size: 16,
            channels: 1,
            specs: default_specs(),
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiDomainDataset {
    /// `images[d][i]` has shape `[H, W, C]`, values in [0, 1].
    pub images: Vec<Vec<Tensor>>,
    /// `masks[d][i]` has shape `[H, W]`, values in {0, 1}.
    pub masks: Vec<Vec<Tensor>>,
    pub specs: Vec<DomainSpec>,
    pub seed: u64,
    pub split: Vec<Split>,
    /// Fraction of pixels clamped into [0, 1] during generation.
    pub clamp_fraction: f64,
}

impl MultiDomainDataset {
    pub fn n_domains(&self) -> usize {
        self.images.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.images.iter().map(Vec::len).collect()
    }

    pub fn image_shape(&self) -> Vec<usize> {
        self.images
            .iter()
            .flatten()
            .next()
            .map(|t| t.shape.clone())
            .unwrap_or_default()
    }

    pub fn check(&self) -> Result<()> {
        if self.masks.len() != self.images.len() || self.split.len() != self.images.len() {
            return Err(Error::config("per-domain lists disagree in length"));
        }
        for (d, (imgs, masks)) in self.images.iter().zip(&self.masks).enumerate() {
            if imgs.len() != masks.len() {
                return Err(Error::config(format!("domain {d}: image/mask count mismatch")));
            }
            for (img, mask) in imgs.iter().zip(masks) {
                if img.shape.len() != 3 || mask.shape[..] != img.shape[..2] {
                    return Err(Error::dim(format!(
                        "domain {d}: image {:?} vs mask {:?}",
                        img.shape, mask.shape
                    )));
                }
                if mask.data.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::config(format!("domain {d}: non-binary mask")));
                }
            }
        }
        Ok(())
    }

    /// Keep only the listed domains (renumbered densely, specs retain their ids).
    pub fn subset(&self, domains: &[usize]) -> MultiDomainDataset {
        MultiDomainDataset {
            images: domains.iter().map(|&d| self.images[d].clone()).collect(),
            masks: domains.iter().map(|&d| self.masks[d].clone()).collect(),
            specs: domains.iter().map(|&d| self.specs[d].clone()).collect(),
            seed: self.seed,
            split: domains.iter().map(|&d| self.split[d].clone()).collect(),
            clamp_fraction: self.clamp_fraction,
        }
    }

    /// Training images of one domain, in split order.
    pub fn train_images(&self, d: usize) -> Vec<&Tensor> {
        self.split[d].train.iter().map(|&i| &self.images[d][i]).collect()
    }
}

struct Geometry {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    angle: f64,
    fg: f64,
    bg: f64,
}

fn draw_geometry(seed: u64, slot: usize, index: usize, size: usize) -> Geometry {
    let mut rng = derive_stream(
        seed,
        &[("benchmark", 0), ("domain_slot", slot as u64), ("geometry", index as u64)],
    );
    let s = size as f64;
    Geometry {
        cy: rng.uniform_range(0.3 * s, 0.7 * s),
        cx: rng.uniform_range(0.3 * s, 0.7 * s),
        a: rng.uniform_range(0.15 * s, 0.32 * s),
        b: rng.uniform_range(0.1 * s, 0.22 * s),
        angle: rng.uniform_range(0.0, std::f64::consts::PI),
        fg: rng.uniform_range(0.6, 0.72),
        bg: rng.uniform_range(0.25, 0.37),
    }
}

fn render_mask(g: &Geometry, size: usize) -> Tensor {
    let (sin, cos) = g.angle.sin_cos();
    let mut data = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            let dy = y as f64 + 0.5 - g.cy;
            let dx = x as f64 + 0.5 - g.cx;
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            if (u / g.a).powi(2) + (v / g.b).powi(2) <= 1.0 {
                data[y * size + x] = 1.0;
            }
        }
    }
    Tensor {
        shape: vec![size, size],
        data,
    }
}

/// Base rendering before any domain transform.
pub fn base_image(mask: &Tensor, fg: f64, bg: f64, channels: usize) -> Tensor {
    let size = mask.shape[0];
    let mut data = Vec::with_capacity(mask.len() * channels);
    for &m in &mask.data {
        let v = if m > 0.5 { fg } else { bg };
        for c in 0..channels {
            data.push(v * (1.0 - 0.15 * c as f64));
        }
    }
    Tensor {
        shape: vec![size, size, channels],
        data,
    }
}

/// Returns the transformed image and the number of clamped values.
fn apply_domain(
    base: &Tensor,
    spec: &DomainSpec,
    seed: u64,
    slot: usize,
    index: usize,
) -> (Tensor, usize) {
    let size = base.shape[0];
    let channels = base.shape[2];
    let mut rng = derive_stream(
        seed,
        &[("benchmark", 0), ("domain_slot", slot as u64), ("appearance", index as u64)],
    );
    let orient = rng.uniform_range(0.0, std::f64::consts::PI);
    let phase = rng.uniform_range(0.0, 2.0 * std::f64::consts::PI);
    let (so, co) = orient.sin_cos();
    let mut clamped = 0;
    let mut data = Vec::with_capacity(base.len());
    for y in 0..size {
        for x in 0..size {
            let wave = if spec.texture_amp > 0.0 {
                let t = (x as f64 * co + y as f64 * so) / size as f64;
                spec.texture_amp * (2.0 * std::f64::consts::PI * spec.texture_freq * t + phase).sin()
            } else {
                0.0
            };
            for c in 0..channels {
                let b = base.data[(y * size + x) * channels + c];
                let mut v = b.powf(spec.gamma);
                v = 0.5 + spec.contrast * (v - 0.5) + wave;
                if spec.noise_sigma > 0.0 {
                    v += spec.noise_sigma * rng.normal();
                }
                if !(0.0..=1.0).contains(&v) {
                    clamped += 1;
                    v = v.clamp(0.0, 1.0);
                }
                data.push(v);
            }
        }
    }
    (
        Tensor {
            shape: base.shape.clone(),
            data,
        },
        clamped,
    )
}

pub fn generate_benchmark(config: &BenchmarkConfig) -> Result<MultiDomainDataset> {
    let BenchmarkConfig {
        n_domains,
        n_per_domain,
        image_size,
        channels,
        ref specs,
        test_fraction,
        seed,
    } = *config;
    if n_domains < 2 {
        return Err(Error::config(format!("need at least 2 domains, got {n_domains}")));
    }
    if specs.len() != n_domains {
        return Err(Error::config(format!(
            "{} domain specs for {n_domains} domains",
            specs.len()
        )));
    }
    if image_size < 8 {
        return Err(Error::config(format!("image_size must be >= 8, got {image_size}")));
    }
    if channels == 0 {
        return Err(Error::config("channels must be >= 1"));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::config("test_fraction must lie in [0, 1)"));
    }
    for spec in specs {
        spec.validate(image_size)?;
    }

    let mut images = Vec::with_capacity(n_domains);
    let mut masks = Vec::with_capacity(n_domains);
    let mut split = Vec::with_capacity(n_domains);
    let mut clamped = 0usize;
    for (slot, spec) in specs.iter().enumerate() {
        let mut imgs = Vec::with_capacity(n_per_domain);
        let mut ms = Vec::with_capacity(n_per_domain);
        for i in 0..n_per_domain {
            let g = draw_geometry(seed, slot, i, image_size);
            let mask = render_mask(&g, image_size);
            let base = base_image(&mask, g.fg, g.bg, channels);
            let (img, c) = apply_domain(&base, spec, seed, slot, i);
            clamped += c;
            imgs.push(img);
            ms.push(mask);
        }
        let n_test = (n_per_domain as f64 * test_fraction).round() as usize;
        let mut rng = derive_stream(seed, &[("benchmark", 0), ("split", slot as u64)]);
        let perm = rng.permutation(n_per_domain);
        let mut test: Vec<usize> = perm[..n_test].to_vec();
        let mut train: Vec<usize> = perm[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        images.push(imgs);
        masks.push(ms);
        split.push(Split { train, test });
    }
    let total = n_domains * n_per_domain * image_size * image_size * channels;
    let ds = MultiDomainDataset {
        images,
        masks,
        specs: specs.clone(),
        seed,
        split,
        clamp_fraction: if total == 0 { 0.0 } else { clamped as f64 / total as f64 },
    };
    ds.check()?;
    Ok(ds)
}
