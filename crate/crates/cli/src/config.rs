//! Strict JSON experiment configuration. Every section is optional and
//! falls back to the library defaults; `base_seed` is required.

use std::path::Path;

use serde::{Deserialize, Serialize};

use langdaug::cd::CdConfig;
use langdaug::energy::{ArchKind, EnergyArch};
use langdaug::langevin::LangevinConfig;
use langdaug::numerics::AdamHyper;
use langdaug::seg::LooConfig;
use langdaug::synth::{default_specs, BenchmarkConfig, DomainSpec};
use langdaug::theory::{CoverageStudy, GlmFamily, RademacherStudy, ScanConfig};
use langdaug::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub ebm: EbmSection,
    /// Augmentation sampler.
    #[serde(default)]
    pub langevin: LangevinConfig,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub segmenter: LooConfig,
    #[serde(default)]
    pub theory: TheorySection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n_domains: usize,
    pub n_per_domain: usize,
    pub image_size: usize,
    pub channels: usize,
    pub test_fraction: f64,
    pub specs: Vec<DomainSpec>,
}

impl Default for DataSection {
    fn default() -> Self {
        let b = BenchmarkConfig::default();
        Self {
            n_domains: b.n_domains,
            n_per_domain: b.n_per_domain,
            image_size: b.image_size,
            channels: b.channels,
            test_fraction: b.test_fraction,
            specs: default_specs(),
        }
    }
}

impl DataSection {
    pub fn benchmark(&self, seed: u64) -> BenchmarkConfig {
        BenchmarkConfig {
            n_domains: self.n_domains,
            n_per_domain: self.n_per_domain,
            image_size: self.image_size,
            channels: self.channels,
            specs: self.specs.clone(),
            test_fraction: self.test_fraction,
            seed,
        }
    }
}

/// Energy architecture plus the contrastive-divergence schedule. The
/// training chains keep only their final iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EbmSection {
    pub kind: ArchKind,
    pub conv_blocks: usize,
    pub hidden_width: usize,
    pub n_iters: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub n_steps: usize,
    pub adam: AdamHyper,
    pub grad_clip: Option<f64>,
}

impl Default for EbmSection {
    fn default() -> Self {
        let cd = CdConfig::default();
        Self {
            kind: ArchKind::Conv,
            conv_blocks: 2,
            hidden_width: 32,
            n_iters: cd.n_iters,
            batch_size: cd.batch_size,
            step_size: cd.ld.step_size,
            n_steps: cd.ld.n_steps,
            adam: cd.adam,
            grad_clip: cd.grad_clip,
        }
    }
}

impl EbmSection {
    pub fn arch(&self, image_shape: &[usize]) -> EnergyArch {
        let len: usize = image_shape.iter().product();
        let mut arch = match self.kind {
            ArchKind::Conv => EnergyArch::conv(image_shape, self.conv_blocks),
            ArchKind::Mlp => EnergyArch::mlp(len, self.hidden_width),
            ArchKind::Quadratic => EnergyArch::quadratic(image_shape),
            ArchKind::Linear => EnergyArch::linear(image_shape),
        };
        arch.conv_blocks = self.conv_blocks;
        arch.hidden_width = self.hidden_width;
        arch
    }

    pub fn cd(&self, base_seed: u64) -> CdConfig {
        CdConfig {
            n_iters: self.n_iters,
            batch_size: self.batch_size,
            ld: LangevinConfig {
                step_size: self.step_size,
                n_steps: self.n_steps,
                store_stride: self.n_steps.max(1),
                store_offset: self.n_steps.max(1),
                hook: None,
                clamp: false,
            },
            adam: self.adam,
            base_seed,
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    /// Domains that take part in pairwise training and augmentation; all
    /// domains when absent.
    pub domains: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub betas: Vec<f64>,
    pub n_mc: usize,
    pub n_mc_max: usize,
    pub rel_tol: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        let s = ScanConfig::default();
        Self {
            betas: s.betas,
            n_mc: s.n_mc,
            n_mc_max: s.n_mc_max,
            rel_tol: s.rel_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySection {
    pub family: GlmFamily,
    pub k: usize,
    /// Parameter of the scan; also the data-generating parameter.
    pub theta: Vec<f64>,
    pub scan: ScanSection,
    pub rademacher: RademacherStudy,
    pub coverage: CoverageStudy,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            family: GlmFamily::Logistic,
            k: 200,
            theta: vec![1.0, -1.0],
            scan: ScanSection::default(),
            rademacher: RademacherStudy::default(),
            coverage: CoverageStudy::default(),
        }
    }
}

impl TheorySection {
    pub fn scan_config(&self, seed: u64) -> ScanConfig {
        ScanConfig {
            betas: self.scan.betas.clone(),
            n_mc: self.scan.n_mc,
            n_mc_max: self.scan.n_mc_max,
            rel_tol: self.scan.rel_tol,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Langevin steps, for both training and augmentation chains.
    K,
    /// Langevin step size, for both training and augmentation chains.
    Beta,
    ConvBlocks,
    /// Stored iterates per augmentation chain, evenly spaced and ending at K.
    SamplesPerChain,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::Beta => "beta",
            SweepAxis::ConvBlocks => "conv_blocks",
            SweepAxis::SamplesPerChain => "samples_per_chain",
        }
    }

    /// Whether changing this axis requires retraining the energies.
    pub fn retrains(&self) -> bool {
        !matches!(self, SweepAxis::SamplesPerChain)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: SweepAxis::K,
            values: vec![20.0, 40.0, 60.0, 80.0],
        }
    }
}

fn whole(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(Error::config(format!("{what} must be a positive integer, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not need any data on disk.
    pub fn validate(&self) -> Result<()> {
        self.langevin.validate()?;
        self.theory.scan_config(self.base_seed).validate()?;
        if self.theory.theta.is_empty() || self.theory.k == 0 {
            return Err(Error::config("theory.theta must be non-empty and theory.k >= 1"));
        }
        if self.data.specs.len() != self.data.n_domains {
            return Err(Error::config(format!(
                "data.specs lists {} domains, data.n_domains is {}",
                self.data.specs.len(),
                self.data.n_domains
            )));
        }
        if let Some(d) = &self.augment.domains {
            if d.len() < 2 || d.iter().any(|&i| i >= self.data.n_domains) {
                return Err(Error::config("augment.domains needs >= 2 valid domain ids"));
            }
        }
        if self.sweep.values.is_empty() {
            return Err(Error::config("sweep.values must be non-empty"));
        }
        for &v in &self.sweep.values {
            self.with_sweep_value(v)?;
        }
        Ok(())
    }

    /// Copy of the config with one sweep coordinate applied.
    pub fn with_sweep_value(&self, v: f64) -> Result<Self> {
        let mut c = self.clone();
        match self.sweep.axis {
            SweepAxis::K => {
                let k = whole(v, "K")?;
                c.langevin.n_steps = k;
                c.ebm.n_steps = k;
            }
            SweepAxis::Beta => {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::config(format!("step size must be > 0, got {v}")));
                }
                c.langevin.step_size = v;
                c.ebm.step_size = v;
            }
            SweepAxis::ConvBlocks => c.ebm.conv_blocks = whole(v, "conv_blocks")?,
            SweepAxis::SamplesPerChain => {
                let n = whole(v, "samples per chain")?;
                let k = c.langevin.n_steps;
                if n > k {
                    return Err(Error::config(format!("{n} samples per chain exceed K = {k}")));
                }
                let stride = k / n;
                c.langevin.store_stride = stride;
                c.langevin.store_offset = k - (n - 1) * stride;
            }
        }
        c.langevin.validate()?;
        Ok(c)
    }
}
