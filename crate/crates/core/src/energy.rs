//! Parametric energy functions `E_θ(x)` with hand-derived gradients in both
//! the input (for Langevin dynamics) and the parameters (for contrastive
//! divergence).
//!
//! The normalized density `exp(−E_θ(x)) / Z_θ` is never needed: sampling
//! only uses `∇_x E` and training only uses `∇_θ E`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{artifact_base, params_checksum, read_json, with_suffix, write_json, FORMAT_VERSION};
use crate::nn::{swish, swish_grad, Conv3x3};
use crate::numerics::{derive_stream, Tensor};
use crate::synth::ldtn::{read_tensor, write_tensor, DType};

pub const MAX_CONV_BLOCKS: usize = 7;
const BASE_CHANNELS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    /// Stride-2 3x3 conv blocks with swish, then a linear read-out.
    Conv,
    /// One swish hidden layer, linear read-out.
    Mlp,
    /// `½‖x − θ‖²`; stationary law and CD optimum known in closed form.
    Quadratic,
    /// `θᵀx`.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyArch {
    pub kind: ArchKind,
    #[serde(default = "default_blocks")]
    pub conv_blocks: usize,
    #[serde(default = "default_hidden")]
    pub hidden_width: usize,
    pub input_shape: Vec<usize>,
}

fn default_blocks() -> usize {
    2
}

fn default_hidden() -> usize {
    32
}

impl EnergyArch {
    pub fn conv(input_shape: &[usize], conv_blocks: usize) -> Self {
        Self {
            kind: ArchKind::Conv,
            conv_blocks,
            hidden_width: default_hidden(),
            input_shape: input_shape.to_vec(),
        }
    }

    pub fn mlp(input_len: usize, hidden_width: usize) -> Self {
        Self {
            kind: ArchKind::Mlp,
            conv_blocks: default_blocks(),
            hidden_width,
            input_shape: vec![input_len],
        }
    }

    pub fn quadratic(input_shape: &[usize]) -> Self {
        Self {
            kind: ArchKind::Quadratic,
            conv_blocks: default_blocks(),
            hidden_width: default_hidden(),
            input_shape: input_shape.to_vec(),
        }
    }

    pub fn linear(input_shape: &[usize]) -> Self {
        Self {
            kind: ArchKind::Linear,
            ..Self::quadratic(input_shape)
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len() == 0 {
            return Err(Error::config("energy input shape must be non-empty"));
        }
        match self.kind {
            ArchKind::Conv => {
                if self.input_shape.len() != 3 {
                    return Err(Error::config(format!(
                        "conv energy expects [H, W, C] input, got {:?}",
                        self.input_shape
                    )));
                }
                if !(1..=MAX_CONV_BLOCKS).contains(&self.conv_blocks) {
                    return Err(Error::config(format!(
                        "conv_blocks must be in 1..={MAX_CONV_BLOCKS}, got {}",
                        self.conv_blocks
                    )));
                }
            }
            ArchKind::Mlp => {
                if self.hidden_width == 0 {
                    return Err(Error::config("mlp hidden_width must be >= 1"));
                }
            }
            ArchKind::Quadratic | ArchKind::Linear => {}
        }
        Ok(())
    }

    fn conv_layers(&self) -> Vec<(Conv3x3, usize, usize)> {
        let (mut h, mut w, mut c) = (self.input_shape[0], self.input_shape[1], self.input_shape[2]);
        let mut layers = Vec::with_capacity(self.conv_blocks);
        for b in 0..self.conv_blocks {
            let conv = Conv3x3 {
                cin: c,
                cout: BASE_CHANNELS << b,
                stride: 2,
            };
            layers.push((conv, h, w));
            let (oh, ow) = conv.out_size(h, w);
            h = oh;
            w = ow;
            c = conv.cout;
        }
        layers
    }

    /// Length of the flat parameter vector, from the architecture alone.
    pub fn param_count(&self) -> usize {
        let d = self.input_len();
        match self.kind {
            ArchKind::Conv => {
                let layers = self.conv_layers();
                let convs: usize = layers.iter().map(|(c, _, _)| c.param_count()).sum();
                let (last, h, w) = layers.last().expect("at least one block");
                let (oh, ow) = last.out_size(*h, *w);
                convs + oh * ow * last.cout + 1
            }
            ArchKind::Mlp => self.hidden_width * d + 2 * self.hidden_width + 1,
            ArchKind::Quadratic | ArchKind::Linear => d,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyParams {
    pub arch: EnergyArch,
    pub theta: Vec<f64>,
}

/// Value and requested gradients of one energy evaluation.
#[derive(Clone, Debug)]
pub struct EnergyEval {
    pub energy: f64,
    pub grad_input: Option<Vec<f64>>,
}

impl EnergyParams {
    pub fn new(arch: EnergyArch, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.param_count() {
            return Err(Error::dim(format!(
                "theta has {} entries, architecture needs {}",
                theta.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, theta })
    }

    /// Deterministic initialization in `(arch, seed)`.
    pub fn init(arch: EnergyArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = derive_stream(seed, &[("energy-init", 0)]);
        let n = arch.param_count();
        let theta = match arch.kind {
            ArchKind::Quadratic | ArchKind::Linear => vec![0.0; n],
            ArchKind::Mlp => {
                let d = arch.input_len();
                let h = arch.hidden_width;
                let mut t = Vec::with_capacity(n);
                let s1 = (1.0 / d as f64).sqrt();
                t.extend((0..h * d).map(|_| s1 * rng.normal()));
                t.extend(std::iter::repeat_n(0.0, h));
                let s2 = (1.0 / h as f64).sqrt();
                t.extend((0..h).map(|_| s2 * rng.normal()));
                t.push(0.0);
                t
            }
            ArchKind::Conv => {
                let mut t = Vec::with_capacity(n);
                let layers = arch.conv_layers();
                for (conv, _, _) in &layers {
                    let s = (2.0 / (9 * conv.cin) as f64).sqrt();
                    t.extend((0..9 * conv.cin * conv.cout).map(|_| s * rng.normal()));
                    t.extend(std::iter::repeat_n(0.0, conv.cout));
                }
                let head = n - t.len() - 1;
                let s = (1.0 / head as f64).sqrt();
                t.extend((0..head).map(|_| s * rng.normal()));
                t.push(0.0);
                t
            }
        };
        Self::new(arch, theta)
    }

    pub fn checksum(&self) -> String {
        params_checksum(&self.theta)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_len() {
            return Err(Error::dim(format!(
                "energy input has {} values, architecture expects shape {:?}",
                x.len(),
                self.arch.input_shape
            )));
        }
        Ok(())
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x, false, None)?.energy)
    }

    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(x, true, None)?.grad_input.expect("requested"))
    }

    pub fn grad_params(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.theta.len()];
        self.evaluate(x, false, Some(&mut g))?;
        Ok(g)
    }

    /// Forward pass, optionally returning `∇_x E` and accumulating `∇_θ E`
    /// (scaled by `param_scale`) into `param_grad`.
    pub fn evaluate(
        &self,
        x: &[f64],
        want_input: bool,
        param_grad: Option<&mut [f64]>,
    ) -> Result<EnergyEval> {
        self.evaluate_scaled(x, want_input, param_grad, 1.0)
    }

    pub fn evaluate_scaled(
        &self,
        x: &[f64],
        want_input: bool,
        param_grad: Option<&mut [f64]>,
        param_scale: f64,
    ) -> Result<EnergyEval> {
        self.check_input(x)?;
        let out = match self.arch.kind {
            ArchKind::Quadratic => {
                let mut e = 0.0;
                for (a, t) in x.iter().zip(&self.theta) {
                    e += 0.5 * (a - t) * (a - t);
                }
                if let Some(g) = param_grad {
                    for ((gi, a), t) in g.iter_mut().zip(x).zip(&self.theta) {
                        *gi += param_scale * (t - a);
                    }
                }
                EnergyEval {
                    energy: e,
                    grad_input: want_input
                        .then(|| x.iter().zip(&self.theta).map(|(a, t)| a - t).collect()),
                }
            }
            ArchKind::Linear => {
                if let Some(g) = param_grad {
                    for (gi, a) in g.iter_mut().zip(x) {
                        *gi += param_scale * a;
                    }
                }
                EnergyEval {
                    energy: x.iter().zip(&self.theta).map(|(a, t)| a * t).sum(),
                    grad_input: want_input.then(|| self.theta.clone()),
                }
            }
            ArchKind::Mlp => self.eval_mlp(x, want_input, param_grad, param_scale)?,
            ArchKind::Conv => self.eval_conv(x, want_input, param_grad, param_scale)?,
        };
        if !out.energy.is_finite() {
            return Err(Error::numeric(format!("non-finite energy {}", out.energy)));
        }
        Ok(out)
    }

    fn eval_mlp(
        &self,
        x: &[f64],
        want_input: bool,
        param_grad: Option<&mut [f64]>,
        scale: f64,
    ) -> Result<EnergyEval> {
        let d = x.len();
        let h = self.arch.hidden_width;
        let (w1, rest) = self.theta.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut pre = vec![0.0; h];
        let mut e = b2[0];
        for j in 0..h {
            let z = b1[j] + w1[j * d..(j + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if !z.is_finite() {
                return Err(Error::numeric(format!("non-finite pre-activation at hidden unit {j}")));
            }
            pre[j] = z;
            e += w2[j] * swish(z);
        }
        let dz: Vec<f64> = (0..h).map(|j| w2[j] * swish_grad(pre[j])).collect();
        if let Some(g) = param_grad {
            let (gw1, rest) = g.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(h);
            for j in 0..h {
                for (gw, a) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gw += scale * dz[j] * a;
                }
                gb1[j] += scale * dz[j];
                gw2[j] += scale * swish(pre[j]);
            }
            gb2[0] += scale;
        }
        let grad_input = want_input.then(|| {
            let mut gx = vec![0.0; d];
            for j in 0..h {
                for (g, w) in gx.iter_mut().zip(&w1[j * d..(j + 1) * d]) {
                    *g += dz[j] * w;
                }
            }
            gx
        });
        Ok(EnergyEval { energy: e, grad_input })
    }

    fn eval_conv(
        &self,
        x: &[f64],
        want_input: bool,
        param_grad: Option<&mut [f64]>,
        scale: f64,
    ) -> Result<EnergyEval> {
        let layers = self.arch.conv_layers();
        // inputs[b] feeds block b; pres[b] is its pre-activation.
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(layers.len() + 1);
        let mut pres: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        inputs.push(x.to_vec());
        let mut offset = 0;
        let mut offsets = Vec::with_capacity(layers.len());
        for (b, (conv, h, w)) in layers.iter().enumerate() {
            let p = &self.theta[offset..offset + conv.param_count()];
            offsets.push(offset);
            offset += conv.param_count();
            let mut pre = Vec::new();
            conv.forward(p, &inputs[b], *h, *w, &mut pre);
            if pre.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("non-finite activation in conv block {b}")));
            }
            inputs.push(pre.iter().map(|&z| swish(z)).collect());
            pres.push(pre);
        }
        let feat = inputs.last().expect("non-empty");
        let head = &self.theta[offset..offset + feat.len()];
        let bias = self.theta[offset + feat.len()];
        let e = bias + head.iter().zip(feat).map(|(a, b)| a * b).sum::<f64>();

        let want_params = param_grad.is_some();
        if !want_input && !want_params {
            return Ok(EnergyEval { energy: e, grad_input: None });
        }
        let mut param_grad = param_grad;
        if let Some(g) = param_grad.as_deref_mut() {
            for (gi, f) in g[offset..offset + feat.len()].iter_mut().zip(feat) {
                *gi += scale * f;
            }
            g[offset + feat.len()] += scale;
        }
        let mut grad = head.to_vec();
        let mut scratch = vec![0.0; self.theta.len()];
        for b in (0..layers.len()).rev() {
            let (conv, h, w) = layers[b];
            for (g, &z) in grad.iter_mut().zip(&pres[b]) {
                *g *= swish_grad(z);
            }
            let need_input = b > 0 || want_input;
            let p = &self.theta[offsets[b]..offsets[b] + conv.param_count()];
            let mut gin = Vec::new();
            let gp = if want_params {
                let s = &mut scratch[offsets[b]..offsets[b] + conv.param_count()];
                s.iter_mut().for_each(|v| *v = 0.0);
                Some(s)
            } else {
                None
            };
            conv.backward(
                p,
                &inputs[b],
                h,
                w,
                &grad,
                gp,
                if need_input { Some(&mut gin) } else { None },
            );
            if let Some(g) = param_grad.as_deref_mut() {
                let range = offsets[b]..offsets[b] + conv.param_count();
                for (gi, s) in g[range.clone()].iter_mut().zip(&scratch[range]) {
                    *gi += scale * s;
                }
            }
            grad = gin;
        }
        Ok(EnergyEval {
            energy: e,
            grad_input: want_input.then_some(grad),
        })
    }
}

pub fn energy_forward(params: &EnergyParams, x: &Tensor) -> Result<f64> {
    params.energy(&x.data)
}

pub fn energy_grad_input(params: &EnergyParams, x: &Tensor) -> Result<Tensor> {
    Ok(Tensor {
        shape: x.shape.clone(),
        data: params.grad_input(&x.data)?,
    })
}

pub fn energy_grad_params(params: &EnergyParams, x: &Tensor) -> Result<Vec<f64>> {
    params.grad_params(&x.data)
}

/// Mean `∇_θ E` over a batch.
pub fn batch_grad_params(params: &EnergyParams, batch: &[&[f64]]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; params.theta.len()];
    let w = 1.0 / batch.len() as f64;
    for x in batch {
        params.evaluate_scaled(x, false, Some(&mut g), w)?;
    }
    Ok(g)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyMeta {
    arch: EnergyArch,
    source_domain: usize,
    target_domain: usize,
    checksum: String,
    format_version: u32,
}

/// Persist `params` as an LDTN theta vector plus a `.meta.json` sidecar
/// naming the (source, target) pair it bridges.
pub fn save_energy(params: &EnergyParams, pair: (usize, usize), path: &Path) -> Result<()> {
    let base = artifact_base(path);
    let t = Tensor {
        shape: vec![params.theta.len()],
        data: params.theta.clone(),
    };
    write_tensor(&with_suffix(&base, ".ldtn"), &t, DType::F64)?;
    write_json(
        &with_suffix(&base, ".meta.json"),
        &EnergyMeta {
            arch: params.arch.clone(),
            source_domain: pair.0,
            target_domain: pair.1,
            checksum: params.checksum(),
            format_version: FORMAT_VERSION,
        },
    )
}

pub fn load_energy(path: &Path) -> Result<(EnergyParams, (usize, usize))> {
    let base = artifact_base(path);
    let meta: EnergyMeta = read_json(&with_suffix(&base, ".meta.json"))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("energy format_version {}", meta.format_version)));
    }
    let t = read_tensor(&with_suffix(&base, ".ldtn"))?;
    let params = EnergyParams::new(meta.arch, t.data)?;
    if params.checksum() != meta.checksum {
        return Err(Error::Format(format!("checksum mismatch for {}", base.display())));
    }
    Ok((params, (meta.source_domain, meta.target_domain)))
}
