//! Two 3x3 conv layers with swish activations and a per-pixel linear logit
//! head, trained with pixel cross-entropy plus soft Dice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{swish, swish_grad, Conv3x3};
use crate::numerics::{derive_stream, sigmoid, softplus, Tensor};

/// Smoothing constant of the soft Dice loss.
pub const DICE_SMOOTH: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegArch {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub hidden: usize,
}

impl SegArch {
    pub fn new(image_shape: &[usize]) -> Result<Self> {
        match image_shape {
            &[h, w, c] if h > 0 && w > 0 && c > 0 => Ok(Self {
                height: h,
                width: w,
                channels: c,
                hidden: 8,
            }),
            other => Err(Error::dim(format!("segmenter needs an [H, W, C] image shape, got {other:?}"))),
        }
    }

    fn layers(&self) -> (Conv3x3, Conv3x3) {
        (
            Conv3x3 {
                cin: self.channels,
                cout: self.hidden,
                stride: 1,
            },
            Conv3x3 {
                cin: self.hidden,
                cout: self.hidden,
                stride: 1,
            },
        )
    }

    pub fn param_count(&self) -> usize {
        let (c1, c2) = self.layers();
        c1.param_count() + c2.param_count() + self.hidden + 1
    }

    pub fn image_shape(&self) -> Vec<usize> {
        vec![self.height, self.width, self.channels]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegModel {
    pub arch: SegArch,
    pub theta: Vec<f64>,
}

struct Cache {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    logits: Vec<f64>,
}

impl SegModel {
    /// He-scaled conv weights, zero biases.
    pub fn init(arch: SegArch, seed: u64) -> Self {
        let (c1, c2) = arch.layers();
        let mut rng = derive_stream(seed, &[("seg-init", 0)]);
        let mut theta = Vec::with_capacity(arch.param_count());
        for (conv, fan_in) in [(c1, 9 * c1.cin), (c2, 9 * c2.cin)] {
            let s = (2.0 / fan_in as f64).sqrt();
            theta.extend((0..9 * conv.cin * conv.cout).map(|_| s * rng.normal()));
            theta.extend(std::iter::repeat_n(0.0, conv.cout));
        }
        let s = (1.0 / arch.hidden as f64).sqrt();
        theta.extend((0..arch.hidden).map(|_| s * rng.normal()));
        theta.push(0.0);
        Self { arch, theta }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64]) {
        let (c1, c2) = self.arch.layers();
        let (p1, rest) = self.theta.split_at(c1.param_count());
        let (p2, head) = rest.split_at(c2.param_count());
        (p1, p2, head)
    }

    fn check(&self, image: &Tensor) -> Result<()> {
        if image.shape != self.arch.image_shape() {
            return Err(Error::dim(format!(
                "image shape {:?} does not match segmenter input {:?}",
                image.shape,
                self.arch.image_shape()
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, image: &Tensor) -> Result<Cache> {
        self.check(image)?;
        let (h, w, hid) = (self.arch.height, self.arch.width, self.arch.hidden);
        let (c1, c2) = self.arch.layers();
        let (p1, p2, head) = self.split();
        let mut z1 = Vec::new();
        c1.forward(p1, &image.data, h, w, &mut z1);
        let a1: Vec<f64> = z1.iter().map(|&z| swish(z)).collect();
        let mut z2 = Vec::new();
        c2.forward(p2, &a1, h, w, &mut z2);
        let a2: Vec<f64> = z2.iter().map(|&z| swish(z)).collect();
        let logits = a2
            .chunks(hid)
            .map(|px| px.iter().zip(head).map(|(a, b)| a * b).sum::<f64>() + head[hid])
            .collect();
        Ok(Cache { z1, a1, z2, a2, logits })
    }

    /// Per-pixel logits, `[H, W]`.
    pub fn logits(&self, image: &Tensor) -> Result<Tensor> {
        let c = self.forward_cached(image)?;
        Tensor::new(vec![self.arch.height, self.arch.width], c.logits)
    }

    /// Loss for one sample and, if requested, its gradient accumulated into
    /// `grad` (scaled by `weight`).
    pub fn loss_and_grad(&self, image: &Tensor, mask: &Tensor, grad: Option<(&mut [f64], f64)>) -> Result<f64> {
        let (h, w, hid) = (self.arch.height, self.arch.width, self.arch.hidden);
        if mask.shape != [h, w] {
            return Err(Error::dim(format!("mask shape {:?} must be [{h}, {w}]", mask.shape)));
        }
        let c = self.forward_cached(image)?;
        let n = (h * w) as f64;
        let p: Vec<f64> = c.logits.iter().map(|&z| sigmoid(z)).collect();
        // Stable BCE with logits: softplus(z) − m·z.
        let bce: f64 = c.logits.iter().zip(&mask.data).map(|(&z, &m)| softplus(z) - m * z).sum::<f64>() / n;
        let inter: f64 = p.iter().zip(&mask.data).map(|(a, b)| a * b).sum();
        let denom: f64 = p.iter().sum::<f64>() + mask.data.iter().sum::<f64>() + DICE_SMOOTH;
        let soft_dice = (2.0 * inter + DICE_SMOOTH) / denom;
        let loss = bce + 1.0 - soft_dice;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite segmentation loss {loss}")));
        }
        let Some((grad, weight)) = grad else {
            return Ok(loss);
        };
        if grad.len() != self.theta.len() {
            return Err(Error::dim("gradient buffer has the wrong length"));
        }
        let (c1, c2) = self.arch.layers();
        let (p1, p2, head) = self.split();
        let n1 = c1.param_count();
        let n2 = c2.param_count();
        let num = 2.0 * inter + DICE_SMOOTH;
        let dlogit: Vec<f64> = p
            .iter()
            .zip(&mask.data)
            .map(|(&pj, &m)| {
                let d_bce = (pj - m) / n;
                let d_dice_dp = (2.0 * m * denom - num) / (denom * denom);
                weight * (d_bce - d_dice_dp * pj * (1.0 - pj))
            })
            .collect();
        let (g1, rest) = grad.split_at_mut(n1);
        let (g2, gh) = rest.split_at_mut(n2);
        let mut dz2 = vec![0.0; c.a2.len()];
        for (px, &g) in dlogit.iter().enumerate() {
            gh[hid] += g;
            for k in 0..hid {
                let idx = px * hid + k;
                gh[k] += g * c.a2[idx];
                dz2[idx] = g * head[k] * swish_grad(c.z2[idx]);
            }
        }
        let mut da1 = Vec::new();
        c2.backward(p2, &c.a1, h, w, &dz2, Some(g2), Some(&mut da1));
        let dz1: Vec<f64> = da1.iter().zip(&c.z1).map(|(d, &z)| d * swish_grad(z)).collect();
        c1.backward(p1, &image.data, h, w, &dz1, Some(g1), None);
        Ok(loss)
    }
}

/// `sigmoid(logit) ≥ threshold` per pixel.
pub fn predict_mask(model: &SegModel, image: &Tensor, threshold: f64) -> Result<Tensor> {
    let logits = model.logits(image)?;
    let data = logits.data.iter().map(|&z| f64::from(u8::from(sigmoid(z) >= threshold))).collect();
    Tensor::new(logits.shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{compare_gradients, finite_diff_grad};

    fn sample(seed: u64, c: usize) -> (SegModel, Tensor, Tensor) {
        let arch = SegArch::new(&[5, 4, c]).unwrap();
        let model = SegModel::init(arch, seed);
        let mut rng = derive_stream(seed, &[("sample", 0)]);
        let img = Tensor::new(vec![5, 4, c], (0..20 * c).map(|_| rng.uniform()).collect()).unwrap();
        let mask = Tensor::new(vec![5, 4], (0..20).map(|_| f64::from(u8::from(rng.uniform() < 0.4))).collect()).unwrap();
        (model, img, mask)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (model, img, mask) = sample(seed, 1 + seed as usize % 2);
            let mut g = vec![0.0; model.theta.len()];
            model.loss_and_grad(&img, &mask, Some((&mut g, 1.0))).unwrap();
            let num = finite_diff_grad(
                |t| {
                    let m = SegModel {
                        arch: model.arch.clone(),
                        theta: t.to_vec(),
                    };
                    m.loss_and_grad(&img, &mask, None).unwrap()
                },
                &model.theta,
                1e-5,
            )
            .unwrap();
            let cmp = compare_gradients(&g, &num, 1e-6);
            assert!(cmp.passes(1e-4, 1e-8), "{cmp:?}");
        }
    }

    #[test]
    fn logits_keep_spatial_shape_and_thresholds() {
        let (mut model, img, _) = sample(1, 1);
        assert_eq!(model.logits(&img).unwrap().shape, vec![5, 4]);
        let ones = predict_mask(&model, &img, 0.0).unwrap();
        assert!(ones.data.iter().all(|&v| v == 1.0));
        let n = model.theta.len();
        model.theta[n - 1] = -1e3;
        let zeros = predict_mask(&model, &img, 0.5).unwrap();
        assert!(zeros.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raising_threshold_never_adds_pixels() {
        let (model, img, _) = sample(2, 1);
        let mut prev = predict_mask(&model, &img, 0.0).unwrap();
        for t in [0.2, 0.4, 0.5, 0.6, 0.8, 1.0] {
            let m = predict_mask(&model, &img, t).unwrap();
            assert!(m.data.iter().zip(&prev.data).all(|(a, b)| a <= b));
            prev = m;
        }
    }

    #[test]
    fn shape_errors() {
        let (model, _, mask) = sample(0, 1);
        let bad = Tensor::zeros(&[4, 4, 1]);
        assert!(model.logits(&bad).is_err());
        assert!(SegArch::new(&[4, 4]).is_err());
        let img = Tensor::zeros(&[5, 4, 1]);
        assert!(model.loss_and_grad(&img, &Tensor::zeros(&[4, 5]), None).is_err());
        let _ = mask;
    }
}
