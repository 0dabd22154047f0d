//! Hand-written layers shared by the energy networks and the segmenter.
//!
//! Feature maps are stored height-major, channel-last: index
//! `(y * width + x) * channels + c`. Convolution weights are laid out
//! `[out_channel][ky][kx][in_channel]` followed by one bias per output
//! channel.

use crate::numerics::sigmoid;

pub fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

pub fn swish_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s + z * s * (1.0 - s)
}

/// 3x3 convolution with zero padding 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3x3 {
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
}

impl Conv3x3 {
    pub fn param_count(&self) -> usize {
        9 * self.cin * self.cout + self.cout
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        ((h - 1) / self.stride + 1, (w - 1) / self.stride + 1)
    }

    /// Pre-activation output for `input` of size `h x w x cin`.
    pub fn forward(&self, params: &[f64], input: &[f64], h: usize, w: usize, out: &mut Vec<f64>) {
        let (oh, ow) = self.out_size(h, w);
        let (cin, cout) = (self.cin, self.cout);
        let bias = &params[9 * cin * cout..];
        out.clear();
        out.resize(oh * ow * cout, 0.0);
        for oy in 0..oh {
            for ox in 0..ow {
                let o = &mut out[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                o.copy_from_slice(bias);
                for ky in 0..3 {
                    let iy = (oy * self.stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (ox * self.stride + kx) as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let src = &input[(iy as usize * w + ix as usize) * cin..][..cin];
                        for (co, acc) in o.iter_mut().enumerate() {
                            let wk = &params[((co * 3 + ky) * 3 + kx) * cin..][..cin];
                            let mut s = 0.0;
                            for c in 0..cin {
                                s += wk[c] * src[c];
                            }
                            *acc += s;
                        }
                    }
                }
            }
        }
    }

    /// Backpropagate `grad_out` (size `oh x ow x cout`). Parameter gradients
    /// are accumulated into `grad_params` when given; the input gradient is
    /// written to `grad_input` when given.
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        h: usize,
        w: usize,
        grad_out: &[f64],
        mut grad_params: Option<&mut [f64]>,
        mut grad_input: Option<&mut Vec<f64>>,
    ) {
        let (oh, ow) = self.out_size(h, w);
        let (cin, cout) = (self.cin, self.cout);
        if let Some(gi) = grad_input.as_deref_mut() {
            gi.clear();
            gi.resize(h * w * cin, 0.0);
        }
        for oy in 0..oh {
            for ox in 0..ow {
                let go = &grad_out[(oy * ow + ox) * cout..][..cout];
                if let Some(gp) = grad_params.as_deref_mut() {
                    let gb = &mut gp[9 * cin * cout..];
                    for co in 0..cout {
                        gb[co] += go[co];
                    }
                }
                for ky in 0..3 {
                    let iy = (oy * self.stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (ox * self.stride + kx) as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let base = (iy as usize * w + ix as usize) * cin;
                        for co in 0..cout {
                            let g = go[co];
                            if g == 0.0 {
                                continue;
                            }
                            let woff = ((co * 3 + ky) * 3 + kx) * cin;
                            if let Some(gp) = grad_params.as_deref_mut() {
                                let gw = &mut gp[woff..woff + cin];
                                let src = &input[base..base + cin];
                                for c in 0..cin {
                                    gw[c] += g * src[c];
                                }
                            }
                            if let Some(gi) = grad_input.as_deref_mut() {
                                let wk = &params[woff..woff + cin];
                                let dst = &mut gi[base..base + cin];
                                for c in 0..cin {
                                    dst[c] += g * wk[c];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{compare_gradients, derive_stream, finite_diff_grad};

    #[test]
    fn swish_derivative_at_zero() {
        assert_eq!(swish(0.0), 0.0);
        assert_eq!(swish_grad(0.0), 0.5);
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = derive_stream(9, &[("conv-test", 0)]);
        for (stride, h, w) in [(1, 5, 4), (2, 6, 5), (2, 1, 1)] {
            let conv = Conv3x3 {
                cin: 2,
                cout: 3,
                stride,
            };
            let params = rng.normal_vec(conv.param_count());
            let input = rng.normal_vec(h * w * 2);
            let (oh, ow) = conv.out_size(h, w);
            let weights = rng.normal_vec(oh * ow * 3);
            let loss = |p: &[f64], x: &[f64]| {
                let mut out = Vec::new();
                conv.forward(p, x, h, w, &mut out);
                out.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
            };
            let mut gp = vec![0.0; params.len()];
            let mut gi = Vec::new();
            conv.backward(&params, &input, h, w, &weights, Some(&mut gp), Some(&mut gi));
            let np = finite_diff_grad(|p| loss(p, &input), &params, 1e-5).unwrap();
            let ni = finite_diff_grad(|x| loss(&params, x), &input, 1e-5).unwrap();
            assert!(compare_gradients(&gp, &np, 1e-6).passes(1e-6, 1e-8));
            assert!(compare_gradients(&gi, &ni, 1e-6).passes(1e-6, 1e-8));
        }
    }
}
