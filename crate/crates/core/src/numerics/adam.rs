use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(n: usize, hyper: AdamHyper) -> Self {
        Self {
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
            hyper,
        }
    }

    /// In-place Adam update with bias correction.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        let n = params.len();
        if grads.len() != n || self.first_moment.len() != n || self.second_moment.len() != n {
            return Err(Error::dim(format!(
                "adam: params {}, grads {}, moments {}/{}",
                n,
                grads.len(),
                self.first_moment.len(),
                self.second_moment.len()
            )));
        }
        let AdamHyper {
            lr,
            beta1,
            beta2,
            eps,
        } = self.hyper;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..n {
            let g = grads[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= lr * (m / c1) / ((v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::update`].
pub fn adam_step(params: &[f64], grads: &[f64], state: &AdamState) -> Result<(Vec<f64>, AdamState)> {
    let mut p = params.to_vec();
    let mut s = state.clone();
    s.update(&mut p, grads)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let p = vec![1.5, -2.0, 0.25];
        let mut state = AdamState::new(3, AdamHyper::default());
        for _ in 0..5 {
            let (np, ns) = adam_step(&p, &[0.0; 3], &state).unwrap();
            assert_eq!(np, p);
            assert_eq!(ns.step_count, state.step_count + 1);
            state = ns;
        }
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        let state = AdamState::new(1, AdamHyper::default());
        let (p, s) = adam_step(&[0.0], &[2.0], &state).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-9, "{}", p[0]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn minimizes_quadratic() {
        // Reference trace from a direct scalar transcription of the update
        // rule; the two must agree bit-for-bit and end below 0.2.
        let hyper = AdamHyper {
            lr: 0.05,
            ..AdamHyper::default()
        };
        let mut state = AdamState::new(1, hyper);
        let mut theta = vec![1.0];
        let (mut rt, mut rm, mut rv) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * theta[0];
            state.update(&mut theta, &[g]).unwrap();
            let rg = 2.0 * rt;
            rm = 0.9 * rm + (1.0 - 0.9) * rg;
            rv = 0.99 * rv + (1.0 - 0.99) * rg * rg;
            let mh = rm / (1.0 - 0.9f64.powi(t));
            let vh = rv / (1.0 - 0.99f64.powi(t));
            rt -= 0.05 * mh / (vh.sqrt() + 1e-8);
        }
        assert_eq!(theta[0], rt);
        assert!(theta[0].abs() < 0.2, "{}", theta[0]);
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        let state = AdamState::new(2, AdamHyper::default());
        assert!(matches!(
            adam_step(&[0.0, 1.0], &[1.0], &state),
            Err(Error::Dimension(_))
        ));
    }
}
