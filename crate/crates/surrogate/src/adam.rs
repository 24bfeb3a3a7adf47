//! Adam with bias correction, over the model's tensor list. Complex tensors
//! update their real and imaginary lanes independently.

use num_complex::Complex64;

use crate::model::{Gradients, SurrogateWeights, TensorMut, TensorRef};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1.0e-3, beta1: 0.9, beta2: 0.999, eps: 1.0e-8 }
    }
}

/// Optimizer state: first/second moments per scalar parameter.
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, weights: &SurrogateWeights) -> Self {
        let sizes: Vec<usize> = weights
            .tensors()
            .iter()
            .map(|t| match t {
                TensorRef::Real(xs) => xs.len(),
                TensorRef::Complex(xs) => 2 * xs.len(),
            })
            .collect();
        Adam {
            cfg,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, weights: &mut SurrogateWeights, grads: &Gradients) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);
        let (b1, b2, eps, lr) = (self.cfg.beta1, self.cfg.beta2, self.cfg.eps, self.cfg.lr);

        let gts = grads.tensors();
        for ((wt, gt), (m, v)) in weights
            .tensors_mut()
            .into_iter()
            .zip(gts)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let mut lane = |idx: usize, w: &mut f64, g: f64| {
                m[idx] = b1 * m[idx] + (1.0 - b1) * g;
                v[idx] = b2 * v[idx] + (1.0 - b2) * g * g;
                let m_hat = m[idx] / bc1;
                let v_hat = v[idx] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            match (wt, gt) {
                (TensorMut::Real(ws), TensorRef::Real(gs)) => {
                    for (i, (w, g)) in ws.iter_mut().zip(gs.iter()).enumerate() {
                        lane(i, w, *g);
                    }
                }
                (TensorMut::Complex(ws), TensorRef::Complex(gs)) => {
                    for (i, (w, g)) in ws.iter_mut().zip(gs.iter()).enumerate() {
                        let mut re = w.re;
                        let mut im = w.im;
                        lane(2 * i, &mut re, g.re);
                        lane(2 * i + 1, &mut im, g.im);
                        *w = Complex64::new(re, im);
                    }
                }
                _ => unreachable!("weights and gradients share one declaration order"),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, FnoConfig};

    fn cfg() -> FnoConfig {
        FnoConfig {
            n_layers: 1,
            modes: (1, 1, 1),
            width: 2,
            in_channels: 2,
            out_channels: 2,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // with bias correction, |step 1| = lr for any nonzero gradient
        let fc = cfg();
        let mut w = SurrogateWeights::zeros_like(fc).unwrap();
        let mut g = SurrogateWeights::zeros_like(fc).unwrap();
        g.lift_w[[0, 0]] = 3.7;
        g.lift_w[[1, 1]] = -0.2;
        let mut adam = Adam::new(AdamConfig { lr: 0.01, ..AdamConfig::default() }, &w);
        adam.update(&mut w, &g);
        assert!((w.lift_w[[0, 0]] + 0.01).abs() < 1e-9);
        assert!((w.lift_w[[1, 1]] - 0.01).abs() < 1e-9);
        assert_eq!(w.lift_w[[0, 1]], 0.0);
    }

    #[test]
    fn zero_gradient_keeps_weights() {
        let fc = cfg();
        let mut w = SurrogateWeights::init(fc, 5).unwrap();
        let before = w.clone();
        let g = SurrogateWeights::zeros_like(fc).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &w);
        adam.update(&mut w, &g);
        assert_eq!(w.lift_w, before.lift_w);
        assert_eq!(w.layers[0].spectral, before.layers[0].spectral);
    }

    #[test]
    fn updates_are_deterministic() {
        let fc = cfg();
        let run = || {
            let mut w = SurrogateWeights::init(fc, 5).unwrap();
            let mut g = SurrogateWeights::zeros_like(fc).unwrap();
            g.proj2_b[0] = 1.0;
            g.layers[0].spectral[0] = Complex64::new(0.5, -0.25);
            let mut adam = Adam::new(AdamConfig::default(), &w);
            for _ in 0..10 {
                adam.update(&mut w, &g);
            }
            (w.proj2_b[0], w.layers[0].spectral[0])
        };
        assert_eq!(run(), run());
    }
}
