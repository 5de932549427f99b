use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. State is allocated on the first step
/// and matched to parameters by position.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            ..Default::default()
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<T: Real>(&mut self, params: &mut [&mut Param<T>], lr: f64) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer/parameter mismatch");
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i].as_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let update = lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                p.value[i] = T::of(p.value[i].as_f64() - update);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr * sign(g).
        let mut p = Param::<f32>::zeros(&[2]);
        p.grad = vec![3.0, -0.5];
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], 1e-3);
        assert!((p.value[0] + 1e-3).abs() < 1e-8);
        assert!((p.value[1] - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = Param::<f64>::zeros(&[1]);
        p.value[0] = 5.0;
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3000 {
            p.grad[0] = 2.0 * (p.value[0] - 1.5);
            adam.step(&mut [&mut p], 1e-2);
        }
        assert!((p.value[0] - 1.5).abs() < 1e-3);
    }
}
