use serde::{Deserialize, Serialize};

use crate::data::NUM_BINS;
use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};
use crate::types::Wrench;

/// Probabilities are floored here before taking logs in the pressure loss.
pub const PROB_FLOOR: f64 = 1e-12;
/// Discriminator outputs are clamped to `[DISC_CLAMP, 1 - DISC_CLAMP]`.
pub const DISC_CLAMP: f64 = 1e-7;

/// Weight `e^{-|b - b_gt|}` of each bin's log-probability.
pub fn structure_weights(b_gt: u8) -> [f64; NUM_BINS] {
    std::array::from_fn(|b| (-((b as f64) - b_gt as f64).abs()).exp())
}

/// Structure-aware cross-entropy averaged over the masked pixels.
///
/// `rho` is pixel-major (`NUM_BINS` values per pixel), `mask` marks the
/// pixels of fully labeled frames. An empty mask gives exactly zero.
pub fn pressure_loss(rho: &[f64], b_gt: &[u8], mask: &[bool]) -> Result<f64> {
    if rho.len() != b_gt.len() * NUM_BINS || mask.len() != b_gt.len() {
        return Err(Error::shape(
            format!("{} probabilities and {} mask entries", b_gt.len() * NUM_BINS, b_gt.len()),
            format!("{} and {}", rho.len(), mask.len()),
        ));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ((px, &gt), &m) in rho.chunks_exact(NUM_BINS).zip(b_gt).zip(mask) {
        if !m {
            continue;
        }
        let sum: f64 = px.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || px.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidInput(format!("pixel distribution sums to {sum}")));
        }
        if gt as usize >= NUM_BINS {
            return Err(Error::InvalidInput(format!("bin {gt} out of range")));
        }
        let w = structure_weights(gt);
        total -= px.iter().zip(w).map(|(&p, w)| w * p.max(PROB_FLOOR).ln()).sum::<f64>();
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Pressure loss and its gradient with respect to the logits.
///
/// `logits` is `[9, n, H, W]` and `bins[k]` holds the row-major target bins
/// of sample `k`.
pub fn pressure_loss_from_logits<T: Real>(logits: &Tensor<T>, bins: &[&[u8]]) -> Result<(f64, Tensor<T>)> {
    let [c, n, h, w] = logits.shape;
    if c != NUM_BINS || bins.len() != n || bins.iter().any(|b| b.len() != h * w) {
        return Err(Error::shape(format!("[{NUM_BINS}, {}, {h}, {w}]", bins.len()), format!("{:?}", logits.shape)));
    }
    let plane = h * w;
    let stride = n * plane;
    let pixels = stride;
    let norm = 1.0 / pixels.max(1) as f64;
    let floor = PROB_FLOOR.ln();
    let mut grad = Tensor::zeros(logits.shape);
    let mut total = 0.0;
    let mut z = [0.0f64; NUM_BINS];
    for (b, target) in bins.iter().enumerate() {
        for (p, &gt) in target.iter().enumerate() {
            let base = b * plane + p;
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = logits.data[k * stride + base].as_f64();
            }
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            let weights = structure_weights(gt);
            let mut active_weight = 0.0;
            for k in 0..NUM_BINS {
                let log_p = z[k] - lse;
                if log_p > floor {
                    total -= weights[k] * log_p;
                    active_weight += weights[k];
                } else {
                    total -= weights[k] * floor;
                }
            }
            for k in 0..NUM_BINS {
                let log_p = z[k] - lse;
                let own = if log_p > floor { weights[k] } else { 0.0 };
                let g = active_weight * log_p.exp() - own;
                grad.data[k * stride + base] = T::of(g * norm);
            }
        }
    }
    Ok((total * norm, grad))
}

/// `‖F - F̂‖² + c‖T - T̂‖²` for one frame.
pub fn ft_loss(truth: &Wrench, pred: &Wrench, c: f64) -> f64 {
    let sq = |a: [f64; 3], b: [f64; 3]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    sq(truth.force(), pred.force()) + c * sq(truth.torque(), pred.torque())
}

/// Batch-mean force/torque loss and its gradient for a `[6, N, 1, 1]`
/// prediction.
pub fn ft_loss_batch<T: Real>(pred: &Tensor<T>, truth: &[Wrench], c: f64) -> Result<(f64, Tensor<T>)> {
    let n = truth.len();
    if pred.shape != [6, n, 1, 1] {
        return Err(Error::shape(format!("[6, {n}, 1, 1]"), format!("{:?}", pred.shape)));
    }
    let mut grad = Tensor::zeros(pred.shape);
    let mut total = 0.0;
    let norm = 1.0 / n.max(1) as f64;
    for (b, w) in truth.iter().enumerate() {
        for i in 0..6 {
            let weight = if i < 3 { 1.0 } else { c };
            let d = pred.data[i * n + b].as_f64() - w.0[i];
            total += weight * d * d;
            grad.data[i * n + b] = T::of(2.0 * weight * d * norm);
        }
    }
    Ok((total * norm, grad))
}

/// `mean(-log D(z_f)) + mean(-log(1 - D(z_w)))` with clamped
/// probabilities. An empty group contributes nothing.
pub fn domain_loss(d_full: &[f64], d_weak: &[f64]) -> f64 {
    let clamp = |p: f64| p.clamp(DISC_CLAMP, 1.0 - DISC_CLAMP);
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(|&p| f(clamp(p))).sum::<f64>() / v.len() as f64
        }
    };
    mean(d_full, &|p| -p.ln()) + mean(d_weak, &|p| -(1.0 - p).ln())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Domain loss and its gradient for `[1, N, 1, 1]` logits; `is_full[k]`
/// tells whether sample `k` is fully labeled.
pub fn domain_loss_from_logits<T: Real>(logits: &Tensor<T>, is_full: &[bool]) -> Result<(f64, Tensor<T>)> {
    let n = is_full.len();
    if logits.shape != [1, n, 1, 1] {
        return Err(Error::shape(format!("[1, {n}, 1, 1]"), format!("{:?}", logits.shape)));
    }
    let n_full = is_full.iter().filter(|&&f| f).count();
    let n_weak = n - n_full;
    let probs: Vec<f64> = logits.data.iter().map(|v| sigmoid(v.as_f64())).collect();
    let full: Vec<f64> = probs.iter().zip(is_full).filter(|(_, &f)| f).map(|(&p, _)| p).collect();
    let weak: Vec<f64> = probs.iter().zip(is_full).filter(|(_, &f)| !f).map(|(&p, _)| p).collect();
    let loss = domain_loss(&full, &weak);
    let mut grad = Tensor::zeros(logits.shape);
    for (k, (&p, &f)) in probs.iter().zip(is_full).enumerate() {
        let clamped = !(DISC_CLAMP..=1.0 - DISC_CLAMP).contains(&p);
        let g = match (f, clamped) {
            (_, true) => 0.0,
            (true, false) => (p - 1.0) / n_full as f64,
            (false, false) => p / n_weak as f64,
        };
        grad.data[k] = T::of(g);
    }
    Ok((loss, grad))
}

/// Weights and switches of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_ft: f64,
    pub lambda_domain: f64,
    pub use_ft_loss: bool,
    pub use_domain_loss: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_ft: 5e-3,
            lambda_domain: 1e-3,
            use_ft_loss: true,
            use_domain_loss: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_ft >= 0.0 && self.lambda_domain >= 0.0) {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn effective_ft(&self) -> f64 {
        if self.use_ft_loss {
            self.lambda_ft
        } else {
            0.0
        }
    }

    pub fn effective_domain(&self) -> f64 {
        if self.use_domain_loss {
            self.lambda_domain
        } else {
            0.0
        }
    }
}

/// `L = L_p + λ1 L_ft + λ2 L_d`, with disabled terms dropped.
pub fn total_loss(l_p: f64, l_ft: f64, l_d: f64, weights: &LossWeights) -> f64 {
    let mut total = l_p;
    if weights.use_ft_loss {
        total += weights.lambda_ft * l_ft;
    }
    if weights.use_domain_loss {
        total += weights.lambda_domain * l_d;
    }
    total
}

/// One row of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: usize,
    pub l_p: f64,
    pub l_ft: f64,
    pub l_d: f64,
    pub total: f64,
    pub lr: f64,
}
