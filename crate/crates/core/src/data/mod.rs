//! Fully and weakly labeled frame containers, pressure discretization,
//! photometric augmentation and batch assembly.

mod augment;
mod batch;
mod binning;
mod frame;

pub use augment::{augment, AugmentConfig, Jitter};
pub use batch::{make_batches, Batch, BatchStream};
pub use binning::{argmax, PressureBinning, CONTACT_THRESHOLD_KPA, NUM_BINS};
pub use frame::{load_meta, load_split, LabeledFrame};

use crate::error::{Error, Result};
use crate::types::Wrench;

/// Force/torque balance constant: pooled σ of force components divided by
/// pooled σ of torque components.
///
/// Each axis is centered on its own mean before pooling, so a set of
/// identical wrenches has zero spread. Values are sorted before summation so
/// the result does not depend on the order of the wrenches.
pub fn compute_ft_scale<'a>(wrenches: impl IntoIterator<Item = &'a Wrench>) -> Result<f64> {
    let mut axes: [Vec<f64>; 6] = Default::default();
    for w in wrenches {
        for (axis, v) in axes.iter_mut().zip(w.0) {
            axis.push(v);
        }
    }
    if axes[0].is_empty() {
        return Err(Error::Degenerate("no wrenches to compute the force/torque scale".into()));
    }
    let (force_axes, torque_axes) = axes.split_at_mut(3);
    let sigma_t = pooled_std(torque_axes);
    if sigma_t == 0.0 {
        return Err(Error::Degenerate("torque variance is zero".into()));
    }
    let sigma_f = pooled_std(force_axes);
    if sigma_f == 0.0 {
        return Err(Error::Degenerate("force variance is zero".into()));
    }
    Ok(sigma_f / sigma_t)
}

/// Root of the mean per-axis population variance. Sorts each axis in place.
pub fn pooled_std(axes: &mut [Vec<f64>]) -> f64 {
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for values in axes.iter_mut() {
        if values.is_empty() {
            continue;
        }
        values.sort_by(|a, b| a.total_cmp(b));
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        sum_sq += values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        count += values.len();
    }
    if count == 0 {
        return 0.0;
    }
    (sum_sq / count as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_definition() {
        // Force components ±2 N and torque components ±0.25 Nm, zero mean.
        let ws = [
            Wrench::new([2.0, 2.0, 2.0], [0.25, 0.25, 0.25]),
            Wrench::new([-2.0, -2.0, -2.0], [-0.25, -0.25, -0.25]),
        ];
        let c = compute_ft_scale(&ws).unwrap();
        assert!((c - 8.0).abs() < 1e-12);
    }

    #[test]
    fn identical_wrenches_are_degenerate() {
        let ws = vec![Wrench::new([0.0, 0.0, 1.0], [0.1, 0.0, 0.0]); 5];
        assert!(matches!(compute_ft_scale(&ws), Err(Error::Degenerate(_))));
        assert!(compute_ft_scale(&[]).is_err());
    }

    #[test]
    fn order_invariant() {
        let mut ws: Vec<Wrench> = (0..37)
            .map(|i| {
                let x = i as f64;
                Wrench::new([0.0, 0.0, (x * 0.37).sin() * 4.0 + 3.0], [0.01 * x, -(x * 0.11).cos() * 0.2, 0.0])
            })
            .collect();
        let a = compute_ft_scale(&ws).unwrap();
        ws.reverse();
        ws.swap(3, 20);
        assert_eq!(a, compute_ft_scale(&ws).unwrap());
    }
}
