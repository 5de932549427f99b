use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::PressureImage;

pub const NUM_BINS: usize = 9;

/// Pressure above this is contact (kPa); also the upper edge of bin 0.
pub const CONTACT_THRESHOLD_KPA: f64 = 1.0;

/// Discretization of pressure into [`NUM_BINS`] classes.
///
/// Bin `k` covers `[edges[k], edges[k+1])`; the last bin also absorbs
/// everything above the top edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureBinning {
    edges: [f64; NUM_BINS + 1],
    representatives: [f64; NUM_BINS],
}

impl Default for PressureBinning {
    /// `0`, then nine log-spaced edges from 1 kPa to 40 kPa.
    fn default() -> Self {
        let mut edges = [0.0; NUM_BINS + 1];
        let (lo, hi) = (CONTACT_THRESHOLD_KPA.ln(), 40f64.ln());
        for (k, e) in edges.iter_mut().enumerate().skip(1) {
            *e = (lo + (hi - lo) * (k - 1) as f64 / (NUM_BINS - 1) as f64).exp();
        }
        edges[1] = CONTACT_THRESHOLD_KPA;
        edges[NUM_BINS] = 40.0;
        PressureBinning::from_edges(&edges).expect("default edges are valid")
    }
}

impl PressureBinning {
    pub fn from_edges(edges: &[f64]) -> Result<Self> {
        if edges.len() != NUM_BINS + 1 {
            return Err(Error::Config(format!(
                "expected {} bin edges, got {}",
                NUM_BINS + 1,
                edges.len()
            )));
        }
        if edges[0] != 0.0 || edges[1] != CONTACT_THRESHOLD_KPA {
            return Err(Error::Config(
                "bin edges must start at 0 and place the contact threshold second".into(),
            ));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("bin edges must be strictly increasing".into()));
        }
        let mut e = [0.0; NUM_BINS + 1];
        e.copy_from_slice(edges);
        let mut representatives = [0.0; NUM_BINS];
        for k in 1..NUM_BINS {
            representatives[k] = (e[k] * e[k + 1]).sqrt();
        }
        Ok(PressureBinning {
            edges: e,
            representatives,
        })
    }

    pub fn edges(&self) -> &[f64; NUM_BINS + 1] {
        &self.edges
    }

    /// Decoded kPa value of each bin: 0 for bin 0, geometric mean of the
    /// edges otherwise.
    pub fn representatives(&self) -> &[f64; NUM_BINS] {
        &self.representatives
    }

    #[inline]
    pub fn bin_of(&self, kpa: f64) -> u8 {
        // Largest k with edges[k] <= p.
        let mut k = 0;
        while k + 1 < NUM_BINS && self.edges[k + 1] <= kpa {
            k += 1;
        }
        k as u8
    }

    pub fn bin_pressure(&self, pressure: &PressureImage) -> Result<Vec<u8>> {
        pressure
            .data()
            .iter()
            .map(|&p| {
                if p < 0.0 || p.is_nan() {
                    Err(Error::InvalidInput(format!("negative pressure {p} kPa")))
                } else {
                    Ok(self.bin_of(p as f64))
                }
            })
            .collect()
    }

    pub fn unbin_indices(&self, bins: &[u8], width: usize, height: usize) -> Result<PressureImage> {
        if bins.len() != width * height {
            return Err(Error::shape(width * height, bins.len()));
        }
        let data = bins
            .iter()
            .map(|&b| {
                self.representatives
                    .get(b as usize)
                    .map(|&v| v as f32)
                    .ok_or_else(|| Error::InvalidInput(format!("bin index {b} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        PressureImage::from_vec(width, height, data)
    }

    /// Decodes per-pixel bin distributions laid out as `[pixel][bin]`.
    pub fn unbin_distribution(&self, probs: &[f32], width: usize, height: usize) -> Result<PressureImage> {
        if probs.len() != width * height * NUM_BINS {
            return Err(Error::shape(width * height * NUM_BINS, probs.len()));
        }
        let mut bins = Vec::with_capacity(width * height);
        for (i, rho) in probs.chunks_exact(NUM_BINS).enumerate() {
            let total: f64 = rho.iter().map(|&p| p as f64).sum();
            if (total - 1.0).abs() > 1e-4 {
                return Err(Error::InvalidInput(format!(
                    "distribution at pixel {i} sums to {total}"
                )));
            }
            bins.push(argmax(rho) as u8);
        }
        self.unbin_indices(&bins, width, height)
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}
