use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::LabeledFrame;

/// Symmetric jitter magnitudes. Brightness, contrast and saturation are
/// relative factors (`1 ± range`); hue is a fraction of a full turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            brightness: 0.3,
            contrast: 0.3,
            saturation: 0.3,
            hue: 0.05,
        }
    }
}

impl AugmentConfig {
    pub const NONE: AugmentConfig = AugmentConfig {
        brightness: 0.0,
        contrast: 0.0,
        saturation: 0.0,
        hue: 0.0,
    };
}

/// One draw of photometric jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
}

impl Jitter {
    pub fn sample(config: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let mut draw = |r: f32| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        Jitter {
            brightness: 1.0 + draw(config.brightness),
            contrast: 1.0 + draw(config.contrast),
            saturation: 1.0 + draw(config.saturation),
            hue: draw(config.hue),
        }
    }

    /// Applies the jitter to an 8-bit image, producing HWC floats in [0, 1].
    pub fn apply(&self, image: &RgbImage) -> Vec<f32> {
        let mut px: Vec<f32> = image.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        if self.brightness != 1.0 {
            px.iter_mut().for_each(|v| *v *= self.brightness);
        }
        if self.contrast != 1.0 {
            let n = px.len() / 3;
            let mean = px
                .chunks_exact(3)
                .map(|c| luma(c[0], c[1], c[2]))
                .sum::<f32>()
                / n.max(1) as f32;
            px.iter_mut().for_each(|v| *v = mean + (*v - mean) * self.contrast);
        }
        if self.saturation != 1.0 {
            for c in px.chunks_exact_mut(3) {
                let y = luma(c[0], c[1], c[2]);
                for v in c.iter_mut() {
                    *v = y + (*v - y) * self.saturation;
                }
            }
        }
        if self.hue != 0.0 {
            // Rotate chroma in YIQ space.
            let (s, co) = (std::f32::consts::TAU * self.hue).sin_cos();
            for c in px.chunks_exact_mut(3) {
                let y = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
                let i = 0.596 * c[0] - 0.274 * c[1] - 0.322 * c[2];
                let q = 0.211 * c[0] - 0.523 * c[1] + 0.312 * c[2];
                let (i, q) = (co * i - s * q, s * i + co * q);
                c[0] = y + 0.956 * i + 0.621 * q;
                c[1] = y - 0.272 * i - 0.647 * q;
                c[2] = y - 1.106 * i + 1.703 * q;
            }
        }
        px.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        px
    }
}

fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Photometric jitter of the image only; every label is carried over
/// untouched.
pub fn augment(frame: &LabeledFrame, seed: u64, config: &AugmentConfig) -> LabeledFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Jitter::sample(config, &mut rng);
    let px = jitter.apply(&frame.image);
    let bytes = px.iter().map(|&v| (v * 255.0).round() as u8).collect();
    LabeledFrame {
        image: RgbImage::from_raw(frame.image.width(), frame.image.height(), bytes)
            .expect("same dimensions"),
        ..frame.clone()
    }
}
