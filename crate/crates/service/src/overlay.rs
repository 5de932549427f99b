//! Server-side rendering of frames and pressure overlays.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{ImageFormat, Rgb, RgbImage};
use viper_core::PressureImage;

/// Pressure mapped to full colour and full opacity.
pub const OVERLAY_MAX_KPA: f32 = 40.0;
/// Blend weight at full scale; weaker pressure blends proportionally less.
const MAX_ALPHA: f32 = 0.85;

/// Black → red → yellow → white ramp over `t ∈ [0, 1]`.
fn heat(t: f32) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0) * 3.0;
    [t.min(1.0), (t - 1.0).clamp(0.0, 1.0), (t - 2.0).clamp(0.0, 1.0)]
}

/// Alpha-blends a heat map of `pressure` onto `frame`. Pixels without
/// pressure keep the camera colour.
pub fn render_overlay(frame: &RgbImage, pressure: &PressureImage) -> RgbImage {
    let mut out = frame.clone();
    if pressure.width() != frame.width() as usize || pressure.height() != frame.height() as usize {
        return out;
    }
    for (u, v, px) in out.enumerate_pixels_mut() {
        let p = pressure.get(u as usize, v as usize);
        if p <= 0.0 {
            continue;
        }
        let t = (p / OVERLAY_MAX_KPA).sqrt().min(1.0);
        let alpha = MAX_ALPHA * (0.35 + 0.65 * t);
        let c = heat(0.15 + 0.85 * t);
        *px = Rgb(std::array::from_fn(|k| {
            let base = px.0[k] as f32;
            (base * (1.0 - alpha) + 255.0 * c[k] * alpha).round().clamp(0.0, 255.0) as u8
        }));
    }
    out
}

pub fn png_base64(img: &RgbImage) -> Result<String, image::ImageError> {
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, ImageFormat::Png)?;
    Ok(STANDARD.encode(bytes.into_inner()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_pressure_leaves_frame_untouched() {
        let frame = RgbImage::from_fn(4, 3, |x, y| Rgb([x as u8 * 40, y as u8 * 60, 7]));
        let out = render_overlay(&frame, &PressureImage::zeros(4, 3));
        assert_eq!(out, frame);
    }

    #[test]
    fn pressure_tints_only_loaded_pixels() {
        let frame = RgbImage::from_pixel(2, 1, Rgb([10, 10, 10]));
        let p = PressureImage::from_vec(2, 1, vec![0.0, 40.0]).unwrap();
        let out = render_overlay(&frame, &p);
        assert_eq!(out.get_pixel(0, 0), &Rgb([10, 10, 10]));
        let hot = out.get_pixel(1, 0);
        assert!(hot.0[0] > 200 && hot.0[1] > 200);
    }

    #[test]
    fn png_round_trips() {
        let frame = RgbImage::from_fn(5, 5, |x, y| Rgb([x as u8, y as u8, (x * y) as u8]));
        let encoded = png_base64(&frame).unwrap();
        let bytes = STANDARD.decode(encoded).unwrap();
        let back = image::load_from_memory(&bytes).unwrap().to_rgb8();
        assert_eq!(back, frame);
    }
}
