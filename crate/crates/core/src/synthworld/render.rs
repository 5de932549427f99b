use image::RgbImage;
use nalgebra::{Isometry3, Point3, Vector2, Vector3};

use super::config::WorldConfig;
use super::contact::{ContactState, GripperState};
use super::scene::{Color, OverlayHit, Scene};
use crate::error::Result;
use crate::geometry::{CameraModel, PlaneFrame};

/// What a pixel shows, before gripper parts are composited on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Layer {
    /// Ray misses the table.
    Void,
    Background,
    SensorPad,
    Fiducial,
    Distractor,
    Object,
    Flexure,
    Fingertip,
}

const VOID_COLOR: Color = [0.12, 0.12, 0.13];
const RUBBER: Color = [0.14, 0.14, 0.16];
const STEEL: Color = [0.62, 0.64, 0.68];
const SHEEN: Color = [0.78, 0.56, 0.38];
const FLEXURE_WIDTH: f64 = 0.003;

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: RgbImage,
    /// Final RGB in [0, 1], row-major HWC, before 8-bit quantization.
    pub linear: Vec<f32>,
    pub layers: Vec<Layer>,
    /// Per-pixel coverage of any gripper part (flexures, pads), in [0, 1].
    pub gripper_coverage: Vec<f32>,
    /// Per-pixel coverage of the fingertip pads only.
    pub pad_coverage: Vec<f32>,
}

/// Camera pose in the world for a given wrist pose.
pub fn camera_from_world(gripper: &GripperState, camera: &CameraModel) -> Isometry3<f64> {
    (gripper.wrist.world_from_wrist() * camera.wrist_from_camera).inverse()
}

/// Frame of the table plane (world z = 0) as seen from the camera.
pub fn table_frame(gripper: &GripperState, camera: &CameraModel) -> Result<PlaneFrame> {
    PlaneFrame::new(camera_from_world(gripper, camera))
}

/// Image-space footprint of one fingertip pad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PadFootprint {
    pub center: Vector2<f64>,
    /// Horizontal and vertical semi-axes (px).
    pub semi_axes: [f64; 2],
    pub depth: f64,
    /// Radius of the loaded contact sheen (px); zero when unloaded.
    pub sheen_radius: f64,
    pub sheen_alpha: f32,
}

/// Pad footprints for both fingertips. The horizontal semi-axis grows with
/// normal force through both flattening and the upward deflection that
/// brings the pad closer to the camera.
pub fn pad_footprints(
    gripper: &GripperState,
    contact: &ContactState,
    camera: &CameraModel,
    config: &WorldConfig,
) -> Result<[PadFootprint; 2]> {
    let cam_world = camera_from_world(gripper, camera);
    let rest = gripper.rest_tips(config);
    let pad_r = config.gripper.pad_radius;
    let mut out = [None, None];
    for i in 0..2 {
        let tip = &contact.tips[i];
        let lift = tip.deflection(&gripper.fingertip);
        let center_w = rest[i] + Vector3::new(0.0, 0.0, lift + pad_r);
        let center_c = cam_world.transform_point(&Point3::from(center_w));
        let center = camera.project_point(&center_c)?;
        let a = camera.fx * (pad_r + 0.6 * tip.radius) / center_c.z;
        let b = camera.fy * pad_r / center_c.z;
        let (sheen_radius, sheen_alpha) = if tip.in_contact && tip.radius > 0.0 {
            let peak_kpa = 2.0 * tip.normal_force / (std::f64::consts::PI * tip.radius * tip.radius) / 1000.0;
            (
                0.9 * camera.fx * tip.radius / center_c.z,
                (peak_kpa / 30.0).clamp(0.2, 0.9) as f32,
            )
        } else {
            (0.0, 0.0)
        };
        out[i] = Some(PadFootprint {
            center,
            semi_axes: [a, b],
            depth: center_c.z,
            sheen_radius,
            sheen_alpha,
        });
    }
    Ok([out[0].unwrap(), out[1].unwrap()])
}

/// Renders the wrist camera view.
///
/// The table (background, sensor mat, clutter, target) is ray cast at each
/// pixel center; flexures and fingertip pads are composited with
/// anti-aliased coverage; the scene lighting gain and tint are applied last.
pub fn render(
    scene: &Scene,
    gripper: &GripperState,
    contact: &ContactState,
    camera: &CameraModel,
    config: &WorldConfig,
) -> Result<RenderOutput> {
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let plane = table_frame(gripper, camera)?;

    let mut base = vec![[0.0f32; 3]; w * h];
    let mut layers = vec![Layer::Void; w * h];
    for v in 0..h {
        for u in 0..w {
            let px = Vector2::new(u as f64 + 0.5, v as f64 + 0.5);
            let idx = v * w + u;
            let Ok(p) = plane.backproject(camera, &px) else {
                base[idx] = VOID_COLOR;
                continue;
            };
            let (color, layer) = table_color(scene, p.x, p.y);
            base[idx] = color;
            layers[idx] = layer;
        }
    }

    let mut gripper_coverage = vec![0.0f32; w * h];
    let mut pad_coverage = vec![0.0f32; w * h];
    let pads = pad_footprints(gripper, contact, camera, config)?;
    let cam_world = camera_from_world(gripper, camera);
    let world_wrist = gripper.wrist.world_from_wrist();
    let x_axis = world_wrist.rotation * Vector3::x();

    for (i, pad) in pads.iter().enumerate() {
        let side = if i == 0 { -1.0 } else { 1.0 };
        let tip = &contact.tips[i];
        let mount = world_wrist.transform_point(&Point3::new(
            side * 0.5 * gripper.aperture,
            0.0,
            -config.gripper.flexure_mount_drop,
        ));
        let rest = gripper.rest_tips(config)[i];
        let top = rest
            + Vector3::new(
                0.0,
                0.0,
                tip.deflection(&gripper.fingertip) + 2.0 * config.gripper.pad_radius,
            );
        let bow = x_axis * (side * config.gripper.flexure_bow_per_newton * tip.normal_force);
        let ctrl = (mount.coords + top) * 0.5 + bow;
        let mut polyline = Vec::with_capacity(13);
        for k in 0..=12 {
            let t = k as f64 / 12.0;
            let p = mount.coords * ((1.0 - t) * (1.0 - t)) + ctrl * (2.0 * t * (1.0 - t)) + top * (t * t);
            let pc = cam_world.transform_point(&Point3::from(p));
            if let Ok(px) = camera.project_point(&pc) {
                polyline.push((px, camera.fx * FLEXURE_WIDTH * 0.5 / pc.z));
            }
        }
        draw_polyline(&polyline, STEEL, &mut base, &mut gripper_coverage, &mut layers, w, h);
        draw_pad(pad, &mut base, &mut gripper_coverage, &mut pad_coverage, &mut layers, w, h);
    }

    let gains = scene.lighting.tint.map(|t| scene.lighting.gain * t);
    let mut linear = Vec::with_capacity(w * h * 3);
    for c in &base {
        for k in 0..3 {
            linear.push((c[k] * gains[k]).clamp(0.0, 1.0));
        }
    }
    let bytes: Vec<u8> = linear.iter().map(|&v| (v * 255.0).round() as u8).collect();
    let image = RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer sized to image");

    Ok(RenderOutput {
        image,
        linear,
        layers,
        gripper_coverage,
        pad_coverage,
    })
}

fn table_color(scene: &Scene, x: f64, y: f64) -> (Color, Layer) {
    if let Some(obj) = &scene.object {
        if obj.contains(x, y) {
            return (obj.color, Layer::Object);
        }
    }
    for d in scene.distractors.iter().rev() {
        if d.contains(x, y) {
            return (d.color, Layer::Distractor);
        }
    }
    if let Some(overlay) = &scene.sensor_overlay {
        if let Some((hit, color)) = overlay.hit(x, y) {
            let layer = match hit {
                OverlayHit::Pad => Layer::SensorPad,
                OverlayHit::Fiducial => Layer::Fiducial,
            };
            return (color, layer);
        }
    }
    (scene.background.color_at(x, y), Layer::Background)
}

fn blend(dst: &mut Color, src: Color, alpha: f32) {
    for k in 0..3 {
        dst[k] += (src[k] - dst[k]) * alpha;
    }
}

fn draw_pad(
    pad: &PadFootprint,
    base: &mut [Color],
    gripper_cov: &mut [f32],
    pad_cov: &mut [f32],
    layers: &mut [Layer],
    w: usize,
    h: usize,
) {
    let [a, b] = pad.semi_axes;
    let reach = a.max(b) + 1.0;
    let (u0, u1, v0, v1) = bbox(pad.center, reach, w, h);
    for v in v0..v1 {
        for u in u0..u1 {
            let dx = u as f64 + 0.5 - pad.center.x;
            let dy = v as f64 + 0.5 - pad.center.y;
            let cov = ellipse_coverage(dx, dy, a, b);
            if cov <= 0.0 {
                continue;
            }
            let idx = v * w + u;
            blend(&mut base[idx], RUBBER, cov);
            if pad.sheen_radius > 0.0 {
                let s = ellipse_coverage(dx, dy, pad.sheen_radius, pad.sheen_radius * b / a);
                if s > 0.0 {
                    blend(&mut base[idx], SHEEN, s * pad.sheen_alpha * cov);
                }
            }
            gripper_cov[idx] = gripper_cov[idx].max(cov);
            pad_cov[idx] = pad_cov[idx].max(cov);
            if cov >= 0.5 {
                layers[idx] = Layer::Fingertip;
            }
        }
    }
}

fn draw_polyline(
    line: &[(Vector2<f64>, f64)],
    color: Color,
    base: &mut [Color],
    gripper_cov: &mut [f32],
    layers: &mut [Layer],
    w: usize,
    h: usize,
) {
    if line.len() < 2 {
        return;
    }
    let max_half = line.iter().map(|p| p.1).fold(0.0, f64::max);
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (p, _) in line {
        umin = umin.min(p.x);
        umax = umax.max(p.x);
        vmin = vmin.min(p.y);
        vmax = vmax.max(p.y);
    }
    let pad = max_half + 1.0;
    let u0 = (umin - pad).floor().max(0.0) as usize;
    let v0 = (vmin - pad).floor().max(0.0) as usize;
    let u1 = ((umax + pad).ceil().max(0.0) as usize).min(w);
    let v1 = ((vmax + pad).ceil().max(0.0) as usize).min(h);
    for v in v0..v1 {
        for u in u0..u1 {
            let p = Vector2::new(u as f64 + 0.5, v as f64 + 0.5);
            let mut best = 0.0f32;
            for seg in line.windows(2) {
                let (a, ha) = seg[0];
                let (b, hb) = seg[1];
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared().max(1e-12)).clamp(0.0, 1.0);
                let d = (p - (a + ab * t)).norm();
                let half = ha + (hb - ha) * t;
                best = best.max((half + 0.5 - d).clamp(0.0, 1.0) as f32);
            }
            if best > 0.0 {
                let idx = v * w + u;
                blend(&mut base[idx], color, best);
                gripper_cov[idx] = gripper_cov[idx].max(best);
                if best >= 0.5 {
                    layers[idx] = Layer::Flexure;
                }
            }
        }
    }
}

/// Anti-aliased coverage of an axis-aligned ellipse at offset `(dx, dy)`
/// from its center: one pixel wide linear ramp across the boundary.
fn ellipse_coverage(dx: f64, dy: f64, a: f64, b: f64) -> f32 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let q = ((dx / a).powi(2) + (dy / b).powi(2)).sqrt();
    let r = (dx * dx + dy * dy).sqrt();
    // Boundary radius along the direction of (dx, dy).
    let boundary = if q > 0.0 { r / q } else { a.min(b) };
    (boundary - r + 0.5).clamp(0.0, 1.0) as f32
}

fn bbox(center: Vector2<f64>, reach: f64, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let u0 = (center.x - reach).floor().max(0.0) as usize;
    let v0 = (center.y - reach).floor().max(0.0) as usize;
    let u1 = ((center.x + reach).ceil().max(0.0) as usize).min(w);
    let v1 = ((center.y + reach).ceil().max(0.0) as usize).min(h);
    (u0, u1, v0, v1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthworld::config::FingertipParams;
    use crate::synthworld::contact::{resolve_contact, FingertipContact, WristPose};
    use crate::synthworld::scene::{sample_scene, Split, TexturePools};
    use crate::types::Domain;

    fn setup(domain: Domain) -> (WorldConfig, Scene, GripperState, CameraModel) {
        let config = WorldConfig::default().with_image_size(64);
        let pools = TexturePools::build(&config);
        let scene = sample_scene(11, domain, Split::Train, &config, &pools).unwrap();
        let gripper = GripperState {
            wrist: WristPose {
                x: 0.0,
                y: 0.0,
                z: config.touch_height() - 0.01,
                yaw: 0.3,
                roll: 0.0,
            },
            aperture: 0.07,
            fingertip: FingertipParams::default(),
        };
        let camera = config.camera_model().unwrap();
        (config, scene, gripper, camera)
    }

    fn with_force(contact: &ContactState, force: f64, params: &FingertipParams) -> ContactState {
        let mut c = contact.clone();
        for t in &mut c.tips {
            *t = FingertipContact {
                in_contact: force > 0.0,
                penetration: force / params.stiffness,
                normal_force: force,
                center: t.center,
                radius: if force > 0.0 { params.patch_scale * force.cbrt() } else { 0.0 },
            };
        }
        c
    }

    #[test]
    fn load_only_changes_gripper_pixels() {
        let (config, scene, gripper, camera) = setup(Domain::WeaklyLabeled);
        let contact = resolve_contact(&gripper, &config).unwrap();
        let unloaded = with_force(&contact, 0.0, &gripper.fingertip);
        let loaded = with_force(&contact, 4.0, &gripper.fingertip);
        let a = render(&scene, &gripper, &unloaded, &camera, &config).unwrap();
        let b = render(&scene, &gripper, &loaded, &camera, &config).unwrap();
        let mut changed = 0;
        for i in 0..a.layers.len() {
            let differs = (0..3).any(|k| a.linear[3 * i + k] != b.linear[3 * i + k]);
            if differs {
                changed += 1;
                assert!(
                    a.gripper_coverage[i] > 0.0 || b.gripper_coverage[i] > 0.0,
                    "pixel {i} changed outside the gripper"
                );
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn brightness_gain_scales_background() {
        let (config, mut scene, mut gripper, camera) = setup(Domain::WeaklyLabeled);
        gripper.wrist.z = config.touch_height() + 0.03;
        let contact = resolve_contact(&gripper, &config).unwrap();
        scene.lighting = super::super::scene::Lighting::default();
        let a = render(&scene, &gripper, &contact, &camera, &config).unwrap();
        scene.lighting.gain = 1.5;
        let b = render(&scene, &gripper, &contact, &camera, &config).unwrap();
        for i in 0..a.layers.len() {
            if a.layers[i] == Layer::Background && a.gripper_coverage[i] == 0.0 {
                for k in 0..3 {
                    assert_eq!(b.linear[3 * i + k], (1.5 * a.linear[3 * i + k]).min(1.0));
                }
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let (config, scene, gripper, camera) = setup(Domain::FullyLabeled);
        let contact = resolve_contact(&gripper, &config).unwrap();
        let a = render(&scene, &gripper, &contact, &camera, &config).unwrap();
        let b = render(&scene, &gripper, &contact, &camera, &config).unwrap();
        assert_eq!(a.image.as_raw(), b.image.as_raw());
    }

    #[test]
    fn sensor_overlay_visible_only_in_full_domain() {
        for domain in [Domain::FullyLabeled, Domain::WeaklyLabeled] {
            let (config, scene, gripper, camera) = setup(domain);
            let contact = resolve_contact(&gripper, &config).unwrap();
            let out = render(&scene, &gripper, &contact, &camera, &config).unwrap();
            let overlay = out
                .layers
                .iter()
                .any(|l| matches!(l, Layer::SensorPad | Layer::Fiducial));
            assert_eq!(overlay, domain == Domain::FullyLabeled);
        }
    }

    #[test]
    fn pad_width_grows_with_force() {
        let (config, scene, gripper, camera) = setup(Domain::FullyLabeled);
        let contact = resolve_contact(&gripper, &config).unwrap();
        let mut prev_axis = 0.0;
        let mut prev_area = 0.0f32;
        for step in 0..=16 {
            let f = step as f64 * 0.5;
            let c = with_force(&contact, f, &gripper.fingertip);
            let pad = pad_footprints(&gripper, &c, &camera, &config).unwrap()[0];
            assert!(pad.semi_axes[0] > prev_axis, "analytic width at {f} N");
            prev_axis = pad.semi_axes[0];

            // Rendered footprint of the left pad only.
            let out = render(&scene, &gripper, &c, &camera, &config).unwrap();
            let mut area = 0.0f32;
            for v in 0..64 {
                for u in 0..64 {
                    let near = (u as f64 + 0.5 - pad.center.x).abs() < 12.0
                        && (v as f64 + 0.5 - pad.center.y).abs() < 12.0;
                    if near {
                        area += out.pad_coverage[v * 64 + u];
                    }
                }
            }
            assert!(area > prev_area, "rendered footprint at {f} N: {area} <= {prev_area}");
            prev_area = area;
        }
    }
}
