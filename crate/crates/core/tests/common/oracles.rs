//! Independent recomputations of the metrics and of the force bookkeeping.

use nalgebra::{Point3, Rotation3, Vector2, Vector3};
use rand::Rng;
use viper_core::geometry::Pixel;
use viper_core::synthworld::{resolve_contact, ContactState, GripperState, OracleSample, World};
use viper_core::types::kpa_area_to_newtons;
use viper_core::{PressureImage, Wrench};

/// Pressure map of quarter-kPa steps with some empty pixels, so every sum
/// is exact in floating point whatever the order.
pub fn dyadic_map(rng: &mut impl Rng, w: usize, h: usize) -> PressureImage {
    let data = (0..w * h)
        .map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0..160) as f32 * 0.25 })
        .collect();
    PressureImage::from_vec(w, h, data).unwrap()
}

pub fn brute_iou(p: &PressureImage, q: &PressureImage) -> f64 {
    let mut inter = 0.0;
    let mut union = 0.0;
    for v in 0..p.height() {
        for u in 0..p.width() {
            let (a, b) = (p.get(u, v) as f64, q.get(u, v) as f64);
            if a <= b {
                inter += a;
                union += b;
            } else {
                inter += b;
                union += a;
            }
        }
    }
    if union == 0.0 {
        1.0
    } else {
        inter / union
    }
}

pub fn brute_accuracy(pred: &[bool], truth: &[bool]) -> f64 {
    let mut hits = 0;
    for i in 0..pred.len() {
        if pred[i] == truth[i] {
            hits += 1;
        }
    }
    hits as f64 / pred.len() as f64
}

pub fn brute_rmse(pred: &[Wrench], truth: &[Wrench], offset: usize) -> f64 {
    let mut sq = Vec::new();
    for (p, t) in pred.iter().zip(truth) {
        for axis in offset..offset + 3 {
            sq.push((p.0[axis] - t.0[axis]) * (p.0[axis] - t.0[axis]));
        }
    }
    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
}

pub fn random_wrench(rng: &mut impl Rng) -> Wrench {
    let mut w = [0.0; 6];
    for (i, v) in w.iter_mut().enumerate() {
        let scale = if i < 3 { 10.0 } else { 0.5 };
        *v = rng.random_range(-scale..scale);
    }
    Wrench(w)
}

/// Wrench from the grid by explicit 3-D cross products in the world frame,
/// rotated into the level yaw-aligned wrist frame afterwards.
pub fn oracle_wrench(contact: &ContactState, gripper: &GripperState) -> Wrench {
    let grid = &contact.grid;
    let world_from_grid = contact.frame.world_from_grid();
    let wrist = Vector3::new(gripper.wrist.x, gripper.wrist.y, gripper.wrist.z);
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let p = grid.values[iy * grid.nx + ix];
            if p == 0.0 {
                continue;
            }
            let local = Point3::new((ix as f64 + 0.5) * grid.cell, (iy as f64 + 0.5) * grid.cell, 0.0);
            let at = world_from_grid * local;
            let f = Vector3::new(0.0, 0.0, kpa_area_to_newtons(p * grid.cell * grid.cell));
            force += f;
            torque += (at.coords - wrist).cross(&f);
        }
    }
    let level = Rotation3::from_axis_angle(&Vector3::z_axis(), -gripper.wrist.yaw);
    let (f, t) = (level * force, level * torque);
    Wrench::new([f.x, f.y, f.z], [t.x, t.y, t.z])
}

fn shoelace(corners: &[Vector2<f64>; 4]) -> f64 {
    let mut twice = 0.0;
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice.abs()
}

/// Force recovered from the rendered pressure image: each pixel's pressure
/// times the table area that pixel sees. `None` when the sample has no
/// contact or part of the loaded patch falls outside the frame.
pub fn projected_force(world: &World, s: &OracleSample) -> Option<f64> {
    let camera = world.camera();
    let (w, h) = (camera.width as f64, camera.height as f64);
    let contact = resolve_contact(&s.meta.gripper, world.config()).unwrap();
    if !contact.any_contact() {
        assert!(s.pressure.is_zero());
        return None;
    }
    let plane = world.grid_plane(&s.meta.gripper, &contact).unwrap();
    let grid = &contact.grid;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            if grid.values[iy * grid.nx + ix] == 0.0 {
                continue;
            }
            for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                let c = Vector2::new((ix as f64 + dx) * grid.cell, (iy as f64 + dy) * grid.cell);
                let px = plane.project(camera, &c).unwrap();
                if !(px.x > 0.0 && px.y > 0.0 && px.x < w && px.y < h) {
                    return None;
                }
            }
        }
    }
    let mut force = 0.0;
    for v in 0..camera.height {
        for u in 0..camera.width {
            let p = s.pressure.get(u, v) as f64;
            if p == 0.0 {
                continue;
            }
            let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
                .map(|(du, dv)| plane.backproject(camera, &Pixel::new(u as f64 + du, v as f64 + dv)).unwrap());
            force += kpa_area_to_newtons(p * shoelace(&corners));
        }
    }
    Some(force)
}
