//! Pinhole camera, table-plane frames and the projections between them.
//!
//! Pixel coordinates are continuous: pixel `(i, j)` covers
//! `[i, i+1) × [j, j+1)` and the optical axis lands on `(cx, cy)`.

use nalgebra::{Isometry3, Matrix3, Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PressureGrid, PressureImage};

/// Continuous pixel coordinate `(u, v)`.
pub type Pixel = Vector2<f64>;

const MIN_DEPTH: f64 = 1e-9;

/// Rectified pinhole camera rigidly mounted on the wrist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Pose of the camera expressed in the wrist frame.
    pub wrist_from_camera: Isometry3<f64>,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        wrist_from_camera: Isometry3<f64>,
    ) -> Result<Self> {
        let camera = CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            wrist_from_camera,
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Geometry(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Geometry("empty image size".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::Geometry(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Pinhole projection of a point given in camera coordinates.
    pub fn project_point(&self, p_cam: &Point3<f64>) -> Result<Pixel> {
        if p_cam.z <= MIN_DEPTH {
            return Err(Error::Geometry(format!(
                "point at depth {} is not in front of the camera",
                p_cam.z
            )));
        }
        Ok(Pixel::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }

    /// Viewing ray through `pixel`, scaled so its z component is 1.
    pub fn ray(&self, pixel: &Pixel) -> Vector3<f64> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            1.0,
        )
    }

    pub fn contains(&self, pixel: &Pixel) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }
}

/// Rigid transform from table-plane coordinates (m) to camera coordinates.
/// Plane points are `(x, y, 0)` in the plane's own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFrame {
    pub camera_from_plane: Isometry3<f64>,
}

impl PlaneFrame {
    pub fn new(camera_from_plane: Isometry3<f64>) -> Result<Self> {
        let r: Matrix3<f64> = camera_from_plane.rotation.to_rotation_matrix().into_inner();
        let err = (r * r.transpose() - Matrix3::identity()).norm();
        if err > 1e-9 {
            return Err(Error::Geometry(format!(
                "plane rotation is not orthonormal (|RRᵀ-I| = {err:e})"
            )));
        }
        Ok(PlaneFrame { camera_from_plane })
    }

    pub fn to_camera(&self, plane_xy: &Vector2<f64>) -> Point3<f64> {
        self.camera_from_plane
            .transform_point(&Point3::new(plane_xy.x, plane_xy.y, 0.0))
    }

    /// Image location of a plane point.
    pub fn project(&self, camera: &CameraModel, plane_xy: &Vector2<f64>) -> Result<Pixel> {
        camera.project_point(&self.to_camera(plane_xy))
    }

    /// Intersection of the viewing ray through `pixel` with the plane, in
    /// plane coordinates.
    pub fn backproject(&self, camera: &CameraModel, pixel: &Pixel) -> Result<Vector2<f64>> {
        let dir = camera.ray(pixel);
        let normal = self.camera_from_plane.rotation * Vector3::z();
        let origin = self.camera_from_plane.translation.vector;
        let denom = normal.dot(&dir);
        if denom.abs() < 1e-12 {
            return Err(Error::Geometry(format!(
                "ray through ({:.3}, {:.3}) is parallel to the plane",
                pixel.x, pixel.y
            )));
        }
        let s = normal.dot(&origin) / denom;
        if s <= MIN_DEPTH {
            return Err(Error::Geometry(format!(
                "ray through ({:.3}, {:.3}) meets the plane behind the camera",
                pixel.x, pixel.y
            )));
        }
        let hit = Point3::from(dir * s);
        let local = self.camera_from_plane.inverse_transform_point(&hit);
        Ok(Vector2::new(local.x, local.y))
    }
}

/// Maps an image-space error vector anchored at `at` onto the table plane.
///
/// Returns the displacement between the plane points seen through
/// `at + error` and `at`, in plane coordinates.
pub fn image_error_to_task_space(
    error: &Pixel,
    plane: &PlaneFrame,
    camera: &CameraModel,
    at: &Pixel,
) -> Result<Vector2<f64>> {
    let base = plane.backproject(camera, at)?;
    let moved = plane.backproject(camera, &(at + error))?;
    Ok(moved - base)
}

/// Splats a table-plane pressure grid into the image.
///
/// Every cell quad is projected and clipped against each pixel square; a
/// pixel receives the cell pressure weighted by the fraction of the pixel the
/// quad covers. Pressure·area is conserved up to the local variation of the
/// perspective scale across one cell.
pub fn project_pressure_grid(
    grid: &PressureGrid,
    plane: &PlaneFrame,
    camera: &CameraModel,
) -> Result<PressureImage> {
    let (w, h) = (camera.width, camera.height);
    let mut out = vec![0.0f64; w * h];

    let extent_x = grid.nx as f64 * grid.cell;
    let extent_y = grid.ny as f64 * grid.cell;
    let corners = [
        Vector2::new(0.0, 0.0),
        Vector2::new(extent_x, 0.0),
        Vector2::new(extent_x, extent_y),
        Vector2::new(0.0, extent_y),
    ];
    if corners.iter().all(|c| plane.to_camera(c).z <= MIN_DEPTH) {
        return Err(Error::Geometry("pressure plane lies entirely behind the camera".into()));
    }

    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let p = grid.get(ix, iy);
            if p == 0.0 {
                continue;
            }
            let x0 = ix as f64 * grid.cell;
            let y0 = iy as f64 * grid.cell;
            let mut quad = [[0.0f64; 2]; 4];
            for (k, (dx, dy)) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
                .into_iter()
                .enumerate()
            {
                let c = Vector2::new(x0 + dx * grid.cell, y0 + dy * grid.cell);
                let px = plane.project(camera, &c).map_err(|_| {
                    Error::Geometry(format!("loaded cell ({ix}, {iy}) is behind the camera"))
                })?;
                quad[k] = [px.x, px.y];
            }
            splat_quad(&quad, p, &mut out, w, h);
        }
    }

    PressureImage::from_vec(w, h, out.into_iter().map(|v| v as f32).collect())
}

fn splat_quad(quad: &[[f64; 2]; 4], value: f64, out: &mut [f64], w: usize, h: usize) {
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for q in quad {
        umin = umin.min(q[0]);
        umax = umax.max(q[0]);
        vmin = vmin.min(q[1]);
        vmax = vmax.max(q[1]);
    }
    if umax <= 0.0 || vmax <= 0.0 || umin >= w as f64 || vmin >= h as f64 {
        return;
    }
    let i0 = umin.floor().max(0.0) as usize;
    let j0 = vmin.floor().max(0.0) as usize;
    let i1 = (umax.ceil() as usize).min(w);
    let j1 = (vmax.ceil() as usize).min(h);

    let mut poly = Vec::with_capacity(8);
    let mut scratch = Vec::with_capacity(8);
    for j in j0..j1 {
        for i in i0..i1 {
            poly.clear();
            poly.extend_from_slice(quad);
            clip_to_box(
                &mut poly,
                &mut scratch,
                [i as f64, j as f64, i as f64 + 1.0, j as f64 + 1.0],
            );
            let area = polygon_area(&poly);
            if area > 0.0 {
                out[j * w + i] += value * area;
            }
        }
    }
}

/// Sutherland–Hodgman clip of a convex polygon against `[u0, v0, u1, v1]`.
fn clip_to_box(poly: &mut Vec<[f64; 2]>, scratch: &mut Vec<[f64; 2]>, bounds: [f64; 4]) {
    // (axis, bound, keep-if-greater)
    let edges = [
        (0usize, bounds[0], true),
        (0, bounds[2], false),
        (1, bounds[1], true),
        (1, bounds[3], false),
    ];
    for (axis, bound, greater) in edges {
        if poly.is_empty() {
            return;
        }
        scratch.clear();
        let inside = |p: &[f64; 2]| if greater { p[axis] >= bound } else { p[axis] <= bound };
        for k in 0..poly.len() {
            let cur = poly[k];
            let prev = poly[(k + poly.len() - 1) % poly.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                scratch.push([
                    prev[0] + t * (cur[0] - prev[0]),
                    prev[1] + t * (cur[1] - prev[1]),
                ]);
            }
            if ci {
                scratch.push(cur);
            }
        }
        std::mem::swap(poly, scratch);
    }
}

/// Unsigned shoelace area.
pub(crate) fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Translation3, UnitQuaternion};
    use proptest::prelude::*;

    fn camera(fx: f64, size: usize) -> CameraModel {
        CameraModel::new(
            fx,
            fx,
            size as f64 / 2.0,
            size as f64 / 2.0,
            size,
            size,
            Isometry3::identity(),
        )
        .unwrap()
    }

    /// Camera looking straight down at the plane from `height`; plane x maps
    /// to image u and plane y to image v.
    fn nadir(height: f64) -> PlaneFrame {
        PlaneFrame::new(Isometry3::from_parts(
            Translation3::new(0.0, 0.0, height),
            UnitQuaternion::identity(),
        ))
        .unwrap()
    }

    fn tilted(height: f64, pitch: f64, yaw: f64, offset: Vector2<f64>) -> PlaneFrame {
        let rot = UnitQuaternion::from_euler_angles(pitch, 0.0, yaw);
        let t = Translation3::new(offset.x, offset.y, height);
        PlaneFrame::new(Isometry3::from_parts(t, rot)).unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let cam = camera(100.0, 128);
        let px = cam.project_point(&Point3::new(0.0, 0.0, 0.5)).unwrap();
        assert_eq!(px, Pixel::new(64.0, 64.0));
    }

    #[test]
    fn lateral_offset_projects_by_focal_ratio() {
        let cam = camera(100.0, 128);
        let px = cam.project_point(&Point3::new(0.1, 0.0, 0.5)).unwrap();
        assert!((px.x - 84.0).abs() < 1e-12);
        assert_eq!(px.y, 64.0);
    }

    #[test]
    fn point_behind_camera_is_rejected() {
        let cam = camera(100.0, 128);
        assert!(cam.project_point(&Point3::new(0.0, 0.0, -0.1)).is_err());
        assert!(cam.project_point(&Point3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn degenerate_camera_is_rejected() {
        let r = CameraModel::new(0.0, 100.0, 64.0, 64.0, 128, 128, Isometry3::identity());
        assert!(r.is_err());
        let r = CameraModel::new(100.0, 100.0, 128.0, 64.0, 128, 128, Isometry3::identity());
        assert!(r.is_err());
    }

    #[test]
    fn zero_image_error_maps_to_zero() {
        let cam = camera(100.0, 128);
        let e = image_error_to_task_space(&Pixel::zeros(), &nadir(0.5), &cam, &Pixel::new(50.0, 70.0))
            .unwrap();
        assert_eq!(e, Vector2::zeros());
    }

    #[test]
    fn nadir_error_scales_by_height_over_focal() {
        let cam = camera(100.0, 128);
        let e = image_error_to_task_space(
            &Pixel::new(20.0, 0.0),
            &nadir(0.5),
            &cam,
            &Pixel::new(64.0, 64.0),
        )
        .unwrap();
        assert!((e.x - 0.1).abs() < 1e-12, "{e}");
        assert!(e.y.abs() < 1e-12);
    }

    #[test]
    fn ray_parallel_to_plane_is_an_error() {
        let cam = camera(100.0, 128);
        // Plane containing the optical axis: normal along camera x.
        let plane = PlaneFrame::new(Isometry3::from_parts(
            Translation3::new(0.0, 0.0, 0.0),
            UnitQuaternion::from_euler_angles(0.0, std::f64::consts::FRAC_PI_2, 0.0),
        ))
        .unwrap();
        assert!(plane.backproject(&cam, &Pixel::new(64.0, 64.0)).is_err());
    }

    #[test]
    fn tilted_error_round_trips_through_projection() {
        let cam = camera(90.0, 128);
        let plane = tilted(0.4, 0.35, 0.2, Vector2::new(0.02, -0.01));
        let at = Pixel::new(40.0, 75.0);
        let eps = Pixel::new(13.5, -8.25);
        let et = image_error_to_task_space(&eps, &plane, &cam, &at).unwrap();
        let base = plane.backproject(&cam, &at).unwrap();
        let reproj = plane.project(&cam, &(base + et)).unwrap();
        assert!((reproj - (at + eps)).norm() < 1e-6);
    }

    #[test]
    fn zero_grid_projects_to_zero_image() {
        let cam = camera(100.0, 64);
        let grid = PressureGrid::zeros(20, 20, 0.005);
        let img = project_pressure_grid(&grid, &nadir(0.5), &cam).unwrap();
        assert!(img.is_zero());
    }

    #[test]
    fn single_cell_stays_inside_its_quad() {
        let cam = camera(100.0, 64);
        let plane = tilted(0.5, 0.3, 0.1, Vector2::new(-0.05, -0.05));
        let mut grid = PressureGrid::zeros(20, 20, 0.005);
        grid.values[7 * 20 + 11] = 12.0;
        let img = project_pressure_grid(&grid, &plane, &cam).unwrap();
        let quad: Vec<Pixel> = [(11.0, 7.0), (12.0, 7.0), (12.0, 8.0), (11.0, 8.0)]
            .iter()
            .map(|&(x, y)| plane.project(&cam, &Vector2::new(x * 0.005, y * 0.005)).unwrap())
            .collect();
        let (umin, umax) = quad.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p.x), a.1.max(p.x)));
        let (vmin, vmax) = quad.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p.y), a.1.max(p.y)));
        let mut any = false;
        for v in 0..64 {
            for u in 0..64 {
                if img.get(u, v) > 0.0 {
                    any = true;
                    assert!(u as f64 + 1.0 > umin && (u as f64) < umax, "u={u}");
                    assert!(v as f64 + 1.0 > vmin && (v as f64) < vmax, "v={v}");
                }
            }
        }
        assert!(any);
    }

    #[test]
    fn grid_fully_behind_camera_is_rejected() {
        let cam = camera(100.0, 64);
        let mut grid = PressureGrid::zeros(4, 4, 0.01);
        grid.values[5] = 1.0;
        assert!(project_pressure_grid(&grid, &nadir(-0.5), &cam).is_err());
    }

    #[test]
    fn clipping_unit_square_against_offset_box() {
        let mut poly = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut scratch = Vec::new();
        clip_to_box(&mut poly, &mut scratch, [0.5, 0.25, 2.0, 2.0]);
        assert!((polygon_area(&poly) - 0.375).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn backprojection_inverts_projection(
            x in -0.15f64..0.15, y in -0.15f64..0.15,
            pitch in -0.5f64..0.5, yaw in -3.0f64..3.0, h in 0.2f64..0.8,
        ) {
            let cam = camera(80.0, 128);
            let plane = tilted(h, pitch, yaw, Vector2::new(0.01, 0.02));
            let p = Vector2::new(x, y);
            let px = plane.project(&cam, &p).unwrap();
            let back = plane.backproject(&cam, &px).unwrap();
            prop_assert!((back - p).norm() < 1e-9);
        }

        #[test]
        fn nadir_task_error_is_additive(
            a in -20.0f64..20.0, b in -20.0f64..20.0,
            c in -20.0f64..20.0, d in -20.0f64..20.0,
        ) {
            let cam = camera(100.0, 128);
            let plane = nadir(0.5);
            let at = Pixel::new(64.0, 64.0);
            let e1 = image_error_to_task_space(&Pixel::new(a, b), &plane, &cam, &at).unwrap();
            let e2 = image_error_to_task_space(&Pixel::new(c, d), &plane, &cam, &at).unwrap();
            let e12 = image_error_to_task_space(&Pixel::new(a + c, b + d), &plane, &cam, &at).unwrap();
            prop_assert!((e1 + e2 - e12).norm() < 1e-12);
        }
    }
}
