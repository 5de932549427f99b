use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::config::{FingertipParams, WorldConfig};
use crate::error::{Error, Result};
use crate::types::{kpa_area_to_newtons, PressureGrid, Wrench};

/// Planar wrist pose over the table. `roll` tilts the gripper about its
/// forward axis, lowering one fingertip relative to the other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WristPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    #[serde(default)]
    pub roll: f64,
}

impl WristPose {
    pub fn world_from_wrist(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.x, self.y, self.z),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw),
        )
    }

    /// Rotates a world-plane vector into the wrist's yaw frame.
    pub fn to_wrist_plane(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub wrist: WristPose,
    /// Fingertip separation (m).
    pub aperture: f64,
    pub fingertip: FingertipParams,
}

impl GripperState {
    pub fn validate(&self, config: &WorldConfig) -> Result<()> {
        if self.wrist.z < 0.0 {
            return Err(Error::InvalidInput(format!(
                "wrist height {} is below the table",
                self.wrist.z
            )));
        }
        if !(0.0..=config.gripper.max_aperture).contains(&self.aperture) {
            return Err(Error::InvalidInput(format!(
                "aperture {} outside [0, {}]",
                self.aperture, config.gripper.max_aperture
            )));
        }
        Ok(())
    }

    /// Unloaded fingertip bottom positions in the world (left, right).
    pub fn rest_tips(&self, config: &WorldConfig) -> [Vector3<f64>; 2] {
        let world = self.wrist.world_from_wrist();
        let half = 0.5 * self.aperture;
        let (sr, cr) = self.wrist.roll.sin_cos();
        [-1.0, 1.0].map(|s| {
            let local = Vector3::new(
                s * half * cr,
                0.0,
                -config.gripper.finger_length - s * half * sr,
            );
            world.transform_point(&local.into()).coords
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingertipContact {
    pub in_contact: bool,
    /// Depth the unloaded fingertip would reach below the table (m).
    pub penetration: f64,
    pub normal_force: f64,
    /// Patch center on the table (world plane, m).
    pub center: [f64; 2],
    pub radius: f64,
}

impl FingertipContact {
    /// Vertical fingertip deflection toward the wrist under load.
    pub fn deflection(&self, params: &FingertipParams) -> f64 {
        self.normal_force / params.stiffness
    }
}

/// Placement of a pressure grid on the table: world position of the grid's
/// `(0, 0)` corner and its yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub origin: [f64; 2],
    pub yaw: f64,
}

impl GridFrame {
    pub fn to_world(&self, local: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.origin[0] + c * local[0] - s * local[1],
            self.origin[1] + s * local[0] + c * local[1],
        ]
    }

    pub fn to_local(&self, world: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        let dx = world[0] - self.origin[0];
        let dy = world[1] - self.origin[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn world_from_grid(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.origin[0], self.origin[1], 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactState {
    pub tips: [FingertipContact; 2],
    pub grid: PressureGrid,
    pub frame: GridFrame,
}

impl ContactState {
    pub fn any_contact(&self) -> bool {
        self.tips.iter().any(|t| t.in_contact)
    }

    pub fn total_normal_force(&self) -> f64 {
        self.tips.iter().map(|t| t.normal_force).sum()
    }
}

/// Linear-spring fingertips pressing on a flat table.
///
/// Each fingertip's normal force is `k·d` for penetration `d`; its patch has
/// radius `patch_scale·F^(1/3)` and a parabolic pressure profile rescaled so
/// the discrete integral over the grid equals the normal force.
pub fn resolve_contact(gripper: &GripperState, config: &WorldConfig) -> Result<ContactState> {
    gripper.validate(config)?;
    let n = config.grid.cells();
    let cell = config.grid.cell;
    let half = 0.5 * n as f64 * cell;
    let (s, c) = gripper.wrist.yaw.sin_cos();
    let frame = GridFrame {
        origin: [
            gripper.wrist.x - c * half + s * half,
            gripper.wrist.y - s * half - c * half,
        ],
        yaw: gripper.wrist.yaw,
    };
    let mut grid = PressureGrid::zeros(n, n, cell);
    let params = gripper.fingertip;

    let tips = gripper.rest_tips(config).map(|tip| {
        let penetration = (-tip.z).max(0.0);
        let force = params.stiffness * penetration;
        let center = [tip.x, tip.y];
        if force <= 0.0 {
            return FingertipContact {
                in_contact: false,
                penetration: 0.0,
                normal_force: 0.0,
                center,
                radius: 0.0,
            };
        }
        let radius = params.patch_scale * force.cbrt();
        deposit_patch(&mut grid, &frame, center, radius, force);
        FingertipContact {
            in_contact: true,
            penetration,
            normal_force: force,
            center,
            radius,
        }
    });

    Ok(ContactState { tips, grid, frame })
}

/// Adds one parabolic patch carrying `force` newtons to the grid.
fn deposit_patch(grid: &mut PressureGrid, frame: &GridFrame, center: [f64; 2], radius: f64, force: f64) {
    let local = frame.to_local(center);
    let cell = grid.cell;
    let area = grid.cell_area();
    let lo = |v: f64| (((v - radius) / cell).floor().max(0.0)) as usize;
    let hi = |v: f64, n: usize| ((((v + radius) / cell).ceil()) as usize).min(n);
    let (x0, x1) = (lo(local[0]), hi(local[0], grid.nx));
    let (y0, y1) = (lo(local[1]), hi(local[1], grid.ny));

    let mut weights = Vec::new();
    let mut total = 0.0;
    for iy in y0..y1 {
        for ix in x0..x1 {
            let cc = grid.cell_center(ix, iy);
            let d2 = (cc[0] - local[0]).powi(2) + (cc[1] - local[1]).powi(2);
            let w = 1.0 - d2 / (radius * radius);
            if w > 0.0 {
                weights.push((iy * grid.nx + ix, w));
                total += w;
            }
        }
    }
    if total > 0.0 {
        // p·A summed over cells must reproduce the force: p = F·w / (Σw·A).
        let scale = force / kpa_area_to_newtons(total * area);
        for (idx, w) in weights {
            grid.values[idx] += w * scale;
        }
    } else {
        let ix = ((local[0] / cell).floor().max(0.0) as usize).min(grid.nx - 1);
        let iy = ((local[1] / cell).floor().max(0.0) as usize).min(grid.ny - 1);
        grid.values[iy * grid.nx + ix] += force / kpa_area_to_newtons(area);
    }
}

/// Integrates the pressure grid into a wrist wrench.
///
/// Shear is ignored, so every cell pushes along the table normal. The result
/// is expressed in the level wrist frame (x along the finger axis, z up),
/// with lever arms measured from the wrist origin.
pub fn wrench_from_pressure(contact: &ContactState, wrist: &WristPose) -> Wrench {
    let grid = &contact.grid;
    let area = grid.cell_area();
    let (mut fz, mut mx, mut my) = (0.0, 0.0, 0.0);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let p = grid.get(ix, iy);
            if p == 0.0 {
                continue;
            }
            let f = kpa_area_to_newtons(p * area);
            let world = contact.frame.to_world(grid.cell_center(ix, iy));
            let r = wrist.to_wrist_plane([world[0] - wrist.x, world[1] - wrist.y]);
            fz += f;
            mx += f * r[0];
            my += f * r[1];
        }
    }
    // τ = r × (0, 0, f) = (r_y f, −r_x f, 0)
    Wrench::new([0.0, 0.0, fz], [my, -mx, 0.0])
}
