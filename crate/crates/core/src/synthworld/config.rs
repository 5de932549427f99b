use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraModel;

/// Everything the simulator needs besides a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Square image edge in pixels.
    pub image_size: usize,
    pub camera: CameraRig,
    pub gripper: GripperGeometry,
    pub fingertip: FingertipParams,
    pub grid: GridSpec,
    pub textures: TexturePoolConfig,
    pub lighting: LightingRange,
    pub sampling: PoseSampling,
    pub max_distractors: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            image_size: 128,
            camera: CameraRig::default(),
            gripper: GripperGeometry::default(),
            fingertip: FingertipParams::default(),
            grid: GridSpec::default(),
            textures: TexturePoolConfig::default(),
            lighting: LightingRange::default(),
            sampling: PoseSampling::default(),
            max_distractors: 6,
        }
    }
}

impl WorldConfig {
    pub fn with_image_size(mut self, size: usize) -> Self {
        self.image_size = size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 {
            return Err(Error::Config(format!(
                "image_size {} is below the 16 px minimum",
                self.image_size
            )));
        }
        if self.fingertip.stiffness <= 0.0 || self.fingertip.patch_scale <= 0.0 {
            return Err(Error::Config("fingertip stiffness and patch scale must be positive".into()));
        }
        if self.grid.cell <= 0.0 || self.grid.extent <= self.grid.cell {
            return Err(Error::Config("pressure grid needs extent > cell > 0".into()));
        }
        let (lo, hi) = self.lighting.brightness;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config("brightness range must satisfy 0 < lo <= hi".into()));
        }
        let (lo, hi) = self.sampling.aperture;
        if !(lo >= 0.0 && lo <= hi && hi <= self.gripper.max_aperture) {
            return Err(Error::Config("aperture range must lie in [0, max_aperture]".into()));
        }
        self.camera_model().map(|_| ())
    }

    /// Camera intrinsics plus the wrist-mounted extrinsic.
    pub fn camera_model(&self) -> Result<CameraModel> {
        let size = self.image_size as f64;
        let f = self.camera.focal_scale * size;
        CameraModel::new(
            f,
            f,
            size / 2.0,
            size / 2.0,
            self.image_size,
            self.image_size,
            self.camera.wrist_from_camera(),
        )
    }

    /// Wrist height at which an unloaded, level fingertip just touches the table.
    pub fn touch_height(&self) -> f64 {
        self.gripper.finger_length
    }
}

/// Eye-in-hand camera placement, fixed relative to the wrist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRig {
    /// Focal length as a multiple of the image edge.
    pub focal_scale: f64,
    /// Camera center in the wrist frame (m).
    pub mount: [f64; 3],
    /// Point the optical axis passes through, in the wrist frame (m).
    pub look_at: [f64; 3],
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig {
            focal_scale: 0.8,
            mount: [0.0, -0.06, 0.0],
            look_at: [0.0, 0.0, -0.12],
        }
    }
}

impl CameraRig {
    /// Camera x points along the finger separation axis, z along the view
    /// direction, y completes a right-handed frame (image down).
    pub fn wrist_from_camera(&self) -> Isometry3<f64> {
        let eye = Point3::from(self.mount);
        let target = Point3::from(self.look_at);
        let z = (target - eye).normalize();
        let x_hint = Vector3::x();
        let x = (x_hint - z * z.dot(&x_hint)).normalize();
        let y = z.cross(&x);
        let rot = nalgebra::Rotation3::from_basis_unchecked(&[x, y, z]);
        Isometry3::from_parts(
            nalgebra::Translation3::from(eye.coords),
            nalgebra::UnitQuaternion::from_rotation_matrix(&rot),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperGeometry {
    /// Vertical distance from wrist origin to an unloaded fingertip bottom.
    pub finger_length: f64,
    pub max_aperture: f64,
    /// Radius of the rubber fingertip pad.
    pub pad_radius: f64,
    /// Depth below the wrist where each flexure is clamped.
    pub flexure_mount_drop: f64,
    /// Lateral bow of the flexure per newton of load.
    pub flexure_bow_per_newton: f64,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        GripperGeometry {
            finger_length: 0.12,
            max_aperture: 0.12,
            pad_radius: 0.008,
            flexure_mount_drop: 0.04,
            flexure_bow_per_newton: 0.0025,
        }
    }
}

/// Fingertip compliance. Normal force is `stiffness · penetration` and the
/// contact patch radius is `patch_scale · F^(1/3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FingertipParams {
    /// N/m.
    pub stiffness: f64,
    /// m per N^(1/3).
    pub patch_scale: f64,
}

impl Default for FingertipParams {
    fn default() -> Self {
        FingertipParams {
            stiffness: 200.0,
            patch_scale: 0.0065,
        }
    }
}

/// Square pressure grid centered under the wrist and aligned with its yaw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub extent: f64,
    pub cell: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            extent: 0.16,
            cell: 0.002,
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> usize {
        (self.extent / self.cell).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TexturePoolConfig {
    pub seed: u64,
    pub train_textures: usize,
    pub test_textures: usize,
    pub train_colors: usize,
    pub test_colors: usize,
}

impl Default for TexturePoolConfig {
    fn default() -> Self {
        TexturePoolConfig {
            seed: 0x07e4_70e5,
            train_textures: 40,
            test_textures: 12,
            train_colors: 12,
            test_colors: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightingRange {
    pub brightness: (f32, f32),
    pub tint: (f32, f32),
}

impl Default for LightingRange {
    fn default() -> Self {
        LightingRange {
            brightness: (0.4, 1.6),
            tint: (0.7, 1.3),
        }
    }
}

/// Distribution of gripper states used for dataset capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseSampling {
    /// Probability that the wrist hovers above the touch height.
    pub p_hover: f64,
    /// Maximum hover clearance above touch height (m).
    pub hover_max: f64,
    /// Maximum penetration of the mean fingertip height (m).
    pub max_penetration: f64,
    /// Maximum |roll| (rad); tilts one fingertip lower than the other.
    pub max_roll: f64,
    pub aperture: (f64, f64),
    /// Wrist xy is drawn uniformly within ±xy_jitter of the scene origin.
    pub xy_jitter: f64,
}

impl Default for PoseSampling {
    fn default() -> Self {
        PoseSampling {
            p_hover: 0.3,
            hover_max: 0.04,
            max_penetration: 0.03,
            max_roll: 0.12,
            aperture: (0.04, 0.10),
            xy_jitter: 0.03,
        }
    }
}
