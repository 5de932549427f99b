//! Deterministic gripper world standing in for the robot, the pressure mat
//! and the wrist force/torque sensor.
//!
//! Every output is a pure function of the configuration and a seed.

mod config;
mod contact;
pub mod dataset;
mod render;
mod scene;

pub use config::{
    CameraRig, FingertipParams, GridSpec, GripperGeometry, LightingRange, PoseSampling,
    TexturePoolConfig, WorldConfig,
};
pub use contact::{
    resolve_contact, wrench_from_pressure, ContactState, FingertipContact, GridFrame,
    GripperState, WristPose,
};
pub use dataset::{generate_dataset, DatasetConfig, Manifest, SplitCounts};
pub use render::{
    camera_from_world, pad_footprints, render, table_frame, Layer, PadFootprint, RenderOutput,
};
pub use scene::{
    sample_scene, Background, Color, Lighting, OverlayHit, Scene, SensorOverlay, Shape,
    ShapeKind, Split, TargetObject, TextureKind, TexturePools, TextureSpec,
};

use image::RgbImage;
use nalgebra::Isometry3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{project_pressure_grid, CameraModel, PlaneFrame};
use crate::types::{Domain, PressureImage, Wrench};

/// One simulated capture with every label the simulator knows.
#[derive(Debug, Clone)]
pub struct OracleSample {
    pub image: RgbImage,
    pub pressure: PressureImage,
    pub wrench: Wrench,
    pub domain: Domain,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub split: Split,
    pub index: usize,
    pub scene_seed: u64,
    pub gripper: GripperState,
}

/// Everything observable for one (scene, gripper) pair.
#[derive(Debug, Clone)]
pub struct Observation {
    pub contact: ContactState,
    pub wrench: Wrench,
    pub render: RenderOutput,
    pub pressure: PressureImage,
}

/// Simulator instance: config plus the derived background pools and camera.
#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    pools: TexturePools,
    camera: CameraModel,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let pools = TexturePools::build(&config);
        let camera = config.camera_model()?;
        Ok(World {
            config,
            pools,
            camera,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn pools(&self) -> &TexturePools {
        &self.pools
    }

    pub fn scene(&self, seed: u64, domain: Domain, split: Split) -> Result<Scene> {
        sample_scene(seed, domain, split, &self.config, &self.pools)
    }

    /// Plane frame mapping the wrist-aligned pressure grid into the camera.
    pub fn grid_plane(&self, gripper: &GripperState, contact: &ContactState) -> Result<PlaneFrame> {
        let cam_world: Isometry3<f64> = camera_from_world(gripper, &self.camera);
        PlaneFrame::new(cam_world * contact.frame.world_from_grid())
    }

    /// Contact, wrench, camera image and registered pressure image.
    pub fn observe(&self, scene: &Scene, gripper: &GripperState) -> Result<Observation> {
        let contact = resolve_contact(gripper, &self.config)?;
        let wrench = wrench_from_pressure(&contact, &gripper.wrist);
        let render = render(scene, gripper, &contact, &self.camera, &self.config)?;
        let pressure = if contact.any_contact() {
            project_pressure_grid(&contact.grid, &self.grid_plane(gripper, &contact)?, &self.camera)?
        } else {
            PressureImage::zeros(self.camera.width, self.camera.height)
        };
        Ok(Observation {
            contact,
            wrench,
            render,
            pressure,
        })
    }

    /// Draws a gripper state from the capture distribution.
    pub fn sample_gripper(&self, rng: &mut impl Rng) -> GripperState {
        let s = &self.config.sampling;
        let aperture = rng.random_range(s.aperture.0..=s.aperture.1);
        let roll = rng.random_range(-s.max_roll..=s.max_roll);
        let touch = self.config.touch_height();
        let z = if rng.random_bool(s.p_hover) {
            touch + 0.5 * aperture * roll.sin().abs() + rng.random_range(0.002..s.hover_max)
        } else {
            touch - rng.random_range(0.0..s.max_penetration)
        };
        GripperState {
            wrist: WristPose {
                x: rng.random_range(-s.xy_jitter..=s.xy_jitter),
                y: rng.random_range(-s.xy_jitter..=s.xy_jitter),
                z,
                yaw: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                roll,
            },
            aperture,
            fingertip: self.config.fingertip,
        }
    }

    /// The `index`-th capture of a split, derived from `master_seed`.
    pub fn sample(&self, master_seed: u64, split: Split, domain: Domain, index: usize) -> Result<OracleSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(master_seed, split, domain, index));
        let scene_seed: u64 = rng.random();
        let scene = self.scene(scene_seed, domain, split)?;
        let gripper = self.sample_gripper(&mut rng);
        let obs = self.observe(&scene, &gripper)?;
        Ok(OracleSample {
            image: obs.render.image,
            pressure: obs.pressure,
            wrench: obs.wrench,
            domain,
            meta: SampleMeta {
                split,
                index,
                scene_seed,
                gripper,
            },
        })
    }
}

/// Independent stream per capture, derived from the master seed.
pub fn sample_seed(master: u64, split: Split, domain: Domain, index: usize) -> u64 {
    let tag = match (split, domain) {
        (Split::Train, Domain::FullyLabeled) => 1u64,
        (Split::Train, Domain::WeaklyLabeled) => 2,
        (Split::Test, Domain::FullyLabeled) => 3,
        (Split::Test, Domain::WeaklyLabeled) => 4,
    };
    splitmix(splitmix(master ^ tag.wrapping_mul(0xA076_1D64_78BD_642F)) ^ index as u64)
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_reproducible() {
        let world = World::new(WorldConfig::default().with_image_size(64)).unwrap();
        let a = world.sample(5, Split::Train, Domain::WeaklyLabeled, 17).unwrap();
        let b = world.sample(5, Split::Train, Domain::WeaklyLabeled, 17).unwrap();
        assert_eq!(a.image.as_raw(), b.image.as_raw());
        assert_eq!(a.pressure, b.pressure);
        assert_eq!(a.wrench, b.wrench);
    }

    #[test]
    fn pressure_consistent_with_wrench() {
        let world = World::new(WorldConfig::default().with_image_size(64)).unwrap();
        for i in 0..40 {
            let s = world.sample(9, Split::Train, Domain::FullyLabeled, i).unwrap();
            let contact = resolve_contact(&s.meta.gripper, world.config()).unwrap();
            let f = s.wrench.force_norm();
            assert!((contact.grid.total_force() - f).abs() <= 1e-6 * f.max(1.0));
            if f == 0.0 {
                assert!(s.pressure.is_zero());
                assert_eq!(s.wrench, Wrench::ZERO);
            }
        }
    }
}
