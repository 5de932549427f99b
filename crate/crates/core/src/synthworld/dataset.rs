//! On-disk dataset layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<split>/<id>.png
//! <root>/<split>/<id>.pressure.f32   (fully labeled records only)
//! <root>/<split>/<id>.meta.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GripperState, SampleMeta, Split, World, WorldConfig};
use crate::data::PressureBinning;
use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::types::{Domain, Wrench};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_full: usize,
    pub train_weak: usize,
    pub test_full: usize,
    pub test_weak: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split, domain: Domain) -> usize {
        match (split, domain) {
            (Split::Train, Domain::FullyLabeled) => self.train_full,
            (Split::Train, Domain::WeaklyLabeled) => self.train_weak,
            (Split::Test, Domain::FullyLabeled) => self.test_full,
            (Split::Test, Domain::WeaklyLabeled) => self.test_weak,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub seed: u64,
    pub counts: SplitCounts,
    #[serde(default)]
    pub world: WorldConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 1,
            counts: SplitCounts {
                train_full: 100,
                train_weak: 600,
                test_full: 50,
                test_weak: 100,
            },
            world: WorldConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub image_size: usize,
    pub counts: SplitCounts,
    /// Pooled standard deviation of all training force components (N).
    pub sigma_force: f64,
    /// Pooled standard deviation of all training torque components (Nm).
    pub sigma_torque: f64,
    pub bin_edges: Vec<f64>,
    pub camera: CameraModel,
    pub world: WorldConfig,
}

impl Manifest {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported dataset format version {}",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    pub fn binning(&self) -> Result<PressureBinning> {
        PressureBinning::from_edges(&self.bin_edges)
    }
}

/// Per-record metadata stored as `<id>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    /// `[Fx, Fy, Fz, Tx, Ty, Tz]`.
    pub wrench: Wrench,
    pub domain: Domain,
    pub scene_seed: u64,
    pub split: Split,
    pub index: usize,
    pub gripper: GripperState,
}

pub fn split_dir(split: Split, domain: Domain) -> &'static str {
    match (split, domain) {
        (Split::Train, Domain::FullyLabeled) => "train_full",
        (Split::Train, Domain::WeaklyLabeled) => "train_weak",
        (Split::Test, Domain::FullyLabeled) => "test_full",
        (Split::Test, Domain::WeaklyLabeled) => "test_weak",
    }
}

pub fn record_id(index: usize) -> String {
    format!("{index:06}")
}

pub fn record_paths(root: &Path, split: Split, domain: Domain, index: usize) -> (PathBuf, PathBuf, PathBuf) {
    let dir = root.join(split_dir(split, domain));
    let id = record_id(index);
    (
        dir.join(format!("{id}.png")),
        dir.join(format!("{id}.pressure.f32")),
        dir.join(format!("{id}.meta.json")),
    )
}

/// Pooled population standard deviation, accumulated with Welford updates.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RunningStd {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStd {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    #[cfg(test)]
    pub fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).sqrt()
        }
    }
}

/// Per-axis Welford accumulators pooled as the root of the mean per-axis
/// variance.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PooledAxes([RunningStd; 3]);

impl PooledAxes {
    pub fn push(&mut self, v: [f64; 3]) {
        self.0.iter_mut().zip(v).for_each(|(r, x)| r.push(x));
    }

    pub fn std(&self) -> f64 {
        let n: u64 = self.0.iter().map(|r| r.n).sum();
        if n == 0 {
            return 0.0;
        }
        (self.0.iter().map(|r| r.m2).sum::<f64>() / n as f64).sqrt()
    }
}

/// Renders every split to `out` and writes the manifest last.
pub fn generate_dataset(config: &DatasetConfig, out: &Path) -> Result<Manifest> {
    let c = &config.counts;
    if c.train_full == 0 {
        return Err(Error::Config("train_full count must be positive".into()));
    }
    let world = World::new(config.world.clone())?;
    let binning = PressureBinning::default();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut force_std = PooledAxes::default();
    let mut torque_std = PooledAxes::default();
    for split in [Split::Train, Split::Test] {
        for domain in [Domain::FullyLabeled, Domain::WeaklyLabeled] {
            let n = c.get(split, domain);
            let dir = out.join(split_dir(split, domain));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for index in 0..n {
                let sample = world.sample(config.seed, split, domain, index)?;
                if split == Split::Train {
                    force_std.push(sample.wrench.force());
                    torque_std.push(sample.wrench.torque());
                }
                write_record(out, &sample.image, &sample.pressure, sample.wrench, domain, &sample.meta)?;
            }
            log::debug!("wrote {n} {} records", split_dir(split, domain));
        }
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        seed: config.seed,
        image_size: config.world.image_size,
        counts: *c,
        sigma_force: force_std.std(),
        sigma_torque: torque_std.std(),
        bin_edges: binning.edges().to_vec(),
        camera: world.camera().clone(),
        world: config.world.clone(),
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn write_record(
    root: &Path,
    image: &image::RgbImage,
    pressure: &crate::types::PressureImage,
    wrench: Wrench,
    domain: Domain,
    meta: &SampleMeta,
) -> Result<()> {
    let (png, pfile, mfile) = record_paths(root, meta.split, domain, meta.index);
    image.save(&png)?;
    if domain == Domain::FullyLabeled {
        fs::write(&pfile, pressure.to_le_bytes()).map_err(|e| Error::io(&pfile, e))?;
    }
    let record = FrameMeta {
        wrench,
        domain,
        scene_seed: meta.scene_seed,
        split: meta.split,
        index: meta.index,
        gripper: meta.gripper,
    };
    fs::write(&mfile, serde_json::to_vec_pretty(&record)?).map_err(|e| Error::io(&mfile, e))?;
    Ok(())
}
