use std::fs;
use std::path::Path;

use image::RgbImage;

use super::binning::PressureBinning;
use crate::error::{Error, Result};
use crate::synthworld::dataset::{record_paths, FrameMeta, Manifest};
use crate::synthworld::{OracleSample, Split};
use crate::types::{Domain, PressureImage, Wrench};

/// A training or evaluation frame. Fully labeled frames carry pressure and
/// its bin indices; weakly labeled frames carry only the wrench.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub image: RgbImage,
    pub pressure: Option<PressureImage>,
    pub bins: Option<Vec<u8>>,
    pub wrench: Wrench,
    pub domain: Domain,
}

impl LabeledFrame {
    pub fn new(
        image: RgbImage,
        pressure: Option<PressureImage>,
        wrench: Wrench,
        domain: Domain,
        binning: &PressureBinning,
    ) -> Result<Self> {
        match (domain, &pressure) {
            (Domain::FullyLabeled, None) => {
                return Err(Error::InvalidInput("fully labeled frame without pressure".into()))
            }
            (Domain::WeaklyLabeled, Some(_)) => {
                return Err(Error::InvalidInput("weakly labeled frame carrying pressure".into()))
            }
            _ => {}
        }
        if let Some(p) = &pressure {
            if p.width() != image.width() as usize || p.height() != image.height() as usize {
                return Err(Error::shape(
                    format!("{}x{}", image.height(), image.width()),
                    format!("{}x{}", p.height(), p.width()),
                ));
            }
        }
        let bins = pressure.as_ref().map(|p| binning.bin_pressure(p)).transpose()?;
        Ok(LabeledFrame {
            image,
            pressure,
            bins,
            wrench,
            domain,
        })
    }

    /// Strips the pressure from weakly labeled samples, as a capture rig
    /// without the mat would.
    pub fn from_sample(sample: &OracleSample, binning: &PressureBinning) -> Result<Self> {
        let pressure = match sample.domain {
            Domain::FullyLabeled => Some(sample.pressure.clone()),
            Domain::WeaklyLabeled => None,
        };
        LabeledFrame::new(sample.image.clone(), pressure, sample.wrench, sample.domain, binning)
    }

    pub fn width(&self) -> usize {
        self.image.width() as usize
    }

    pub fn height(&self) -> usize {
        self.image.height() as usize
    }
}

/// Reads one split/domain directory of a generated dataset.
pub fn load_split(root: &Path, manifest: &Manifest, split: Split, domain: Domain) -> Result<Vec<LabeledFrame>> {
    let binning = manifest.binning()?;
    let n = manifest.counts.get(split, domain);
    let size = manifest.image_size;
    (0..n)
        .map(|index| {
            let (png, pfile, mfile) = record_paths(root, split, domain, index);
            let image = image::open(&png)?.to_rgb8();
            let text = fs::read(&mfile).map_err(|e| Error::io(&mfile, e))?;
            let meta: FrameMeta = serde_json::from_slice(&text)?;
            if meta.domain != domain {
                return Err(Error::InvalidInput(format!(
                    "{} is tagged {} but stored under {domain}",
                    mfile.display(),
                    meta.domain
                )));
            }
            let pressure = if pfile.exists() {
                let bytes = fs::read(&pfile).map_err(|e| Error::io(&pfile, e))?;
                Some(PressureImage::from_le_bytes(size, size, &bytes)?)
            } else {
                None
            };
            LabeledFrame::new(image, pressure, meta.wrench, meta.domain, &binning)
        })
        .collect()
}

/// Loads the metadata records of a split without decoding images.
pub fn load_meta(root: &Path, manifest: &Manifest, split: Split, domain: Domain) -> Result<Vec<FrameMeta>> {
    (0..manifest.counts.get(split, domain))
        .map(|index| {
            let (_, _, mfile) = record_paths(root, split, domain, index);
            let text = fs::read(&mfile).map_err(|e| Error::io(&mfile, e))?;
            Ok(serde_json::from_slice(&text)?)
        })
        .collect()
}
