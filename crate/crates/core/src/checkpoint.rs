//! Self-describing weight files: a magic tag, a JSON header echoing the model
//! configuration, bin edges and iteration counter, then little-endian `f32`
//! tensors in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PressureBinning;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ViperNet};

const MAGIC: &[u8; 8] = b"VIPERCK\x01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    bin_edges: Vec<f64>,
    iteration: usize,
    ft_scale: f64,
    /// Free-form training metadata (flags, seed, λ values).
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ViperNet<f32>,
    pub binning: PressureBinning,
    pub iteration: usize,
    pub ft_scale: f64,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let params = self.model.named_params();
        let header = Header {
            model: self.model.config().clone(),
            bin_edges: self.binning.edges().to_vec(),
            iteration: self.iteration,
            ft_scale: self.ft_scale,
            meta: self.meta.clone(),
            tensors: params
                .iter()
                .map(|(name, p)| TensorEntry {
                    name: name.clone(),
                    shape: p.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut bytes = Vec::with_capacity(16 + json.len() + 4 * self.model.param_count());
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&json);
        for (_, p) in &params {
            for v in &p.value {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: &str| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(&format!("bad header: {e}")))?;
        let binning = PressureBinning::from_edges(&header.bin_edges)?;
        let mut model = ViperNet::<f32>::new(header.model.clone())?;
        let expected: Vec<(String, Vec<usize>)> = model
            .named_params()
            .into_iter()
            .map(|(n, p)| (n, p.shape.clone()))
            .collect();
        let stored: Vec<(String, Vec<usize>)> = header.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
        if expected != stored {
            return Err(bad("tensor table does not match the model configuration"));
        }
        let mut data = &bytes[16 + len..];
        for p in model.params_mut() {
            let need = p.value.len() * 4;
            if data.len() < need {
                return Err(bad("truncated tensor data"));
            }
            for (v, chunk) in p.value.iter_mut().zip(data[..need].chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
            data = &data[need..];
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Checkpoint {
            model,
            binning,
            iteration: header.iteration,
            ft_scale: header.ft_scale,
            meta: header.meta,
        })
    }

    /// Loads and checks that the stored model accepts `image_size` inputs and
    /// decodes with `binning`.
    pub fn load_compatible(path: &Path, image_size: usize, binning: &PressureBinning) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.model.config().image_size != image_size {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: format!(
                    "model was trained on {}px images, data is {image_size}px",
                    ck.model.config().image_size
                ),
            });
        }
        if ck.binning.edges() != binning.edges() {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: "bin edges differ from the dataset manifest".into(),
            });
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ViperNet<f32> {
        ViperNet::new(ModelConfig {
            image_size: 12,
            encoder_widths: vec![3, 4],
            decoder_width: 3,
            head_conv_width: 2,
            ft_hidden: 5,
            disc_hidden: 3,
            init_seed: 9,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = Checkpoint {
            model: tiny(),
            binning: PressureBinning::default(),
            iteration: 1234,
            ft_scale: 8.5,
            meta: serde_json::json!({"use_ft_loss": true}),
        };
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.model, ck.model);
        assert_eq!(back.iteration, 1234);
        assert_eq!(back.ft_scale, 8.5);
        assert_eq!(back.meta, ck.meta);
        assert!(Checkpoint::load_compatible(&path, 13, &ck.binning).is_err());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        fs::write(&path, b"garbage").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint { .. })));
        let ck = Checkpoint {
            model: tiny(),
            binning: PressureBinning::default(),
            iteration: 0,
            ft_scale: 1.0,
            meta: serde_json::Value::Null,
        };
        ck.save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint { .. })));
    }
}
