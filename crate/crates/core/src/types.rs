//! Value types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which capture setup a frame comes from.
///
/// Fully labeled frames carry a pixel-registered pressure map; weakly labeled
/// frames only carry the wrist wrench.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Domain {
    FullyLabeled,
    WeaklyLabeled,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::FullyLabeled => "FULLY_LABELED",
            Domain::WeaklyLabeled => "WEAKLY_LABELED",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FULLY_LABELED" | "FULL" => Ok(Domain::FullyLabeled),
            "WEAKLY_LABELED" | "WEAK" => Ok(Domain::WeaklyLabeled),
            other => Err(Error::InvalidInput(format!("unknown domain tag `{other}`"))),
        }
    }
}

/// Force (N) and torque (Nm) at the wrist, zeroed at the level unloaded pose.
///
/// Stored as `[Fx, Fy, Fz, Tx, Ty, Tz]`, which is also the on-disk order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Wrench(pub [f64; 6]);

impl Wrench {
    pub const ZERO: Wrench = Wrench([0.0; 6]);

    pub fn new(force: [f64; 3], torque: [f64; 3]) -> Self {
        Wrench([
            force[0], force[1], force[2], torque[0], torque[1], torque[2],
        ])
    }

    pub fn force(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn torque(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn force_norm(&self) -> f64 {
        norm3(self.force())
    }

    pub fn torque_norm(&self) -> f64 {
        norm3(self.torque())
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Per-pixel contact pressure in kPa, row-major `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl PressureImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        PressureImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(
                format!("{} values ({height}x{width})", width * height),
                data.len(),
            ));
        }
        Ok(PressureImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f32) {
        self.data[v * self.width + u] = value;
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    /// True if any pixel strictly exceeds `threshold_kpa`.
    pub fn any_above(&self, threshold_kpa: f32) -> bool {
        self.data.iter().any(|&p| p > threshold_kpa)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&p| p == 0.0)
    }

    /// Little-endian f32 row-major encoding used by `<id>.pressure.f32` files.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for p in &self.data {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 4 {
            return Err(Error::shape(
                format!("{} bytes", width * height * 4),
                bytes.len(),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        PressureImage::from_vec(width, height, data)
    }
}

/// Pressure sampled on a regular grid lying in the table plane.
///
/// Cell `(ix, iy)` covers `[ix·cell, (ix+1)·cell] × [iy·cell, (iy+1)·cell]`
/// in grid-local plane coordinates; values are kPa.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureGrid {
    pub nx: usize,
    pub ny: usize,
    /// Edge length of one square cell in meters.
    pub cell: f64,
    pub values: Vec<f64>,
}

impl PressureGrid {
    pub fn zeros(nx: usize, ny: usize, cell: f64) -> Self {
        PressureGrid {
            nx,
            ny,
            cell,
            values: vec![0.0; nx * ny],
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.cell * self.cell
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    /// Center of a cell in grid-local coordinates (m).
    #[inline]
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            (ix as f64 + 0.5) * self.cell,
            (iy as f64 + 0.5) * self.cell,
        ]
    }

    /// Σ p·A over all cells, in newtons.
    pub fn total_force(&self) -> f64 {
        kpa_area_to_newtons(self.values.iter().sum::<f64>() * self.cell_area())
    }
}

/// kPa · m² → N.
#[inline]
pub fn kpa_area_to_newtons(kpa_m2: f64) -> f64 {
    kpa_m2 * 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_parses_both_spellings() {
        assert_eq!(
            "FULLY_LABELED".parse::<Domain>().unwrap(),
            Domain::FullyLabeled
        );
        assert_eq!("weak".parse::<Domain>().unwrap(), Domain::WeaklyLabeled);
        assert!("partial".parse::<Domain>().is_err());
    }

    #[test]
    fn pressure_bytes_round_trip() {
        let img = PressureImage::from_vec(3, 2, vec![0.0, 1.5, 2.0, 40.0, 0.25, 7.0]).unwrap();
        let back = PressureImage::from_le_bytes(3, 2, &img.to_le_bytes()).unwrap();
        assert_eq!(img, back);
        assert!(PressureImage::from_le_bytes(3, 3, &img.to_le_bytes()).is_err());
    }

    #[test]
    fn wrench_accessors() {
        let w = Wrench::new([0.0, 3.0, 4.0], [1.0, 0.0, 0.0]);
        assert_eq!(w.force_norm(), 5.0);
        assert_eq!(w.torque(), [1.0, 0.0, 0.0]);
    }
}
