use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::WorldConfig;
use crate::error::{Error, Result};
use crate::types::Domain;

pub type Color = [f32; 3];

/// Train and test scenes draw backgrounds from disjoint pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextureKind {
    Checker,
    Stripes,
    Noise,
    Dots,
    Rings,
}

const TEXTURE_KINDS: [TextureKind; 5] = [
    TextureKind::Checker,
    TextureKind::Stripes,
    TextureKind::Noise,
    TextureKind::Dots,
    TextureKind::Rings,
];

/// Procedural planar texture, evaluated in world table coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub id: usize,
    pub kind: TextureKind,
    /// Characteristic period (m).
    pub scale: f64,
    pub angle: f64,
    pub colors: [Color; 2],
    pub phase: [f64; 2],
    pub noise_seed: u32,
}

impl TextureSpec {
    pub fn color_at(&self, x: f64, y: f64) -> Color {
        let (s, c) = self.angle.sin_cos();
        let u = (c * x + s * y) / self.scale + self.phase[0];
        let v = (-s * x + c * y) / self.scale + self.phase[1];
        let t = match self.kind {
            TextureKind::Checker => ((u.floor() + v.floor()) as i64).rem_euclid(2) as f64,
            TextureKind::Stripes => {
                if u.rem_euclid(1.0) < 0.45 {
                    1.0
                } else {
                    0.0
                }
            }
            TextureKind::Noise => {
                0.65 * value_noise(u, v, self.noise_seed)
                    + 0.35 * value_noise(2.7 * u, 2.7 * v, self.noise_seed ^ 0x9e37)
            }
            TextureKind::Dots => {
                let du = u.rem_euclid(1.0) - 0.5;
                let dv = v.rem_euclid(1.0) - 0.5;
                if du * du + dv * dv < 0.09 {
                    1.0
                } else {
                    0.0
                }
            }
            TextureKind::Rings => {
                let r = (u * u + 0.3 * v * v).sqrt() + 0.4 * value_noise(u, v, self.noise_seed);
                0.5 + 0.5 * (std::f64::consts::TAU * r).sin()
            }
        } as f32;
        lerp(self.colors[0], self.colors[1], t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Background {
    Solid { id: usize, color: Color },
    Textured(TextureSpec),
}

impl Background {
    pub fn color_at(&self, x: f64, y: f64) -> Color {
        match self {
            Background::Solid { color, .. } => *color,
            Background::Textured(t) => t.color_at(x, y),
        }
    }

    pub fn is_solid(&self) -> bool {
        matches!(self, Background::Solid { .. })
    }
}

/// The flat pressure sensing mat and its fiducial border, present only in
/// fully labeled captures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorOverlay {
    pub center: [f64; 2],
    pub yaw: f64,
    /// Half edge of the active sensing area (m).
    pub half_extent: f64,
    /// Width of the fiducial checker border (m).
    pub border: f64,
    /// Edge of one fiducial square (m).
    pub square: f64,
    pub pad_color: Color,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayHit {
    Pad,
    Fiducial,
}

impl SensorOverlay {
    pub fn hit(&self, x: f64, y: f64) -> Option<(OverlayHit, Color)> {
        let (s, c) = self.yaw.sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        let outer = self.half_extent + self.border;
        if lx.abs() > outer || ly.abs() > outer {
            return None;
        }
        if lx.abs() <= self.half_extent && ly.abs() <= self.half_extent {
            // Faint taxel grid on the sensing surface.
            let gx = (lx / 0.01).rem_euclid(1.0);
            let gy = (ly / 0.01).rem_euclid(1.0);
            let shade = if gx < 0.08 || gy < 0.08 { 0.9 } else { 1.0 };
            return Some((OverlayHit::Pad, self.pad_color.map(|v| v * shade)));
        }
        let parity = (((lx + outer) / self.square).floor() + ((ly + outer) / self.square).floor())
            as i64;
        let color = if parity.rem_euclid(2) == 0 {
            [0.05, 0.05, 0.05]
        } else {
            [0.95, 0.95, 0.95]
        };
        Some((OverlayHit::Fiducial, color))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lighting {
    pub gain: f32,
    pub tint: [f32; 3],
}

impl Default for Lighting {
    fn default() -> Self {
        Lighting {
            gain: 1.0,
            tint: [1.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ShapeKind {
    Disc { radius: f64 },
    Rect { half: [f64; 2], yaw: f64 },
}

/// Flat static clutter lying on the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub center: [f64; 2],
    pub color: Color,
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        match &self.kind {
            ShapeKind::Disc { radius } => dx * dx + dy * dy <= radius * radius,
            ShapeKind::Rect { half, yaw } => {
                let (s, c) = yaw.sin_cos();
                (c * dx + s * dy).abs() <= half[0] && (-s * dx + c * dy).abs() <= half[1]
            }
        }
    }
}

/// Small flat object the servo controller tries to pick up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetObject {
    pub name: String,
    /// Center on the table (m, world plane coordinates).
    pub position: [f64; 2],
    /// Diameter (m).
    pub footprint: f64,
    pub color: Color,
}

impl TargetObject {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.position[0];
        let dy = y - self.position[1];
        let r = 0.5 * self.footprint;
        dx * dx + dy * dy <= r * r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub domain: Domain,
    pub split: Split,
    pub background: Background,
    pub sensor_overlay: Option<SensorOverlay>,
    pub lighting: Lighting,
    pub distractors: Vec<Shape>,
    pub object: Option<TargetObject>,
}

/// Background pools shared by every scene built from one config.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturePools {
    pub solid_train: Vec<Background>,
    pub solid_test: Vec<Background>,
    pub textured_train: Vec<Background>,
    pub textured_test: Vec<Background>,
}

impl TexturePools {
    pub fn build(config: &WorldConfig) -> Self {
        let tc = &config.textures;
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
        let mut id = 0usize;
        let solids = |n: usize, rng: &mut ChaCha8Rng, id: &mut usize| {
            (0..n)
                .map(|_| {
                    *id += 1;
                    Background::Solid {
                        id: *id,
                        color: random_color(rng, 0.25, 0.85),
                    }
                })
                .collect::<Vec<_>>()
        };
        let solid_train = solids(tc.train_colors, &mut rng, &mut id);
        let solid_test = solids(tc.test_colors, &mut rng, &mut id);
        let textured = |n: usize, rng: &mut ChaCha8Rng, id: &mut usize| {
            (0..n)
                .map(|k| {
                    *id += 1;
                    Background::Textured(TextureSpec {
                        id: *id,
                        kind: TEXTURE_KINDS[k % TEXTURE_KINDS.len()],
                        scale: rng.random_range(0.006..0.05),
                        angle: rng.random_range(0.0..std::f64::consts::PI),
                        colors: [random_color(rng, 0.0, 1.0), random_color(rng, 0.0, 1.0)],
                        phase: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                        noise_seed: rng.random(),
                    })
                })
                .collect::<Vec<_>>()
        };
        let textured_train = textured(tc.train_textures, &mut rng, &mut id);
        let textured_test = textured(tc.test_textures, &mut rng, &mut id);
        TexturePools {
            solid_train,
            solid_test,
            textured_train,
            textured_test,
        }
    }

    pub fn pool(&self, domain: Domain, split: Split) -> &[Background] {
        match (domain, split) {
            (Domain::FullyLabeled, Split::Train) => &self.solid_train,
            (Domain::FullyLabeled, Split::Test) => &self.solid_test,
            (Domain::WeaklyLabeled, Split::Train) => &self.textured_train,
            (Domain::WeaklyLabeled, Split::Test) => &self.textured_test,
        }
    }
}

/// Draws a scene deterministically from `seed`.
///
/// Fully labeled scenes get a solid background and the sensor mat; weakly
/// labeled scenes get a textured background and no mat.
pub fn sample_scene(
    seed: u64,
    domain: Domain,
    split: Split,
    config: &WorldConfig,
    pools: &TexturePools,
) -> Result<Scene> {
    let pool = pools.pool(domain, split);
    if pool.is_empty() {
        return Err(Error::Config(format!(
            "empty {} background pool for {domain} scenes",
            split.as_str()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = pool[rng.random_range(0..pool.len())].clone();

    let sensor_overlay = match domain {
        Domain::FullyLabeled => Some(SensorOverlay {
            center: [rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01)],
            yaw: rng.random_range(-0.3..0.3),
            half_extent: 0.085,
            border: 0.02,
            square: 0.01,
            pad_color: [0.42, 0.44, 0.47].map(|v| v * rng.random_range(0.9f32..1.1)),
        }),
        Domain::WeaklyLabeled => None,
    };

    let lr = &config.lighting;
    let lighting = Lighting {
        gain: rng.random_range(lr.brightness.0..=lr.brightness.1),
        tint: [0; 3].map(|_| rng.random_range(lr.tint.0..=lr.tint.1)),
    };

    let max_d = match domain {
        Domain::FullyLabeled => config.max_distractors.min(2),
        Domain::WeaklyLabeled => config.max_distractors,
    };
    let n = rng.random_range(0..=max_d);
    let distractors = (0..n)
        .map(|_| {
            let kind = if rng.random_bool(0.5) {
                ShapeKind::Disc {
                    radius: rng.random_range(0.004..0.03),
                }
            } else {
                ShapeKind::Rect {
                    half: [rng.random_range(0.003..0.03), rng.random_range(0.003..0.03)],
                    yaw: rng.random_range(0.0..std::f64::consts::PI),
                }
            };
            Shape {
                kind,
                center: [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)],
                color: random_color(&mut rng, 0.0, 1.0),
            }
        })
        .collect();

    Ok(Scene {
        seed,
        domain,
        split,
        background,
        sensor_overlay,
        lighting,
        distractors,
        object: None,
    })
}

fn random_color(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> Color {
    [0; 3].map(|_| rng.random_range(lo..hi))
}

fn lerp(a: Color, b: Color, t: f32) -> Color {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn hash2(ix: i64, iy: i64, seed: u32) -> f64 {
    let mut h = (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (seed as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 31;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 29;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth lattice value noise in [0, 1].
fn value_noise(u: f64, v: f64, seed: u32) -> f64 {
    let (iu, iv) = (u.floor(), v.floor());
    let (fu, fv) = (u - iu, v - iv);
    let (su, sv) = (fu * fu * (3.0 - 2.0 * fu), fv * fv * (3.0 - 2.0 * fv));
    let (i, j) = (iu as i64, iv as i64);
    let a = hash2(i, j, seed);
    let b = hash2(i + 1, j, seed);
    let c = hash2(i, j + 1, seed);
    let d = hash2(i + 1, j + 1, seed);
    let top = a + (b - a) * su;
    let bottom = c + (d - c) * su;
    top + (bottom - top) * sv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (WorldConfig, TexturePools) {
        let config = WorldConfig::default();
        let pools = TexturePools::build(&config);
        (config, pools)
    }

    #[test]
    fn fully_labeled_scene_has_overlay_and_solid_background() {
        let (config, pools) = setup();
        let scene = sample_scene(7, Domain::FullyLabeled, Split::Train, &config, &pools).unwrap();
        assert!(scene.sensor_overlay.is_some());
        assert!(scene.background.is_solid());
    }

    #[test]
    fn scene_sampling_is_deterministic() {
        let (config, pools) = setup();
        let a = sample_scene(7, Domain::FullyLabeled, Split::Train, &config, &pools).unwrap();
        let b = sample_scene(7, Domain::FullyLabeled, Split::Train, &config, &pools).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weakly_labeled_scene_is_textured_without_overlay() {
        let (config, pools) = setup();
        let scene = sample_scene(3, Domain::WeaklyLabeled, Split::Train, &config, &pools).unwrap();
        assert!(scene.sensor_overlay.is_none());
        assert!(!scene.background.is_solid());
    }

    #[test]
    fn train_and_test_pools_are_disjoint() {
        let (_, pools) = setup();
        let id = |b: &Background| match b {
            Background::Solid { id, .. } => *id,
            Background::Textured(t) => t.id,
        };
        for (a, b) in [
            (&pools.solid_train, &pools.solid_test),
            (&pools.textured_train, &pools.textured_test),
        ] {
            for x in a {
                assert!(b.iter().all(|y| id(x) != id(y)));
            }
        }
    }

    #[test]
    fn empty_pool_is_an_error() {
        let mut config = WorldConfig::default();
        config.textures.test_textures = 0;
        let pools = TexturePools::build(&config);
        let r = sample_scene(1, Domain::WeaklyLabeled, Split::Test, &config, &pools);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn textures_stay_in_color_range() {
        let (_, pools) = setup();
        for bg in &pools.textured_train {
            for k in 0..50 {
                let c = bg.color_at(k as f64 * 0.0137 - 0.3, k as f64 * -0.021 + 0.2);
                assert!(c.iter().all(|v| (0.0..=1.0).contains(v)), "{c:?}");
            }
        }
    }
}
