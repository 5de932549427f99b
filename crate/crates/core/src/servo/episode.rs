use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{servo_step, FailureReason, MotionCommand, Phase, ServoConfig, ServoState, View};
use crate::data::PressureBinning;
use crate::error::{Error, Result};
use crate::geometry::Pixel;
use crate::model::{predict_pressure, ViperNet};
use crate::synthworld::{
    camera_from_world, splitmix, table_frame, GripperState, Observation, Scene, Split, TargetObject, World, WristPose,
};
use crate::types::{Domain, PressureImage};

pub const OBJECT_NAMES: [&str; 5] = ["coin", "washer", "button", "eraser", "bottle cap"];

/// Fingertip separation while sliding (m).
const OPEN_APERTURE: f64 = 0.08;
/// Wrist excursion allowed around the table origin (m).
const WORKSPACE_HALF_EXTENT: f64 = 0.25;

/// Where the pressure image driving the controller comes from.
#[derive(Debug, Clone)]
pub enum Estimator {
    /// Simulator ground truth.
    Oracle,
    Learned {
        model: Arc<ViperNet<f32>>,
        binning: PressureBinning,
    },
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Oracle => "ORACLE",
            Estimator::Learned { .. } => "LEARNED",
        }
    }

    pub fn estimate(&self, obs: &Observation) -> Result<PressureImage> {
        match self {
            Estimator::Oracle => Ok(obs.pressure.clone()),
            Estimator::Learned { model, binning } => {
                let out = model.predict(&obs.render.image)?;
                Ok(predict_pressure(&out, binning)?.pressure)
            }
        }
    }
}

/// Initial conditions of one grasping trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSetup {
    pub seed: u64,
    pub scene: Scene,
    pub gripper: GripperState,
}

impl EpisodeSetup {
    /// A weakly labeled test-pool scene with one object placed in view
    /// between the open fingertips' reach.
    pub fn random(world: &World, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5E4F_0000));
        let mut scene = world.scene(rng.random(), Domain::WeaklyLabeled, Split::Test)?;
        let config = world.config();
        let gripper = GripperState {
            wrist: WristPose {
                x: rng.random_range(-0.02..0.02),
                y: rng.random_range(-0.02..0.02),
                z: world.config().touch_height() + rng.random_range(0.008..0.02),
                yaw: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                roll: 0.0,
            },
            aperture: OPEN_APERTURE,
            fingertip: config.fingertip,
        };
        let name = OBJECT_NAMES[rng.random_range(0..OBJECT_NAMES.len())];
        let footprint = rng.random_range(0.012..0.026);
        let color = [
            rng.random_range(0.7..1.0),
            rng.random_range(0.0..0.3),
            rng.random_range(0.0..0.5),
        ];
        let table = table_frame(&gripper, world.camera())?;
        let tips = gripper.rest_tips(config);
        for _ in 0..256 {
            let r = rng.random_range(0.012..0.035);
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let position = [gripper.wrist.x + r * a.cos(), gripper.wrist.y + r * a.sin()];
            let clear_of_tips = tips.iter().all(|t| {
                ((t.x - position[0]).powi(2) + (t.y - position[1]).powi(2)).sqrt()
                    > config.gripper.pad_radius + 0.5 * footprint + 0.004
            });
            let px = table.project(world.camera(), &nalgebra::Vector2::new(position[0], position[1]))?;
            let margin = 4.0;
            let cam = world.camera();
            let in_view = px.x > margin
                && px.y > margin
                && px.x < cam.width as f64 - margin
                && px.y < cam.height as f64 - margin;
            if clear_of_tips && in_view {
                scene.object = Some(TargetObject {
                    name: name.to_string(),
                    position,
                    footprint,
                    color,
                });
                return Ok(EpisodeSetup { seed, scene, gripper });
            }
        }
        Err(Error::Degenerate(format!("could not place a visible object for trial seed {seed}")))
    }
}

/// One control tick as recorded in the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub phase: Phase,
    pub cop: Option<[f64; 2]>,
    pub target: Option<[f64; 2]>,
    pub eps_i: Option<[f64; 2]>,
    pub eps_t: Option<[f64; 2]>,
    pub pressure_max: f64,
    /// Peak of the simulator's own pressure image, for diagnostics.
    pub true_pressure_max: f64,
    pub command: MotionCommand,
    pub wrist: WristPose,
}

/// A running trial: simulator state plus controller state.
#[derive(Debug, Clone)]
pub struct Episode {
    world: Arc<World>,
    setup_seed: u64,
    scene: Scene,
    gripper: GripperState,
    config: ServoConfig,
    state: ServoState,
    selected: bool,
    grasped: bool,
    trajectory: Vec<TrajectoryStep>,
    /// Camera frame and pressure estimate the latest step acted on.
    last_view: Option<(RgbImage, PressureImage)>,
}

impl Episode {
    pub fn new(world: Arc<World>, setup: EpisodeSetup, config: ServoConfig) -> Result<Self> {
        config.validate()?;
        if setup.scene.object.is_none() {
            return Err(Error::InvalidInput("episode scene has no target object".into()));
        }
        setup.gripper.validate(world.config())?;
        Ok(Episode {
            world,
            setup_seed: setup.seed,
            scene: setup.scene,
            gripper: setup.gripper,
            config,
            state: ServoState::default(),
            selected: false,
            grasped: false,
            trajectory: Vec::new(),
            last_view: None,
        })
    }

    pub fn seed(&self) -> u64 {
        self.setup_seed
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn state(&self) -> &ServoState {
        &self.state
    }

    pub fn gripper(&self) -> &GripperState {
        &self.gripper
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn trajectory(&self) -> &[TrajectoryStep] {
        &self.trajectory
    }

    pub fn is_finished(&self) -> bool {
        self.state.phase.is_terminal()
    }

    pub fn success(&self) -> bool {
        self.state.phase == Phase::Done
    }

    pub fn observe(&self) -> Result<Observation> {
        self.world.observe(&self.scene, &self.gripper)
    }

    fn object(&self) -> &TargetObject {
        self.scene.object.as_ref().expect("checked at construction")
    }

    /// Current pixel of the object's center.
    pub fn object_pixel(&self) -> Result<Pixel> {
        let table = table_frame(&self.gripper, self.world.camera())?;
        let p = self.object().position;
        table.project(self.world.camera(), &nalgebra::Vector2::new(p[0], p[1]))
    }

    /// Registers the operator's click. A click away from the object leaves
    /// the controller without a target.
    pub fn click(&mut self, pixel: Pixel) -> Result<()> {
        let cam = self.world.camera();
        if !cam.contains(&pixel) {
            return Err(Error::InvalidInput(format!(
                "click ({:.1}, {:.1}) is outside the {}x{} image",
                pixel.x, pixel.y, cam.width, cam.height
            )));
        }
        let table = table_frame(&self.gripper, cam)?;
        let hit = table.backproject(cam, &pixel)?;
        let obj = self.object();
        let d = ((hit.x - obj.position[0]).powi(2) + (hit.y - obj.position[1]).powi(2)).sqrt();
        self.selected = d <= 0.5 * obj.footprint + self.config.tolerance;
        Ok(())
    }

    /// Whether the fingertips would close around the object from the
    /// current wrist pose.
    fn grasp_predicate(&self) -> bool {
        let obj = self.object();
        let w = &self.gripper.wrist;
        let rel = w.to_wrist_plane([obj.position[0] - w.x, obj.position[1] - w.y]);
        let pad = self.world.config().gripper.pad_radius;
        rel[1].abs() <= pad && rel[0].abs() <= 0.5 * self.gripper.aperture - pad - 0.5 * obj.footprint
    }

    /// Runs one control tick against `estimator`.
    pub fn step(&mut self, estimator: &Estimator) -> Result<&TrajectoryStep> {
        if self.is_finished() {
            return Err(Error::InvalidInput("episode already finished".into()));
        }
        let obs = self.observe()?;
        let pressure = estimator.estimate(&obs)?;
        let target = if self.selected { Some(self.object_pixel()?) } else { None };
        let camera = self.world.camera();
        let table = table_frame(&self.gripper, camera)?;
        let (cmd, mut next) = servo_step(&self.state, &pressure, target, View { camera, table: &table }, &self.config)?;

        let w = &mut self.gripper.wrist;
        w.x += cmd.lateral[0];
        w.y += cmd.lateral[1];
        w.z += cmd.dz;
        let min_z = self.world.config().touch_height() - self.world.config().sampling.max_penetration;
        if w.x.abs() > WORKSPACE_HALF_EXTENT || w.y.abs() > WORKSPACE_HALF_EXTENT || w.z < min_z {
            next = next.fail(FailureReason::Workspace);
        }
        if cmd.close {
            self.grasped = self.grasp_predicate();
            let footprint = self.object().footprint;
            self.gripper.aperture = if self.grasped { footprint } else { 0.0 };
        }
        if next.phase == Phase::Done && !self.grasped {
            next = next.fail(FailureReason::MissedGrasp);
        }
        self.state = next;
        self.trajectory.push(TrajectoryStep {
            step: self.state.step,
            phase: self.state.phase,
            cop: self.state.cop,
            target: self.state.target,
            eps_i: self.state.eps_i,
            eps_t: self.state.eps_t,
            pressure_max: self.state.pressure_max,
            true_pressure_max: obs.pressure.max() as f64,
            command: cmd,
            wrist: self.gripper.wrist,
        });
        self.last_view = Some((obs.render.image, pressure));
        Ok(self.trajectory.last().expect("just pushed"))
    }

    pub fn last_view(&self) -> Option<(&RgbImage, &PressureImage)> {
        self.last_view.as_ref().map(|(i, p)| (i, p))
    }

    pub fn into_result(self) -> EpisodeResult {
        EpisodeResult {
            seed: self.setup_seed,
            object: self.object().name.clone(),
            success: self.success(),
            failure: self.state.failure,
            steps: self.state.step,
            trajectory: self.trajectory,
        }
    }

    /// Camera pose at the current wrist pose, for overlays.
    pub fn camera_pose(&self) -> nalgebra::Isometry3<f64> {
        camera_from_world(&self.gripper, self.world.camera())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub object: String,
    pub success: bool,
    pub failure: Option<FailureReason>,
    pub steps: usize,
    pub trajectory: Vec<TrajectoryStep>,
}

impl EpisodeResult {
    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        for step in &self.trajectory {
            serde_json::to_writer(&mut *out, step)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs a trial to completion. Without a click the object's true pixel is
/// used, as a batch operator would.
pub fn run_episode(
    world: Arc<World>,
    setup: EpisodeSetup,
    config: &ServoConfig,
    estimator: &Estimator,
    click: Option<Pixel>,
) -> Result<EpisodeResult> {
    let mut ep = Episode::new(world, setup, config.clone())?;
    let click = match click {
        Some(c) => c,
        None => ep.object_pixel()?,
    };
    ep.click(click)?;
    while !ep.is_finished() {
        ep.step(estimator)?;
    }
    Ok(ep.into_result())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTally {
    pub name: String,
    pub successes: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub estimator: String,
    pub trials: usize,
    pub successes: usize,
    pub per_object: Vec<ObjectTally>,
    pub failures: BTreeMap<String, usize>,
}

impl BenchReport {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<12} {:>9} {:>7}\n", "object", "successes", "trials");
        for t in &self.per_object {
            out.push_str(&format!("{:<12} {:>9} {:>7}\n", t.name, t.successes, t.trials));
        }
        out.push_str(&format!(
            "{:<12} {:>9} {:>7}   ({:.1}% with {} estimator)\n",
            "total",
            self.successes,
            self.trials,
            100.0 * self.success_rate(),
            self.estimator
        ));
        out
    }
}

/// Runs `trials` randomized episodes; trial `i` uses setup seed
/// `splitmix(seed + i)`.
pub fn run_bench(
    world: &Arc<World>,
    config: &ServoConfig,
    estimator: &Estimator,
    trials: usize,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeResult),
) -> Result<BenchReport> {
    let mut per_object: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut failures = BTreeMap::new();
    let mut successes = 0;
    for i in 0..trials {
        let setup = EpisodeSetup::random(world, splitmix(seed.wrapping_add(i as u64)))?;
        let result = run_episode(world.clone(), setup, config, estimator, None)?;
        let tally = per_object.entry(result.object.clone()).or_default();
        tally.1 += 1;
        if result.success {
            tally.0 += 1;
            successes += 1;
        } else if let Some(reason) = result.failure {
            *failures.entry(format!("{reason:?}")).or_insert(0) += 1;
        }
        on_episode(&result);
    }
    Ok(BenchReport {
        estimator: estimator.name().to_string(),
        trials,
        successes,
        per_object: per_object
            .into_iter()
            .map(|(name, (successes, trials))| ObjectTally { name, successes, trials })
            .collect(),
        failures,
    })
}

pub fn write_trajectories(path: &Path, results: &[EpisodeResult]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in results {
        r.write_jsonl(&mut f).map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}
