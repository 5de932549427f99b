//! Pressure-based grasping controller: descend until contact, slide while
//! regulating fingertip pressure, steer the center of pressure onto a clicked
//! target, then close and lift.

mod episode;

pub use episode::{
    run_bench, run_episode, write_trajectories, BenchReport, Episode, EpisodeResult, EpisodeSetup, Estimator,
    ObjectTally, TrajectoryStep, OBJECT_NAMES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{image_error_to_task_space, CameraModel, Pixel, PlaneFrame};
use crate::types::PressureImage;

/// Pixels at or below this pressure do not count toward the center of
/// pressure.
pub const COP_THRESHOLD_KPA: f32 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServoConfig {
    /// Peak pressure (kPa) that ends the descent.
    pub contact_threshold: f64,
    /// Sliding pressure band `[p_lo, p_hi]` (kPa).
    pub band: [f64; 2],
    /// Alignment tolerance on the task-space error (m).
    pub tolerance: f64,
    /// Fraction of the task-space error commanded per step.
    pub k_lateral: f64,
    /// Height change per kPa of pressure error (m/kPa).
    pub k_height: f64,
    pub max_vertical_step: f64,
    pub max_lateral_step: f64,
    pub max_steps: usize,
    /// Consecutive sliding steps without a center of pressure before failing.
    pub lost_limit: usize,
    pub lift_height: f64,
}

impl Default for ServoConfig {
    fn default() -> Self {
        ServoConfig {
            contact_threshold: 1.5,
            band: [8.0, 20.0],
            tolerance: 0.005,
            k_lateral: 0.3,
            k_height: 3e-4,
            max_vertical_step: 0.005,
            max_lateral_step: 0.01,
            max_steps: 400,
            lost_limit: 10,
            lift_height: 0.05,
        }
    }
}

impl ServoConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.band;
        if !(lo < hi) {
            return Err(Error::Config(format!("pressure band [{lo}, {hi}] is empty")));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(self.k_lateral > 0.0 && self.k_lateral < 2.0) {
            return Err(Error::Config(format!("k_lateral {} outside (0, 2)", self.k_lateral)));
        }
        if !(self.k_height >= 0.0 && self.max_vertical_step > 0.0 && self.max_lateral_step > 0.0) {
            return Err(Error::Config("gains and step limits must be positive".into()));
        }
        if self.max_steps == 0 || self.lost_limit == 0 {
            return Err(Error::Config("step budgets must be positive".into()));
        }
        Ok(())
    }

    pub fn setpoint(&self) -> f64 {
        0.5 * (self.band[0] + self.band[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Descend,
    Slide,
    Close,
    Lift,
    Done,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureReason {
    StepBudget,
    LostContact,
    Workspace,
    MissedGrasp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServoState {
    pub phase: Phase,
    pub cop: Option<[f64; 2]>,
    pub target: Option<[f64; 2]>,
    /// Target minus center of pressure (px).
    pub eps_i: Option<[f64; 2]>,
    /// `eps_i` mapped onto the table (m).
    pub eps_t: Option<[f64; 2]>,
    pub pressure_max: f64,
    pub step: usize,
    pub lost_steps: usize,
    pub failure: Option<FailureReason>,
}

impl Default for ServoState {
    fn default() -> Self {
        ServoState {
            phase: Phase::Descend,
            cop: None,
            target: None,
            eps_i: None,
            eps_t: None,
            pressure_max: 0.0,
            step: 0,
            lost_steps: 0,
            failure: None,
        }
    }
}

impl ServoState {
    pub fn fail(mut self, reason: FailureReason) -> Self {
        self.phase = Phase::Failed;
        self.failure = Some(reason);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionCommand {
    /// Wrist displacement in the table plane (m).
    pub lateral: [f64; 2],
    /// Wrist height change (m), positive up.
    pub dz: f64,
    pub close: bool,
}

/// Camera and table plane at the current wrist pose.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub camera: &'a CameraModel,
    pub table: &'a PlaneFrame,
}

/// Pressure-weighted mean pixel over pixels above 1 kPa.
pub fn center_of_pressure(p: &PressureImage) -> Option<[f64; 2]> {
    let (mut sw, mut su, mut sv) = (0.0f64, 0.0f64, 0.0f64);
    for v in 0..p.height() {
        for u in 0..p.width() {
            let w = p.get(u, v);
            if w > COP_THRESHOLD_KPA {
                let w = w as f64;
                sw += w;
                su += w * u as f64;
                sv += w * v as f64;
            }
        }
    }
    (sw > 0.0).then(|| [su / sw, sv / sw])
}

fn clip(v: f64, limit: f64) -> f64 {
    v.clamp(-limit, limit)
}

/// One control tick. Returns the command to execute and the next state.
pub fn servo_step(
    state: &ServoState,
    pressure: &PressureImage,
    target: Option<Pixel>,
    view: View<'_>,
    config: &ServoConfig,
) -> Result<(MotionCommand, ServoState)> {
    let mut next = state.clone();
    next.step += 1;
    next.pressure_max = pressure.max() as f64;
    next.target = target.map(|t| [t.x, t.y]);
    let mut cmd = MotionCommand::default();
    let descend = -clip(config.k_height * config.setpoint(), config.max_vertical_step);

    match state.phase {
        Phase::Descend => {
            if next.pressure_max > config.contact_threshold {
                next.phase = Phase::Slide;
            } else {
                cmd.dz = descend;
            }
        }
        Phase::Slide => match center_of_pressure(pressure) {
            None => {
                next.cop = None;
                next.eps_i = None;
                next.eps_t = None;
                next.lost_steps += 1;
                if next.lost_steps >= config.lost_limit {
                    return Ok((cmd, next.fail(FailureReason::LostContact)));
                }
                cmd.dz = descend;
            }
            Some(cop) => {
                next.lost_steps = 0;
                next.cop = Some(cop);
                cmd.dz = clip(
                    config.k_height * (next.pressure_max - config.setpoint()),
                    config.max_vertical_step,
                );
                match target {
                    None => {
                        next.eps_i = None;
                        next.eps_t = None;
                    }
                    Some(t) => {
                        let at = Pixel::new(cop[0], cop[1]);
                        let eps_i = t - at;
                        let eps_t = image_error_to_task_space(&eps_i, view.table, view.camera, &at)?;
                        next.eps_i = Some([eps_i.x, eps_i.y]);
                        next.eps_t = Some([eps_t.x, eps_t.y]);
                        if eps_t.norm() < config.tolerance {
                            next.phase = Phase::Close;
                            cmd.dz = 0.0;
                        } else {
                            let mut step = eps_t * config.k_lateral;
                            let n = step.norm();
                            if n > config.max_lateral_step {
                                step *= config.max_lateral_step / n;
                            }
                            cmd.lateral = [step.x, step.y];
                        }
                    }
                }
            }
        },
        Phase::Close => {
            cmd.close = true;
            next.phase = Phase::Lift;
        }
        Phase::Lift => {
            cmd.dz = config.lift_height;
            next.phase = Phase::Done;
        }
        Phase::Done | Phase::Failed => return Ok((cmd, next)),
    }
    if !next.phase.is_terminal() && next.step >= config.max_steps {
        return Ok((MotionCommand::default(), next.fail(FailureReason::StepBudget)));
    }
    Ok((cmd, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

    fn nadir(height: f64) -> (CameraModel, PlaneFrame) {
        let cam = CameraModel::new(80.0, 80.0, 64.0, 64.0, 128, 128, Isometry3::identity()).unwrap();
        let plane = PlaneFrame::new(Isometry3::from_parts(
            Translation3::new(0.0, 0.0, height),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI),
        ))
        .unwrap();
        (cam, plane)
    }

    #[test]
    fn cop_examples() {
        let mut p = PressureImage::zeros(64, 64);
        assert_eq!(center_of_pressure(&p), None);
        p.set(12, 34, 5.0);
        assert_eq!(center_of_pressure(&p), Some([12.0, 34.0]));
        let mut p = PressureImage::zeros(16, 16);
        p.set(0, 0, 3.0);
        p.set(10, 10, 3.0);
        p.set(5, 2, 0.9);
        assert_eq!(center_of_pressure(&p), Some([5.0, 5.0]));
    }

    #[test]
    fn descend_without_contact() {
        let (cam, plane) = nadir(0.5);
        let config = ServoConfig::default();
        let p = PressureImage::zeros(128, 128);
        let (cmd, next) = servo_step(&ServoState::default(), &p, None, View { camera: &cam, table: &plane }, &config).unwrap();
        assert_eq!(next.phase, Phase::Descend);
        assert_eq!(cmd.lateral, [0.0, 0.0]);
        let expected = -(config.k_height * config.setpoint()).min(config.max_vertical_step);
        assert!((cmd.dz - expected).abs() < 1e-15);
    }

    fn sliding() -> ServoState {
        ServoState {
            phase: Phase::Slide,
            ..Default::default()
        }
    }

    #[test]
    fn zero_error_closes() {
        let (cam, plane) = nadir(0.5);
        let mut p = PressureImage::zeros(128, 128);
        p.set(40, 50, 14.0);
        let (cmd, next) = servo_step(
            &sliding(),
            &p,
            Some(Pixel::new(40.0, 50.0)),
            View { camera: &cam, table: &plane },
            &ServoConfig::default(),
        )
        .unwrap();
        assert_eq!(cmd.lateral, [0.0, 0.0]);
        assert_eq!(next.phase, Phase::Close);
    }

    #[test]
    fn nadir_lateral_command_magnitude() {
        let z = 0.5;
        let (cam, plane) = nadir(z);
        let mut p = PressureImage::zeros(128, 128);
        p.set(44, 64, 14.0);
        let config = ServoConfig {
            max_lateral_step: 1.0,
            ..Default::default()
        };
        let (cmd, next) = servo_step(
            &sliding(),
            &p,
            Some(Pixel::new(64.0, 64.0)),
            View { camera: &cam, table: &plane },
            &config,
        )
        .unwrap();
        assert_eq!(next.phase, Phase::Slide);
        let mag = (cmd.lateral[0].powi(2) + cmd.lateral[1].powi(2)).sqrt();
        assert!((mag - config.k_lateral * 20.0 * z / 80.0).abs() < 1e-9);
        // Camera x maps to plane x under this flip, so the target lies at +x.
        assert!(cmd.lateral[0] > 0.0);
        assert!(cmd.lateral[1].abs() < 1e-12);
    }

    #[test]
    fn lost_contact_eventually_fails() {
        let (cam, plane) = nadir(0.5);
        let config = ServoConfig::default();
        let p = PressureImage::zeros(128, 128);
        let mut s = sliding();
        for _ in 0..config.lost_limit {
            s = servo_step(&s, &p, None, View { camera: &cam, table: &plane }, &config).unwrap().1;
        }
        assert_eq!(s.phase, Phase::Failed);
        assert_eq!(s.failure, Some(FailureReason::LostContact));
    }

    #[test]
    fn budget_exhaustion_fails() {
        let (cam, plane) = nadir(0.5);
        let config = ServoConfig {
            max_steps: 3,
            ..Default::default()
        };
        let mut p = PressureImage::zeros(128, 128);
        p.set(10, 10, 14.0);
        let mut s = sliding();
        for _ in 0..3 {
            s = servo_step(&s, &p, None, View { camera: &cam, table: &plane }, &config).unwrap().1;
        }
        assert_eq!(s.failure, Some(FailureReason::StepBudget));
    }

    #[test]
    fn invalid_band_is_rejected() {
        let c = ServoConfig {
            band: [6.0, 2.0],
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
