mod common;

use std::sync::Arc;

use viper_core::geometry::Pixel;
use viper_core::servo::{run_bench, run_episode, Estimator, EpisodeSetup, FailureReason, Phase, ServoConfig};

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Largest step-to-step increase of ‖ε_i‖ while sliding.
fn worst_increase(trajectory: &[viper_core::servo::TrajectoryStep]) -> f64 {
    let slide: Vec<f64> = trajectory
        .iter()
        .filter(|s| s.phase == Phase::Slide)
        .filter_map(|s| s.eps_i.map(norm))
        .collect();
    slide.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn oracle_image_error_never_grows_while_sliding() {
    let world = Arc::new(common::world(64));
    let config = ServoConfig::default();
    for seed in 0..40 {
        let setup = EpisodeSetup::random(&world, seed).unwrap();
        let r = run_episode(world.clone(), setup, &config, &Estimator::Oracle, None).unwrap();
        assert!(r.success, "seed {seed}: {:?}", r.failure);
        let inc = worst_increase(&r.trajectory);
        assert!(inc <= 0.0, "seed {seed}: ‖ε_i‖ grew by {inc} px");
        // Contact is held throughout the slide.
        for s in r.trajectory.iter().filter(|s| s.phase == Phase::Slide) {
            assert!(s.pressure_max >= config.contact_threshold, "seed {seed} step {}", s.step);
        }
    }
}

#[test]
fn click_on_empty_table_exhausts_the_step_budget() {
    let world = Arc::new(common::world(64));
    let config = ServoConfig::default();
    let setup = EpisodeSetup::random(&world, 7).unwrap();
    let mut probe = viper_core::servo::Episode::new(world.clone(), setup.clone(), config.clone()).unwrap();
    let object = probe.object_pixel().unwrap();
    // The image corner farthest from the object.
    let far = [(1.0, 1.0), (62.0, 1.0), (1.0, 62.0), (62.0, 62.0)]
        .map(|(u, v)| Pixel::new(u, v))
        .into_iter()
        .max_by(|a, b| (a - object).norm().total_cmp(&(b - object).norm()))
        .unwrap();
    assert!(probe.click(Pixel::new(64.0, 10.0)).is_err());
    let r = run_episode(world, setup, &config, &Estimator::Oracle, Some(far)).unwrap();
    assert!(!r.success);
    assert_eq!(r.failure, Some(FailureReason::StepBudget));
    assert_eq!(r.steps, config.max_steps);
}

#[test]
fn oracle_bench_is_reproducible_and_succeeds() {
    let world = Arc::new(common::world(64));
    let config = ServoConfig::default();
    let mut first = Vec::new();
    let a = run_bench(&world, &config, &Estimator::Oracle, 20, 5, |r| first.push(r.clone())).unwrap();
    let mut second = Vec::new();
    let b = run_bench(&world, &config, &Estimator::Oracle, 20, 5, |r| second.push(r.clone())).unwrap();
    assert_eq!(a, b);
    assert_eq!(first, second);
    assert!(a.success_rate() >= 0.95, "{}", a.table());
}
