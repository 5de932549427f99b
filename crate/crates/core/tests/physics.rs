mod common;

use common::oracles::{oracle_wrench, projected_force};
use viper_core::synthworld::{resolve_contact, OracleSample, Split, World, WorldConfig};
use viper_core::Domain;

fn world() -> World {
    World::new(WorldConfig::default().with_image_size(64)).unwrap()
}

fn samples(world: &World, n: usize) -> impl Iterator<Item = OracleSample> + '_ {
    (0..n).map(move |i| {
        let domain = if i % 2 == 0 { Domain::FullyLabeled } else { Domain::WeaklyLabeled };
        world.sample(31, Split::Train, domain, i).unwrap()
    })
}

#[test]
fn grid_integral_equals_force_for_every_sample() {
    let world = world();
    let mut loaded = 0;
    for s in samples(&world, 1000) {
        let contact = resolve_contact(&s.meta.gripper, world.config()).unwrap();
        let f = s.wrench.force_norm();
        let integral = contact.grid.total_force();
        assert!(
            (integral - f).abs() <= 1e-6 * f.max(1.0),
            "sample {}: Σp·A = {integral}, |F| = {f}",
            s.meta.index
        );
        if f > 0.0 {
            loaded += 1;
        }
    }
    assert!(loaded > 300, "only {loaded} loaded samples");
}

#[test]
fn wrench_matches_cross_product_oracle() {
    let world = world();
    for s in samples(&world, 300) {
        let contact = resolve_contact(&s.meta.gripper, world.config()).unwrap();
        let oracle = oracle_wrench(&contact, &s.meta.gripper);
        for axis in 0..6 {
            let scale: f64 = if axis < 3 { 1.0 } else { 0.1 };
            assert!(
                (s.wrench.0[axis] - oracle.0[axis]).abs() <= 1e-9 * scale.max(oracle.0[axis].abs()),
                "sample {} axis {axis}: {:?} vs {:?}",
                s.meta.index,
                s.wrench,
                oracle
            );
        }
    }
}

#[test]
fn projected_pressure_conserves_force_within_one_percent() {
    let world = world();
    let mut checked = 0;
    for s in samples(&world, 1000) {
        let Some(force) = projected_force(&world, &s) else {
            continue;
        };
        let truth = s.wrench.force_norm();
        assert!(
            (force - truth).abs() <= 0.01 * truth,
            "sample {}: image force {force} vs {truth}",
            s.meta.index
        );
        checked += 1;
    }
    assert!(checked > 200, "only {checked} samples fully in view");
}
