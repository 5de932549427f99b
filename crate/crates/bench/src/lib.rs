//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use viper_core::data::{LabeledFrame, PressureBinning};
use viper_core::synthworld::{Split, World, WorldConfig};
use viper_core::Domain;

pub const IMAGE_SIZE: usize = 64;

pub fn world() -> Arc<World> {
    Arc::new(World::new(WorldConfig::default().with_image_size(IMAGE_SIZE)).expect("default world"))
}

/// `n` training frames of one domain, rendered with seed 1.
pub fn frames(world: &World, domain: Domain, n: usize) -> Vec<LabeledFrame> {
    let binning = PressureBinning::default();
    (0..n)
        .map(|i| {
            let s = world.sample(1, Split::Train, domain, i).expect("sample");
            LabeledFrame::from_sample(&s, &binning).expect("frame")
        })
        .collect()
}
