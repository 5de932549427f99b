use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use viper_bench::{frames, world};
use viper_core::model::{ModelConfig, ViperNet};
use viper_core::servo::{run_episode, EpisodeSetup, Estimator, ServoConfig};
use viper_core::synthworld::Split;
use viper_core::training::{TrainConfig, Trainer};
use viper_core::Domain;

fn simulator(c: &mut Criterion) {
    let world = world();
    let mut i = 0;
    c.bench_function("sample/64px", |b| {
        b.iter(|| {
            i += 1;
            black_box(world.sample(1, Split::Train, Domain::FullyLabeled, i).unwrap())
        })
    });
}

fn network(c: &mut Criterion) {
    let world = world();
    let batch = frames(&world, Domain::FullyLabeled, 8);
    let images: Vec<_> = batch.iter().map(|f| &f.image).collect();
    let model = ViperNet::<f32>::new(ModelConfig::default()).unwrap();
    c.bench_function("predict/8x64px", |b| b.iter(|| black_box(model.predict_batch(&images).unwrap())));

    let full = frames(&world, Domain::FullyLabeled, 28);
    let weak = frames(&world, Domain::WeaklyLabeled, 28);
    let config = TrainConfig {
        iterations: 1_000_000,
        log_every: 1_000_000,
        ..Default::default()
    };
    let mut trainer = Trainer::new(config, &full, &weak).unwrap();
    c.bench_function("train_step/14+14", |b| b.iter(|| black_box(trainer.step().unwrap())));
}

fn controller(c: &mut Criterion) {
    let world = world();
    let config = ServoConfig::default();
    let mut seed = 0;
    c.bench_function("episode/oracle", |b| {
        b.iter_batched(
            || {
                seed += 1;
                EpisodeSetup::random(&world, seed).unwrap()
            },
            |setup| black_box(run_episode(world.clone(), setup, &config, &Estimator::Oracle, None).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(5));
    targets = simulator, network, controller
}
criterion_main!(benches);
