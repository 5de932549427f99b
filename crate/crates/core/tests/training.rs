mod common;

use common::*;
use viper_core::data::NUM_BINS;
use viper_core::model::{pixels_to_tensor, HeadKind, Heads, OutputGrads, ViperNet};
use viper_core::synthworld::{generate_dataset, DatasetConfig, Split, SplitCounts};
use viper_core::training::{pressure_loss, total_loss, Trainer};
use viper_core::Domain;

const SIZE: usize = 16;

#[test]
fn weak_only_batch_has_zero_pressure_loss_and_gradient() {
    // Probability path: every pixel masked out.
    let rho = vec![1.0 / NUM_BINS as f64; 5 * NUM_BINS];
    assert_eq!(pressure_loss(&rho, &[0, 3, 8, 1, 2], &[false; 5]).unwrap(), 0.0);

    // Network path: weak frames never reach the decoder.
    let world = world(SIZE);
    let weak = frames(&world, 5, Split::Train, Domain::WeaklyLabeled, 6);
    let pixels: Vec<Vec<f32>> = weak
        .iter()
        .map(|f| f.image.pixels().flat_map(|p| p.0.map(|c| c as f32 / 255.0)).collect())
        .collect();
    let refs: Vec<&[f32]> = pixels.iter().map(|p| p.as_slice()).collect();
    let x = pixels_to_tensor::<f32>(&refs, SIZE, SIZE).unwrap();
    let mut net = ViperNet::<f32>::new(small_model(SIZE)).unwrap();
    let heads = Heads {
        pressure_samples: 0,
        ft: true,
        domain: true,
    };
    let (out, cache) = net.forward(&x, heads).unwrap();
    assert!(out.logits.is_none());
    let mut dw = out.wrench.clone().unwrap();
    dw.data.iter_mut().for_each(|v| *v = 1.0);
    let mut dd = out.domain_logit.clone().unwrap();
    dd.data.iter_mut().for_each(|v| *v = 1.0);
    net.zero_grad();
    net.backward(
        &cache,
        &OutputGrads {
            logits: None,
            wrench: Some(dw),
            domain_logit: Some(dd),
        },
    );
    let mut encoder_moved = false;
    for (name, p) in net.named_params() {
        if ViperNet::<f32>::is_head_param(&name, HeadKind::Pressure) {
            assert!(p.grad.iter().all(|&g| g == 0.0), "{name} received gradient");
        } else if name.starts_with("encoder.") {
            encoder_moved |= p.grad.iter().any(|&g| g != 0.0);
        }
    }
    assert!(encoder_moved);
}

#[test]
fn weak_frames_do_not_change_pressure_loss_or_decoder_gradients() {
    let world = world(SIZE);
    let full = frames(&world, 6, Split::Train, Domain::FullyLabeled, 12);
    let weak = frames(&world, 6, Split::Train, Domain::WeaklyLabeled, 12);
    let run = |use_weak: bool| {
        // Pressure loss only: the weak frames can influence nothing else.
        let mut c = small_train_config(SIZE, false, false, 1);
        c.augment = Default::default();
        let weak_slice: &[_] = if use_weak { &weak } else { &[] };
        let mut t = Trainer::new(c, &full, weak_slice).unwrap();
        t.step().unwrap()
    };
    let a = run(false);
    let b = run(true);
    assert_eq!(a.l_p, b.l_p);
    assert_eq!(a.total, b.total);
}

#[test]
fn disabled_terms_never_produce_gradients() {
    let world = world(SIZE);
    let full = frames(&world, 7, Split::Train, Domain::FullyLabeled, 16);
    let weak = frames(&world, 7, Split::Train, Domain::WeaklyLabeled, 16);
    for (domain, ft) in [(false, false), (true, false), (false, true), (true, true)] {
        let c = small_train_config(SIZE, domain, ft, 20);
        let n_weak = c.effective_n_weak();
        assert_eq!(n_weak == 0, !domain && !ft);
        let mut t = Trainer::new(c, &full, &weak).unwrap();
        for _ in 0..20 {
            let r = t.step().unwrap();
            let g = t.grad_norms();
            assert!(g.pressure_head > 0.0 && g.encoder > 0.0);
            assert_eq!(g.ft_head == 0.0, !ft, "flags {domain} {ft}: {g:?}");
            assert_eq!(g.discriminator == 0.0, !domain, "flags {domain} {ft}: {g:?}");
            if !ft {
                assert_eq!(r.l_ft, 0.0);
            }
            if !domain {
                assert_eq!(r.l_d, 0.0);
            }
        }
    }
}

#[test]
fn logged_total_is_the_weighted_sum() {
    let world = world(SIZE);
    let full = frames(&world, 8, Split::Train, Domain::FullyLabeled, 16);
    let weak = frames(&world, 8, Split::Train, Domain::WeaklyLabeled, 16);
    let mut c = small_train_config(SIZE, true, true, 30);
    c.weights.lambda_ft = 0.3;
    c.weights.lambda_domain = 0.2;
    let w = c.weights;
    let outcome = Trainer::new(c, &full, &weak).unwrap().run(|_| {}).unwrap();
    assert_eq!(outcome.curve.len(), 30);
    for r in &outcome.curve {
        let expected = r.l_p + 0.3 * r.l_ft + 0.2 * r.l_d;
        assert!((r.total - expected).abs() <= 1e-6 * expected.abs());
        assert_eq!(r.total, total_loss(r.l_p, r.l_ft, r.l_d, &w));
        assert!(r.l_d > 0.0 && r.l_ft > 0.0);
    }
}

#[test]
fn training_is_bit_reproducible() {
    let world = world(SIZE);
    let full = frames(&world, 9, Split::Train, Domain::FullyLabeled, 16);
    let weak = frames(&world, 9, Split::Train, Domain::WeaklyLabeled, 16);
    let c = small_train_config(SIZE, true, true, 25);
    let a = Trainer::new(c.clone(), &full, &weak).unwrap().run(|_| {}).unwrap();
    let b = Trainer::new(c.clone(), &full, &weak).unwrap().run(|_| {}).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.model, b.model);

    let mut other = c;
    other.seed = 4;
    let d = Trainer::new(other, &full, &weak).unwrap().run(|_| {}).unwrap();
    assert_ne!(a.curve, d.curve);
}

#[test]
fn single_frame_loss_falls() {
    let world = world(SIZE);
    let full: Vec<_> = frames(&world, 10, Split::Train, Domain::FullyLabeled, 40)
        .into_iter()
        .filter(|f| f.pressure.as_ref().is_some_and(|p| p.any_above(1.0)))
        .take(1)
        .collect();
    let mut c = small_train_config(SIZE, false, false, 150);
    c.n_full = 1;
    let outcome = Trainer::new(c, &full, &[]).unwrap().run(|_| {}).unwrap();
    let first = outcome.curve.first().unwrap().l_p;
    let last = outcome.curve.last().unwrap().l_p;
    assert!(last < 0.8 * first, "{first} -> {last}");
}

#[test]
fn generated_datasets_are_byte_identical() {
    let config = DatasetConfig {
        seed: 21,
        counts: SplitCounts {
            train_full: 6,
            train_weak: 10,
            test_full: 3,
            test_weak: 4,
        },
        world: viper_core::synthworld::WorldConfig::default().with_image_size(SIZE),
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate_dataset(&config, a.path()).unwrap();
    let mb = generate_dataset(&config, b.path()).unwrap();
    assert_eq!(ma, mb);
    let listing = |root: &std::path::Path| {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
                }
            }
        }
        files.sort();
        files
    };
    let (la, lb) = (listing(a.path()), listing(b.path()));
    assert!(la.len() > 20);
    assert_eq!(la, lb);
}
