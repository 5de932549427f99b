#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viper_core::data::{LabeledFrame, PressureBinning, NUM_BINS};
use viper_core::model::{Cache, Heads, ModelConfig, OutputGrads, ViperNet};
use viper_core::nn::{
    flatten, grad_reverse_backward, relu, relu_backward, unflatten, Conv2d, ConvSpec, Linear, Tensor,
};
use viper_core::training::{domain_loss_from_logits, ft_loss_batch, pressure_loss_from_logits};
use viper_core::synthworld::{Split, World, WorldConfig};
use viper_core::training::TrainConfig;
use viper_core::{Domain, Wrench};

/// A network on 3×3 images with every width shrunk to a handful of channels.
pub fn toy_config(seed: u64) -> ModelConfig {
    ModelConfig {
        image_size: 3,
        encoder_widths: vec![3, 4],
        decoder_width: 3,
        head_conv_width: 2,
        ft_hidden: 5,
        disc_hidden: 4,
        gamma: 0.7,
        init_seed: seed,
    }
}

/// Toy network with biases drawn away from zero so no ReLU sits on its kink
/// at the evaluation point (zero-initialised biases put dead units exactly
/// there, where central differences see half a slope).
pub fn toy_net(seed: u64) -> ViperNet<f64> {
    let mut net = ViperNet::<f64>::new(toy_config(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5);
    let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
    for (name, p) in names.iter().zip(net.params_mut()) {
        if name.ends_with(".bias") {
            p.value.iter_mut().for_each(|v| *v = rng.random_range(0.05..0.3));
        }
    }
    net
}

/// Inputs and labels for one toy batch: the first `n_full` samples carry
/// pressure bins.
pub struct ToyBatch {
    pub x: Tensor<f64>,
    pub bins: Vec<Vec<u8>>,
    pub wrenches: Vec<Wrench>,
    pub is_full: Vec<bool>,
    pub ft_scale: f64,
}

impl ToyBatch {
    pub fn new(n_full: usize, n_weak: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_full + n_weak;
        let mut x = Tensor::zeros([3, n, 3, 3]);
        x.data.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        let bins = (0..n_full)
            .map(|_| (0..9).map(|_| rng.random_range(0..NUM_BINS as u8)).collect())
            .collect();
        let wrenches = (0..n)
            .map(|_| {
                Wrench::new(
                    [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..4.0)],
                    [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0],
                )
            })
            .collect();
        ToyBatch {
            x,
            bins,
            wrenches,
            is_full: (0..n).map(|k| k < n_full).collect(),
            ft_scale: 6.0,
        }
    }

    pub fn n_full(&self) -> usize {
        self.bins.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Pressure,
    Ft,
    Domain,
}

fn heads(term: Term, batch: &ToyBatch) -> Heads {
    Heads {
        pressure_samples: if term == Term::Pressure { batch.n_full() } else { 0 },
        ft: term == Term::Ft,
        domain: term == Term::Domain,
    }
}

pub fn term_loss(net: &ViperNet<f64>, batch: &ToyBatch, term: Term) -> f64 {
    term_forward(net, batch, term).0
}

/// One loss term evaluated on the toy batch, with its output gradient and
/// the forward cache.
pub fn term_forward(net: &ViperNet<f64>, batch: &ToyBatch, term: Term) -> (f64, OutputGrads<f64>, Cache<f64>) {
    let (out, cache) = net.forward(&batch.x, heads(term, batch)).unwrap();
    let mut grads = OutputGrads {
        logits: None,
        wrench: None,
        domain_logit: None,
    };
    let loss = match term {
        Term::Pressure => {
            let bins: Vec<&[u8]> = batch.bins.iter().map(|b| b.as_slice()).collect();
            let (l, g) = pressure_loss_from_logits(out.logits.as_ref().unwrap(), &bins).unwrap();
            grads.logits = Some(g);
            l
        }
        Term::Ft => {
            let (l, g) = ft_loss_batch(out.wrench.as_ref().unwrap(), &batch.wrenches, batch.ft_scale).unwrap();
            grads.wrench = Some(g);
            l
        }
        Term::Domain => {
            let (l, g) = domain_loss_from_logits(out.domain_logit.as_ref().unwrap(), &batch.is_full).unwrap();
            grads.domain_logit = Some(g);
            l
        }
    };
    (loss, grads, cache)
}

/// Analytic parameter gradients of one term, flattened in `named_params`
/// order, with `factor` applied at the reversal boundary.
pub fn analytic_grad(net: &mut ViperNet<f64>, batch: &ToyBatch, term: Term, factor: f64) -> Vec<f64> {
    let (_, grads, cache) = term_forward(net, batch, term);
    net.zero_grad();
    net.backward_with_reversal(&cache, &grads, factor);
    net.named_params().iter().flat_map(|(_, p)| p.grad.clone()).collect()
}

/// Central differences of one term with respect to every parameter.
pub fn numeric_grad(net: &ViperNet<f64>, batch: &ToyBatch, term: Term, eps: f64) -> Vec<f64> {
    let mut probe = net.clone();
    let sizes: Vec<usize> = probe.named_params().iter().map(|(_, p)| p.len()).collect();
    let mut out = Vec::new();
    for (k, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let original = probe.params_mut()[k].value[i];
            probe.params_mut()[k].value[i] = original + eps;
            let plus = term_loss(&probe, batch, term);
            probe.params_mut()[k].value[i] = original - eps;
            let minus = term_loss(&probe, batch, term);
            probe.params_mut()[k].value[i] = original;
            out.push((plus - minus) / (2.0 * eps));
        }
    }
    out
}

/// Largest relative disagreement, with `floor` guarding near-zero entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Number of leading gradient entries that belong to the shared encoder.
pub fn encoder_len(net: &ViperNet<f64>) -> usize {
    net.named_params()
        .iter()
        .filter(|(name, _)| name.starts_with("encoder."))
        .map(|(_, p)| p.len())
        .sum()
}

/// Smallest encoder/discriminator pair: a 1→2 channel 2×2 convolution
/// (10 parameters) feeding a linear discriminator on a 3×3 input.
pub struct ReversalToy {
    pub encoder: Conv2d<f64>,
    pub disc: Linear<f64>,
    pub x: Tensor<f64>,
    pub is_full: Vec<bool>,
}

impl ReversalToy {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Conv2d::new(ConvSpec::new(1, 2, 2, 1), &mut rng);
        let mut x = Tensor::zeros([1, 4, 3, 3]);
        x.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let (probe, _) = encoder.forward(&x);
        let disc = Linear::new(probe.channels() * probe.plane(), 1, &mut rng);
        ReversalToy {
            encoder,
            disc,
            x,
            is_full: vec![true, true, false, false],
        }
    }

    pub fn loss(&self) -> f64 {
        let (mut z, _) = self.encoder.forward(&self.x);
        relu(&mut z);
        let logit = self.disc.forward(&flatten(&z));
        domain_loss_from_logits(&logit, &self.is_full).unwrap().0
    }

    /// Encoder gradient of the domain loss with the reversal boundary
    /// scaling by `-gamma`.
    pub fn reversed_encoder_grad(&mut self, gamma: f64) -> Vec<f64> {
        let (mut z, cache) = self.encoder.forward(&self.x);
        relu(&mut z);
        let flat = flatten(&z);
        let logit = self.disc.forward(&flat);
        let (_, dlogit) = domain_loss_from_logits(&logit, &self.is_full).unwrap();
        self.encoder.params_mut().into_iter().for_each(|p| p.zero_grad());
        let dflat = self.disc.backward(&flat, &dlogit);
        let mut dz = unflatten(&dflat, z.shape);
        grad_reverse_backward(&mut dz, gamma);
        relu_backward(&z, &mut dz);
        self.encoder.backward(&cache, &dz, false);
        self.encoder.params().iter().flat_map(|p| p.grad.clone()).collect()
    }

    pub fn numeric_encoder_grad(&mut self, eps: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..2 {
            for i in 0..self.encoder.params()[k].len() {
                let original = self.encoder.params()[k].value[i];
                self.encoder.params_mut()[k].value[i] = original + eps;
                let plus = self.loss();
                self.encoder.params_mut()[k].value[i] = original - eps;
                let minus = self.loss();
                self.encoder.params_mut()[k].value[i] = original;
                out.push((plus - minus) / (2.0 * eps));
            }
        }
        out
    }
}

pub fn world(size: usize) -> World {
    World::new(WorldConfig::default().with_image_size(size)).unwrap()
}

/// Labeled training frames straight from the simulator.
pub fn frames(world: &World, seed: u64, split: Split, domain: Domain, n: usize) -> Vec<LabeledFrame> {
    let binning = PressureBinning::default();
    (0..n)
        .map(|i| LabeledFrame::from_sample(&world.sample(seed, split, domain, i).unwrap(), &binning).unwrap())
        .collect()
}

/// A narrow network for fast training tests.
pub fn small_model(size: usize) -> ModelConfig {
    ModelConfig {
        image_size: size,
        encoder_widths: vec![6, 8, 12],
        decoder_width: 6,
        head_conv_width: 4,
        ft_hidden: 16,
        disc_hidden: 8,
        ..Default::default()
    }
}

pub fn small_train_config(size: usize, domain: bool, ft: bool, iterations: usize) -> TrainConfig {
    let mut c = TrainConfig {
        model: small_model(size),
        iterations,
        n_full: 4,
        n_weak: 4,
        log_every: 1,
        seed: 3,
        ..Default::default()
    };
    c.weights.use_domain_loss = domain;
    c.weights.use_ft_loss = ft;
    c
}
