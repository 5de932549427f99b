//! Losses, the optimization loop and the ablation switches.

mod losses;

pub use losses::{
    domain_loss, domain_loss_from_logits, ft_loss, ft_loss_batch, pressure_loss, pressure_loss_from_logits, sigmoid,
    structure_weights, total_loss, LossReport, LossWeights, DISC_CLAMP, PROB_FLOOR,
};

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{compute_ft_scale, make_batches, AugmentConfig, BatchStream, Jitter, LabeledFrame};
use crate::error::{Error, Result};
use crate::model::{pixels_to_tensor, Heads, ModelConfig, OutputGrads, ViperNet};
use crate::nn::{Adam, AdamConfig};
use crate::types::Wrench;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub weights: LossWeights,
    /// Force/torque balance constant; computed from the training wrenches
    /// when absent.
    pub ft_scale: Option<f64>,
    pub iterations: usize,
    pub lr: f64,
    pub lr_decayed: f64,
    /// Fraction of the run trained at `lr` before switching to `lr_decayed`.
    pub decay_fraction: f64,
    pub n_full: usize,
    pub n_weak: usize,
    pub augment: AugmentConfig,
    pub adam: AdamConfig,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            ft_scale: None,
            iterations: 5000,
            lr: 1e-3,
            lr_decayed: 1e-4,
            decay_fraction: 0.75,
            n_full: 14,
            n_weak: 14,
            augment: AugmentConfig::default(),
            adam: AdamConfig::default(),
            log_every: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.decay_fraction) {
            return Err(Error::Config(format!("decay_fraction {} outside [0, 1]", self.decay_fraction)));
        }
        if !(self.lr > 0.0 && self.lr_decayed > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.n_full == 0 {
            return Err(Error::Config("n_full must be positive".into()));
        }
        if let Some(c) = self.ft_scale {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("ft_scale must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// First iteration trained at the decayed rate.
    pub fn decay_start(&self) -> usize {
        (self.decay_fraction * self.iterations as f64).round() as usize
    }

    pub fn learning_rate(&self, iteration: usize) -> f64 {
        if iteration < self.decay_start() {
            self.lr
        } else {
            self.lr_decayed
        }
    }

    /// Weakly labeled frames only matter when a loss term can use them.
    pub fn effective_n_weak(&self) -> usize {
        if self.weights.use_ft_loss || self.weights.use_domain_loss {
            self.n_weak
        } else {
            0
        }
    }
}

/// Gradient magnitudes seen in the last step, per parameter group.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradNorms {
    pub encoder: f64,
    pub pressure_head: f64,
    pub ft_head: f64,
    pub discriminator: f64,
}

/// A single training run over in-memory frames.
pub struct Trainer<'a> {
    config: TrainConfig,
    full: &'a [LabeledFrame],
    weak: &'a [LabeledFrame],
    model: ViperNet<f32>,
    adam: Adam,
    stream: BatchStream,
    ft_scale: f64,
    iteration: usize,
    grad_norms: GradNorms,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, full: &'a [LabeledFrame], weak: &'a [LabeledFrame]) -> Result<Self> {
        config.validate()?;
        if full.is_empty() {
            return Err(Error::InvalidInput("no fully labeled frames".into()));
        }
        let size = config.model.image_size;
        for f in full.iter().chain(weak) {
            if f.width() != size || f.height() != size {
                return Err(Error::Config(format!(
                    "model expects {size}x{size} images but a frame is {}x{}",
                    f.width(),
                    f.height()
                )));
            }
            if f.domain == crate::types::Domain::FullyLabeled && f.bins.is_none() {
                return Err(Error::InvalidInput("fully labeled frame without bins".into()));
            }
        }
        let n_weak = config.effective_n_weak();
        let stream = make_batches(full.len(), weak.len(), config.n_full, n_weak, config.seed)?;
        let ft_scale = match config.ft_scale {
            Some(c) => c,
            None if config.weights.use_ft_loss => {
                let used_weak = if n_weak > 0 { weak } else { &[] };
                compute_ft_scale(full.iter().chain(used_weak).map(|f| &f.wrench))?
            }
            None => 1.0,
        };
        let model = ViperNet::new(ModelConfig {
            init_seed: config.seed ^ config.model.init_seed,
            ..config.model.clone()
        })?;
        Ok(Trainer {
            adam: Adam::new(config.adam),
            config,
            full,
            weak,
            model,
            stream,
            ft_scale,
            iteration: 0,
            grad_norms: GradNorms::default(),
        })
    }

    pub fn model(&self) -> &ViperNet<f32> {
        &self.model
    }

    pub fn into_model(self) -> ViperNet<f32> {
        self.model
    }

    pub fn ft_scale(&self) -> f64 {
        self.ft_scale
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn grad_norms(&self) -> GradNorms {
        self.grad_norms
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// One optimizer step on the next batch.
    pub fn step(&mut self) -> Result<LossReport> {
        let batch = self.stream.next().expect("batch stream is endless");
        let frames: Vec<&LabeledFrame> = batch
            .full
            .iter()
            .map(|&i| &self.full[i])
            .chain(batch.weak.iter().map(|&i| &self.weak[i]))
            .collect();
        let n_full = batch.full.len();
        let pixels: Vec<Vec<f32>> = frames
            .iter()
            .enumerate()
            .map(|(slot, f)| {
                let seed = crate::synthworld::splitmix(
                    self.config.seed ^ crate::synthworld::splitmix(((self.iteration as u64) << 16) | slot as u64),
                );
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Jitter::sample(&self.config.augment, &mut rng).apply(&f.image)
            })
            .collect();
        let refs: Vec<&[f32]> = pixels.iter().map(|p| p.as_slice()).collect();
        let size = self.config.model.image_size;
        let x = pixels_to_tensor::<f32>(&refs, size, size)?;

        let w = self.config.weights;
        let heads = Heads {
            pressure_samples: n_full,
            ft: w.use_ft_loss,
            domain: w.use_domain_loss,
        };
        let (out, cache) = self.model.forward(&x, heads)?;

        let bins: Vec<&[u8]> = frames[..n_full]
            .iter()
            .map(|f| f.bins.as_deref().expect("checked at construction"))
            .collect();
        let (l_p, d_logits) = pressure_loss_from_logits(out.logits.as_ref().expect("pressure head ran"), &bins)?;

        let mut grads = OutputGrads {
            logits: Some(d_logits),
            wrench: None,
            domain_logit: None,
        };
        let mut l_ft = 0.0;
        if let Some(pred) = &out.wrench {
            let truth: Vec<Wrench> = frames.iter().map(|f| f.wrench).collect();
            let (l, mut g) = ft_loss_batch(pred, &truth, self.ft_scale)?;
            let lambda = w.lambda_ft as f32;
            g.data.iter_mut().for_each(|v| *v *= lambda);
            l_ft = l;
            grads.wrench = Some(g);
        }
        let mut l_d = 0.0;
        if let Some(logits) = &out.domain_logit {
            let is_full: Vec<bool> = (0..frames.len()).map(|k| k < n_full).collect();
            let (l, mut g) = domain_loss_from_logits(logits, &is_full)?;
            let lambda = w.lambda_domain as f32;
            g.data.iter_mut().for_each(|v| *v *= lambda);
            l_d = l;
            grads.domain_logit = Some(g);
        }
        let total = total_loss(l_p, l_ft, l_d, &w);
        if !total.is_finite() {
            return Err(Error::Diverged {
                iteration: self.iteration,
                loss: total,
            });
        }

        self.model.zero_grad();
        self.model.backward(&cache, &grads);
        self.grad_norms = self.measure_grads();
        let lr = self.config.learning_rate(self.iteration);
        self.adam.step(&mut self.model.params_mut(), lr);
        let report = LossReport {
            iteration: self.iteration,
            l_p,
            l_ft,
            l_d,
            total,
            lr,
        };
        self.iteration += 1;
        Ok(report)
    }

    fn measure_grads(&self) -> GradNorms {
        let mut norms = GradNorms::default();
        for (name, p) in self.model.named_params() {
            let sq: f64 = p.grad.iter().map(|&g| (g as f64) * (g as f64)).sum();
            let slot = if name.starts_with("encoder.") {
                &mut norms.encoder
            } else if name.starts_with("ft.") {
                &mut norms.ft_head
            } else if name.starts_with("disc.") {
                &mut norms.discriminator
            } else {
                &mut norms.pressure_head
            };
            *slot += sq;
        }
        norms.encoder = norms.encoder.sqrt();
        norms.pressure_head = norms.pressure_head.sqrt();
        norms.ft_head = norms.ft_head.sqrt();
        norms.discriminator = norms.discriminator.sqrt();
        norms
    }

    /// Runs the remaining iterations, calling `on_report` every
    /// `log_every` steps and on the last one.
    pub fn run(mut self, mut on_report: impl FnMut(&LossReport)) -> Result<TrainOutcome> {
        let mut curve = Vec::new();
        let every = self.config.log_every.max(1);
        while self.iteration < self.config.iterations {
            let report = self.step()?;
            if report.iteration % every == 0 || report.iteration + 1 == self.config.iterations {
                on_report(&report);
                curve.push(report);
            }
        }
        Ok(TrainOutcome {
            ft_scale: self.ft_scale,
            iterations: self.iteration,
            model: self.model,
            curve,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ViperNet<f32>,
    pub curve: Vec<LossReport>,
    pub ft_scale: f64,
    pub iterations: usize,
}

pub fn train(full: &[LabeledFrame], weak: &[LabeledFrame], config: &TrainConfig) -> Result<TrainOutcome> {
    let trainer = Trainer::new(config.clone(), full, weak)?;
    trainer.run(|r| {
        log::info!(
            "iter {:>6}  L {:.4}  Lp {:.4}  Lft {:.4}  Ld {:.4}  lr {:.0e}",
            r.iteration,
            r.total,
            r.l_p,
            r.l_ft,
            r.l_d,
            r.lr
        )
    })
}

pub fn write_curve_csv(path: &Path, curve: &[LossReport]) -> Result<()> {
    let mut out = String::from("iteration,L_p,L_ft,L_d,L,lr\n");
    for r in curve {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.iteration, r.l_p, r.l_ft, r.l_d, r.total, r.lr));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
