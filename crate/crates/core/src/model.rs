//! The shared-encoder network: a strided convolutional encoder producing the
//! embedding `z`, a lateral-connection decoder emitting 9-way per-pixel
//! pressure logits, a force/torque regressor and a domain discriminator that
//! sees `z` through a gradient-reversal boundary.

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{argmax, PressureBinning, NUM_BINS};
use crate::error::{Error, Result};
use crate::nn::{
    flatten, grad_reverse_backward, relu, relu_backward, resize_bilinear, resize_bilinear_backward, resize_nearest,
    resize_nearest_backward, unflatten, Conv2d, ConvCache, ConvSpec, Linear, Param, Real, Tensor,
};
use crate::types::{PressureImage, Wrench};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub image_size: usize,
    /// Output channels of each stride-2 encoder stage.
    pub encoder_widths: Vec<usize>,
    pub decoder_width: usize,
    /// Channels of the single convolution that opens each head.
    pub head_conv_width: usize,
    pub ft_hidden: usize,
    pub disc_hidden: usize,
    /// Gradient-reversal scale.
    pub gamma: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 64,
            encoder_widths: vec![16, 32, 48, 64],
            decoder_width: 16,
            head_conv_width: 8,
            ft_hidden: 64,
            disc_hidden: 32,
            gamma: 1.0,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(Error::Config("image_size must be positive".into()));
        }
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return Err(Error::Config("encoder needs at least one stage of nonzero width".into()));
        }
        if [self.decoder_width, self.head_conv_width, self.ft_hidden, self.disc_hidden].contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Spatial sizes after each encoder stage.
    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut size = self.image_size;
        self.encoder_widths
            .iter()
            .map(|_| {
                size = ConvSpec::new(1, 1, 3, 2).out_size(size);
                size
            })
            .collect()
    }

    fn embedding_size(&self) -> usize {
        *self.stage_sizes().last().expect("validated")
    }
}

/// Which heads to evaluate. Only the first `pressure_samples` of the batch
/// reach the pressure decoder, so frames without pressure labels never touch
/// its weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Heads {
    pub pressure_samples: usize,
    pub ft: bool,
    pub domain: bool,
}

impl Heads {
    pub fn all(batch: usize) -> Self {
        Heads {
            pressure_samples: batch,
            ft: true,
            domain: true,
        }
    }
}

/// Raw network outputs in tensor layout.
#[derive(Debug, Clone)]
pub struct Outputs<T> {
    /// `[9, pressure_samples, H, W]`
    pub logits: Option<Tensor<T>>,
    /// `[6, N, 1, 1]`: force in N then torque in Nm.
    pub wrench: Option<Tensor<T>>,
    /// `[1, N, 1, 1]`, pre-sigmoid.
    pub domain_logit: Option<Tensor<T>>,
}

/// Gradients of a scalar loss with respect to [`Outputs`].
#[derive(Debug, Clone)]
pub struct OutputGrads<T> {
    pub logits: Option<Tensor<T>>,
    pub wrench: Option<Tensor<T>>,
    pub domain_logit: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
struct Stage<T> {
    cache: ConvCache<T>,
    out: Tensor<T>,
}

#[derive(Debug, Clone)]
struct HeadCache<T> {
    conv: ConvCache<T>,
    conv_out: Tensor<T>,
    flat: Tensor<T>,
    hidden: Tensor<T>,
}

#[derive(Debug, Clone)]
struct DecoderCache<T> {
    lateral: Vec<ConvCache<T>>,
    /// Shapes of the top-down maps, coarsest first.
    shapes: Vec<[usize; 4]>,
    smooth: ConvCache<T>,
    smooth_out: Tensor<T>,
    classifier: ConvCache<T>,
    coarse_shape: [usize; 4],
    samples: usize,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    stages: Vec<Stage<T>>,
    decoder: Option<DecoderCache<T>>,
    ft: Option<HeadCache<T>>,
    domain: Option<HeadCache<T>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Head<T> {
    conv: Conv2d<T>,
    fc1: Linear<T>,
    fc2: Linear<T>,
}

impl<T: Real> Head<T> {
    fn new(cin: usize, width: usize, spatial: usize, hidden: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Head {
            conv: Conv2d::new(ConvSpec::new(cin, width, 3, 1), rng),
            fc1: Linear::new(width * spatial * spatial, hidden, rng),
            fc2: Linear::new(hidden, outputs, rng),
        }
    }

    fn forward(&self, z: &Tensor<T>) -> (Tensor<T>, HeadCache<T>) {
        let (mut conv_out, conv) = self.conv.forward(z);
        relu(&mut conv_out);
        let flat = flatten(&conv_out);
        let mut hidden = self.fc1.forward(&flat);
        relu(&mut hidden);
        let out = self.fc2.forward(&hidden);
        (
            out,
            HeadCache {
                conv,
                conv_out,
                flat,
                hidden,
            },
        )
    }

    fn backward(&mut self, cache: &HeadCache<T>, dout: &Tensor<T>) -> Tensor<T> {
        let mut dh = self.fc2.backward(&cache.hidden, dout);
        relu_backward(&cache.hidden, &mut dh);
        let dflat = self.fc1.backward(&cache.flat, &dh);
        let mut dconv = unflatten(&dflat, cache.conv_out.shape);
        relu_backward(&cache.conv_out, &mut dconv);
        self.conv.backward(&cache.conv, &dconv, true).expect("input grad requested")
    }

    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        for (name, layer) in [("conv", self.conv.params()), ("fc1", self.fc1.params()), ("fc2", self.fc2.params())] {
            out.push((format!("{prefix}.{name}.weight"), layer[0]));
            out.push((format!("{prefix}.{name}.bias"), layer[1]));
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.extend(self.conv.params_mut());
        out.extend(self.fc1.params_mut());
        out.extend(self.fc2.params_mut());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViperNet<T = f32> {
    config: ModelConfig,
    encoder: Vec<Conv2d<T>>,
    /// One 1×1 projection per encoder stage, finest first.
    lateral: Vec<Conv2d<T>>,
    smooth: Conv2d<T>,
    classifier: Conv2d<T>,
    ft_head: Head<T>,
    disc_head: Head<T>,
}

impl<T: Real> ViperNet<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut encoder = Vec::new();
        let mut cin = 3;
        for &w in &config.encoder_widths {
            encoder.push(Conv2d::new(ConvSpec::new(cin, w, 3, 2), &mut rng));
            cin = w;
        }
        let d = config.decoder_width;
        let lateral = config
            .encoder_widths
            .iter()
            .map(|&w| Conv2d::new(ConvSpec::new(w, d, 1, 1), &mut rng))
            .collect();
        let smooth = Conv2d::new(ConvSpec::new(d, d, 3, 1), &mut rng);
        let classifier = Conv2d::new(ConvSpec::new(d, NUM_BINS, 1, 1), &mut rng);
        let s = config.embedding_size();
        let ft_head = Head::new(cin, config.head_conv_width, s, config.ft_hidden, 6, &mut rng);
        let disc_head = Head::new(cin, config.head_conv_width, s, config.disc_hidden, 1, &mut rng);
        Ok(ViperNet {
            config,
            encoder,
            lateral,
            smooth,
            classifier,
            ft_head,
            disc_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn forward(&self, x: &Tensor<T>, heads: Heads) -> Result<(Outputs<T>, Cache<T>)> {
        let size = self.config.image_size;
        if x.shape[0] != 3 || x.shape[2] != size || x.shape[3] != size {
            return Err(Error::shape(
                format!("[3, N, {size}, {size}]"),
                format!("{:?}", x.shape),
            ));
        }
        if heads.pressure_samples > x.batch() {
            return Err(Error::InvalidInput(format!(
                "{} pressure samples requested from a batch of {}",
                heads.pressure_samples,
                x.batch()
            )));
        }
        let mut stages: Vec<Stage<T>> = Vec::with_capacity(self.encoder.len());
        for conv in &self.encoder {
            let input = stages.last().map_or(x, |s| &s.out);
            let (mut out, cache) = conv.forward(input);
            relu(&mut out);
            stages.push(Stage { cache, out });
        }
        let z = &stages.last().expect("at least one stage").out;

        let (logits, decoder) = if heads.pressure_samples > 0 {
            let (l, c) = self.decode(&stages, heads.pressure_samples);
            (Some(l), Some(c))
        } else {
            (None, None)
        };
        let (wrench, ft) = if heads.ft {
            let (w, c) = self.ft_head.forward(z);
            (Some(w), Some(c))
        } else {
            (None, None)
        };
        let (domain_logit, domain) = if heads.domain {
            let (d, c) = self.disc_head.forward(z);
            (Some(d), Some(c))
        } else {
            (None, None)
        };
        Ok((
            Outputs {
                logits,
                wrench,
                domain_logit,
            },
            Cache {
                stages,
                decoder,
                ft,
                domain,
            },
        ))
    }

    fn decode(&self, stages: &[Stage<T>], samples: usize) -> (Tensor<T>, DecoderCache<T>) {
        let mut lateral = Vec::with_capacity(stages.len());
        let mut shapes = Vec::with_capacity(stages.len());
        let mut top: Option<Tensor<T>> = None;
        for (stage, conv) in stages.iter().zip(&self.lateral).rev() {
            let input = stage.out.take_batch(samples);
            let (mut p, cache) = conv.forward(&input);
            if let Some(t) = &top {
                p.add_assign(&resize_nearest(t, p.height(), p.width()));
            }
            lateral.push(cache);
            shapes.push(p.shape);
            top = Some(p);
        }
        let fine = top.expect("at least one stage");
        let (mut smooth_out, smooth) = self.smooth.forward(&fine);
        relu(&mut smooth_out);
        let (coarse, classifier) = self.classifier.forward(&smooth_out);
        let size = self.config.image_size;
        let logits = resize_bilinear(&coarse, size, size);
        (
            logits,
            DecoderCache {
                lateral,
                shapes,
                smooth,
                smooth_out,
                classifier,
                coarse_shape: coarse.shape,
                samples,
            },
        )
    }

    /// Accumulates parameter gradients with the standard reversal factor `-γ`
    /// at the discriminator boundary.
    pub fn backward(&mut self, cache: &Cache<T>, grads: &OutputGrads<T>) {
        let factor = -self.config.gamma;
        self.backward_with_reversal(cache, grads, factor);
    }

    /// As [`backward`](Self::backward) but with an explicit factor applied to
    /// the discriminator gradient entering the encoder (`1.0` disables
    /// reversal).
    pub fn backward_with_reversal(&mut self, cache: &Cache<T>, grads: &OutputGrads<T>, factor: f64) {
        let n_stages = cache.stages.len();
        let mut dstage: Vec<Tensor<T>> = cache.stages.iter().map(|s| Tensor::zeros(s.out.shape)).collect();

        if let (Some(dl), Some(dc)) = (&grads.logits, &cache.decoder) {
            let dcoarse = resize_bilinear_backward(dl, dc.coarse_shape);
            let mut dsmooth = self
                .classifier
                .backward(&dc.classifier, &dcoarse, true)
                .expect("input grad requested");
            relu_backward(&dc.smooth_out, &mut dsmooth);
            let mut dp = self.smooth.backward(&dc.smooth, &dsmooth, true).expect("input grad requested");
            // Walk the top-down pathway from finest back to coarsest.
            for level in (0..n_stages).rev() {
                let stage_index = n_stages - 1 - level;
                let dlat = self.lateral[stage_index]
                    .backward(&dc.lateral[level], &dp, true)
                    .expect("input grad requested");
                dstage[stage_index].add_batch_prefix(&dlat);
                if level > 0 {
                    dp = resize_nearest_backward(&dp, dc.shapes[level - 1]);
                }
            }
            debug_assert!(dc.samples <= cache.stages[0].out.batch());
        }
        let last = n_stages - 1;
        if let (Some(dw), Some(fc)) = (&grads.wrench, &cache.ft) {
            let dz = self.ft_head.backward(fc, dw);
            dstage[last].add_assign(&dz);
        }
        if let (Some(dd), Some(dc)) = (&grads.domain_logit, &cache.domain) {
            let mut dz = self.disc_head.backward(dc, dd);
            grad_reverse_backward(&mut dz, -factor);
            dstage[last].add_assign(&dz);
        }

        for i in (0..n_stages).rev() {
            let mut dy = std::mem::replace(&mut dstage[i], Tensor::zeros([0, 0, 0, 0]));
            relu_backward(&cache.stages[i].out, &mut dy);
            let dx = self.encoder[i].backward(&cache.stages[i].cache, &dy, i > 0);
            if let Some(dx) = dx {
                dstage[i - 1].add_assign(&dx);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    /// Parameters in a fixed order with stable names.
    pub fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.encoder.iter().enumerate() {
            let [w, b] = c.params();
            out.push((format!("encoder.{i}.weight"), w));
            out.push((format!("encoder.{i}.bias"), b));
        }
        for (i, c) in self.lateral.iter().enumerate() {
            let [w, b] = c.params();
            out.push((format!("lateral.{i}.weight"), w));
            out.push((format!("lateral.{i}.bias"), b));
        }
        for (name, c) in [("smooth", &self.smooth), ("classifier", &self.classifier)] {
            let [w, b] = c.params();
            out.push((format!("{name}.weight"), w));
            out.push((format!("{name}.bias"), b));
        }
        self.ft_head.named_params("ft", &mut out);
        self.disc_head.named_params("disc", &mut out);
        out
    }

    /// Same order as [`named_params`](Self::named_params).
    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for c in &mut self.encoder {
            out.extend(c.params_mut());
        }
        for c in &mut self.lateral {
            out.extend(c.params_mut());
        }
        out.extend(self.smooth.params_mut());
        out.extend(self.classifier.params_mut());
        self.ft_head.params_mut(&mut out);
        self.disc_head.params_mut(&mut out);
        out
    }

    /// Number of leading parameters belonging to the shared encoder.
    pub fn encoder_param_count(&self) -> usize {
        2 * self.encoder.len()
    }

    /// Names of the F/T head and discriminator parameters.
    pub fn is_head_param(name: &str, head: HeadKind) -> bool {
        match head {
            HeadKind::Ft => name.starts_with("ft."),
            HeadKind::Domain => name.starts_with("disc."),
            HeadKind::Pressure => {
                name.starts_with("lateral.") || name.starts_with("smooth.") || name.starts_with("classifier.")
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Converts every weight to another scalar type.
    pub fn cast<U: Real>(&self) -> ViperNet<U> {
        let conv = |c: &Conv2d<T>| Conv2d {
            spec: c.spec,
            weight: c.weight.cast(),
            bias: c.bias.cast(),
        };
        let lin = |l: &Linear<T>| Linear {
            inputs: l.inputs,
            outputs: l.outputs,
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        let head = |h: &Head<T>| Head {
            conv: conv(&h.conv),
            fc1: lin(&h.fc1),
            fc2: lin(&h.fc2),
        };
        ViperNet {
            config: self.config.clone(),
            encoder: self.encoder.iter().map(conv).collect(),
            lateral: self.lateral.iter().map(conv).collect(),
            smooth: conv(&self.smooth),
            classifier: conv(&self.classifier),
            ft_head: head(&self.ft_head),
            disc_head: head(&self.disc_head),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Pressure,
    Ft,
    Domain,
}

/// Stacks HWC images with channel values in `[0, 1]` into a centred
/// `[3, N, H, W]` tensor.
pub fn pixels_to_tensor<T: Real>(images: &[&[f32]], width: usize, height: usize) -> Result<Tensor<T>> {
    let n = images.len();
    let plane = width * height;
    let mut t = Tensor::zeros([3, n, height, width]);
    for (b, px) in images.iter().enumerate() {
        if px.len() != plane * 3 {
            return Err(Error::shape(format!("{} values", plane * 3), format!("{}", px.len())));
        }
        for (i, rgb) in px.chunks_exact(3).enumerate() {
            for (c, &v) in rgb.iter().enumerate() {
                t.data[(c * n + b) * plane + i] = T::of(v as f64 - 0.5);
            }
        }
    }
    Ok(t)
}

pub fn images_to_tensor<T: Real>(images: &[&RgbImage]) -> Result<Tensor<T>> {
    let Some(first) = images.first() else {
        return Err(Error::InvalidInput("empty image batch".into()));
    };
    let (w, h) = (first.width() as usize, first.height() as usize);
    let pixels: Vec<Vec<f32>> = images
        .iter()
        .map(|im| im.as_raw().iter().map(|&v| v as f32 / 255.0).collect())
        .collect();
    let refs: Vec<&[f32]> = pixels.iter().map(|p| p.as_slice()).collect();
    pixels_to_tensor(&refs, w, h)
}

/// Per-image network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub width: usize,
    pub height: usize,
    /// Pixel-major `[y][x][bin]`.
    pub pressure_logits: Vec<f32>,
    pub wrench: Wrench,
    pub domain_logit: f64,
}

impl ModelOutput {
    /// Per-pixel softmax, pixel-major like the logits.
    pub fn probabilities(&self) -> Vec<f32> {
        let mut out = self.pressure_logits.clone();
        for px in out.chunks_exact_mut(NUM_BINS) {
            softmax_in_place(px);
        }
        out
    }

    /// Sigmoid of the domain logit: probability the input is fully labeled.
    pub fn domain_probability(&self) -> f64 {
        1.0 / (1.0 + (-self.domain_logit).exp())
    }
}

pub fn softmax_in_place(v: &mut [f32]) {
    let m = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

impl ViperNet<f32> {
    /// Evaluation-mode inference on a batch of images.
    pub fn predict_batch(&self, images: &[&RgbImage]) -> Result<Vec<ModelOutput>> {
        let x = images_to_tensor::<f32>(images)?;
        let (out, _) = self.forward(&x, Heads::all(images.len()))?;
        Ok(unpack_outputs(&out, images.len()))
    }

    pub fn predict(&self, image: &RgbImage) -> Result<ModelOutput> {
        Ok(self.predict_batch(&[image])?.remove(0))
    }
}

/// Splits batched tensors into per-image outputs.
pub fn unpack_outputs(out: &Outputs<f32>, n: usize) -> Vec<ModelOutput> {
    (0..n)
        .map(|b| {
            let (pressure_logits, width, height) = match &out.logits {
                Some(l) if b < l.batch() => {
                    let (h, w) = (l.height(), l.width());
                    let mut v = Vec::with_capacity(h * w * NUM_BINS);
                    for y in 0..h {
                        for x in 0..w {
                            for c in 0..NUM_BINS {
                                v.push(l.at(c, b, y, x));
                            }
                        }
                    }
                    (v, w, h)
                }
                _ => (Vec::new(), 0, 0),
            };
            let wrench = out.wrench.as_ref().map_or(Wrench::ZERO, |w| {
                let mut a = [0.0; 6];
                for (i, v) in a.iter_mut().enumerate() {
                    *v = w.at(i, b, 0, 0) as f64;
                }
                Wrench(a)
            });
            let domain_logit = out.domain_logit.as_ref().map_or(0.0, |d| d.at(0, b, 0, 0) as f64);
            ModelOutput {
                width,
                height,
                pressure_logits,
                wrench,
                domain_logit,
            }
        })
        .collect()
}

/// Decoded pressure and the any-pixel contact flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PressurePrediction {
    pub pressure: PressureImage,
    pub contact: bool,
}

/// Argmax decoding to bin representatives; contact is flagged when any
/// pixel's decoded value exceeds the contact threshold.
pub fn predict_pressure(output: &ModelOutput, binning: &PressureBinning) -> Result<PressurePrediction> {
    let n = output.width * output.height;
    if output.pressure_logits.len() != n * NUM_BINS || n == 0 {
        return Err(Error::shape(
            format!("{}x{}x{NUM_BINS}", output.height, output.width),
            format!("{} logits", output.pressure_logits.len()),
        ));
    }
    let bins: Vec<u8> = output
        .pressure_logits
        .chunks_exact(NUM_BINS)
        .map(|px| argmax(px) as u8)
        .collect();
    let pressure = binning.unbin_indices(&bins, output.width, output.height)?;
    let contact = pressure.any_above(crate::data::CONTACT_THRESHOLD_KPA as f32);
    Ok(PressurePrediction { pressure, contact })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            image_size: 16,
            encoder_widths: vec![4, 6, 8],
            decoder_width: 5,
            head_conv_width: 3,
            ft_hidden: 7,
            disc_hidden: 4,
            ..Default::default()
        }
    }

    fn image(size: u32, seed: u32) -> RgbImage {
        RgbImage::from_fn(size, size, |x, y| {
            image::Rgb([(x * 13 + seed) as u8, (y * 7 + seed * 3) as u8, ((x ^ y) * 5) as u8])
        })
    }

    #[test]
    fn output_shapes_at_several_sizes() {
        for size in [16, 20, 33, 64] {
            let net = ViperNet::<f32>::new(ModelConfig {
                image_size: size,
                ..small()
            })
            .unwrap();
            let img = image(size as u32, 1);
            let out = net.predict(&img).unwrap();
            assert_eq!(out.pressure_logits.len(), size * size * NUM_BINS);
            assert_eq!((out.width, out.height), (size, size));
            for px in out.probabilities().chunks_exact(NUM_BINS) {
                assert!((px.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rejects_wrong_size() {
        let net = ViperNet::<f32>::new(small()).unwrap();
        assert!(matches!(net.predict(&image(17, 0)), Err(Error::Shape { .. })));
    }

    #[test]
    fn inference_is_deterministic_and_batch_independent() {
        let net = ViperNet::<f32>::new(small()).unwrap();
        let (a, b) = (image(16, 1), image(16, 2));
        let one = net.predict(&a).unwrap();
        assert_eq!(one, net.predict(&a).unwrap());
        let both = net.predict_batch(&[&b, &a]).unwrap();
        for (x, y) in one.pressure_logits.iter().zip(&both[1].pressure_logits) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn decode_rules() {
        let binning = PressureBinning::default();
        let mut out = ModelOutput {
            width: 4,
            height: 3,
            pressure_logits: vec![0.0; 4 * 3 * NUM_BINS],
            wrench: Wrench::ZERO,
            domain_logit: 0.0,
        };
        for px in out.pressure_logits.chunks_exact_mut(NUM_BINS) {
            px[0] = 10.0;
        }
        let p = predict_pressure(&out, &binning).unwrap();
        assert!(p.pressure.is_zero());
        assert!(!p.contact);
        out.pressure_logits[5 * NUM_BINS + 5] = 20.0;
        let p = predict_pressure(&out, &binning).unwrap();
        assert!(p.contact);
        assert_eq!(p.pressure.get(1, 1) as f64, binning.representatives()[5] as f32 as f64);
    }

    #[test]
    fn param_names_are_unique_and_ordered() {
        let mut net = ViperNet::<f32>::new(small()).unwrap();
        let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        let lens: Vec<usize> = net.named_params().iter().map(|(_, p)| p.len()).collect();
        let lens_mut: Vec<usize> = net.params_mut().iter().map(|p| p.len()).collect();
        assert_eq!(lens, lens_mut);
        assert!(names[..net.encoder_param_count()].iter().all(|n| n.starts_with("encoder.")));
    }
}
