use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Real, Tensor};

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Param {
            shape: shape.to_vec(),
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    /// Uniform Kaiming initialisation for a layer with `fan_in` inputs.
    pub fn kaiming<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        for v in &mut p.value {
            *v = T::of(rng.random_range(-bound..bound));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        Param {
            shape: self.shape.clone(),
            value: self.value.iter().map(|v| U::of(v.as_f64())).collect(),
            grad: self.grad.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn new(cin: usize, cout: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            cin,
            cout,
            kernel,
            stride,
            pad: kernel / 2,
        }
    }

    pub fn out_size(&self, len: usize) -> usize {
        (len + 2 * self.pad).saturating_sub(self.kernel) / self.stride + 1
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

/// 2-D convolution evaluated as im2col followed by a single matrix product.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub spec: ConvSpec,
    /// `[cout, cin * k * k]`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    cols: Vec<T>,
    in_shape: [usize; 4],
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(spec: ConvSpec, rng: &mut R) -> Self {
        let fan_in = spec.cin * spec.kernel * spec.kernel;
        Conv2d {
            spec,
            weight: Param::kaiming(&[spec.cout, fan_in], fan_in, rng),
            bias: Param::zeros(&[spec.cout]),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, ConvCache<T>) {
        let s = self.spec;
        let [c, n, h, w] = x.shape;
        assert_eq!(c, s.cin, "conv input channels");
        let (ho, wo) = (s.out_size(h), s.out_size(w));
        let m = n * ho * wo;
        let k = s.cin * s.kernel * s.kernel;
        let cols = if s.is_pointwise() {
            x.data.clone()
        } else {
            im2col(x, &s, ho, wo)
        };
        let mut y = Tensor::zeros([s.cout, n, ho, wo]);
        for (o, row) in y.data.chunks_mut(m).enumerate() {
            row.iter_mut().for_each(|v| *v = self.bias.value[o]);
        }
        gemm(T::one(), &self.weight.value, s.cout, k, false, &cols, k, m, false, T::one(), &mut y.data);
        (y, ConvCache { cols, in_shape: x.shape })
    }

    /// Accumulates parameter gradients and returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(&mut self, cache: &ConvCache<T>, dy: &Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>> {
        let s = self.spec;
        let [_, n, ho, wo] = dy.shape;
        let m = n * ho * wo;
        let k = s.cin * s.kernel * s.kernel;
        gemm(T::one(), &dy.data, s.cout, m, false, &cache.cols, k, m, true, T::one(), &mut self.weight.grad);
        for (o, row) in dy.data.chunks(m).enumerate() {
            self.bias.grad[o] += row.iter().copied().sum::<T>();
        }
        if !need_input_grad {
            return None;
        }
        let mut dcols = vec![T::zero(); k * m];
        gemm(T::one(), &self.weight.value, s.cout, k, true, &dy.data, s.cout, m, false, T::zero(), &mut dcols);
        if s.is_pointwise() {
            return Some(Tensor::from_vec(cache.in_shape, dcols));
        }
        Some(col2im(&dcols, cache.in_shape, &s, ho, wo))
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

fn im2col<T: Real>(x: &Tensor<T>, s: &ConvSpec, ho: usize, wo: usize) -> Vec<T> {
    let [c, n, h, w] = x.shape;
    let k = s.kernel;
    let m = n * ho * wo;
    let mut cols = vec![T::zero(); c * k * k * m];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * m;
                for b in 0..n {
                    let src = &x.data[(ch * n + b) * h * w..(ch * n + b + 1) * h * w];
                    for oy in 0..ho {
                        let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut cols[row + (b * ho + oy) * wo..row + (b * ho + oy + 1) * wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], shape: [usize; 4], s: &ConvSpec, ho: usize, wo: usize) -> Tensor<T> {
    let [c, n, h, w] = shape;
    let k = s.kernel;
    let m = n * ho * wo;
    let mut x = Tensor::zeros(shape);
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * m;
                for b in 0..n {
                    let dst = &mut x.data[(ch * n + b) * h * w..(ch * n + b + 1) * h * w];
                    for oy in 0..ho {
                        let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &cols[row + (b * ho + oy) * wo..row + (b * ho + oy + 1) * wo];
                        let dst_row = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, &v) in src.iter().enumerate() {
                            let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst_row[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Fully connected layer on `[features, batch, 1, 1]` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Linear {
            inputs,
            outputs,
            weight: Param::kaiming(&[outputs, inputs], inputs, rng),
            bias: Param::zeros(&[outputs]),
        }
    }

    /// The input is its own cache.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let n = x.batch();
        assert_eq!(x.channels() * x.plane(), self.inputs, "linear input width");
        let mut y = Tensor::zeros([self.outputs, n, 1, 1]);
        for (o, row) in y.data.chunks_mut(n).enumerate() {
            row.iter_mut().for_each(|v| *v = self.bias.value[o]);
        }
        gemm(T::one(), &self.weight.value, self.outputs, self.inputs, false, &x.data, self.inputs, n, false, T::one(), &mut y.data);
        y
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        let n = dy.batch();
        gemm(T::one(), &dy.data, self.outputs, n, false, &x.data, self.inputs, n, true, T::one(), &mut self.weight.grad);
        for (o, row) in dy.data.chunks(n).enumerate() {
            self.bias.grad[o] += row.iter().copied().sum::<T>();
        }
        let mut dx = Tensor::zeros(x.shape);
        gemm(T::one(), &self.weight.value, self.outputs, self.inputs, true, &dy.data, self.outputs, n, false, T::zero(), &mut dx.data);
        dx
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

pub fn relu<T: Real>(x: &mut Tensor<T>) {
    x.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
}

/// Masks `dy` by the activation's own output.
pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &mut Tensor<T>) {
    dy.data
        .iter_mut()
        .zip(&y.data)
        .for_each(|(d, &v)| {
            if v <= T::zero() {
                *d = T::zero()
            }
        });
}

/// Identity on the way forward; multiplies the gradient by `-gamma` on the
/// way back.
pub fn grad_reverse_backward<T: Real>(dy: &mut Tensor<T>, gamma: f64) {
    let g = T::of(-gamma);
    dy.data.iter_mut().for_each(|d| *d = *d * g);
}

/// `[c, n, h, w]` to `[c * h * w, n, 1, 1]` with feature index `(c, y, x)`.
pub fn flatten<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [c, n, h, w] = x.shape;
    let plane = h * w;
    let mut out = Tensor::zeros([c * plane, n, 1, 1]);
    for ch in 0..c {
        for b in 0..n {
            let src = &x.data[(ch * n + b) * plane..(ch * n + b + 1) * plane];
            for (p, &v) in src.iter().enumerate() {
                out.data[(ch * plane + p) * n + b] = v;
            }
        }
    }
    out
}

pub fn unflatten<T: Real>(dy: &Tensor<T>, shape: [usize; 4]) -> Tensor<T> {
    let [c, n, h, w] = shape;
    let plane = h * w;
    let mut out = Tensor::zeros(shape);
    for ch in 0..c {
        for b in 0..n {
            let dst = &mut out.data[(ch * n + b) * plane..(ch * n + b + 1) * plane];
            for (p, d) in dst.iter_mut().enumerate() {
                *d = dy.data[(ch * plane + p) * n + b];
            }
        }
    }
    out
}

fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    (dst * src_len / dst_len).min(src_len - 1)
}

/// Nearest-neighbour resize to `(ho, wo)`.
pub fn resize_nearest<T: Real>(x: &Tensor<T>, ho: usize, wo: usize) -> Tensor<T> {
    let [c, n, h, w] = x.shape;
    let mut out = Tensor::zeros([c, n, ho, wo]);
    let xs: Vec<usize> = (0..wo).map(|ox| nearest_index(ox, w, wo)).collect();
    for cb in 0..c * n {
        let src = &x.data[cb * h * w..(cb + 1) * h * w];
        let dst = &mut out.data[cb * ho * wo..(cb + 1) * ho * wo];
        for oy in 0..ho {
            let iy = nearest_index(oy, h, ho);
            for (ox, &ix) in xs.iter().enumerate() {
                dst[oy * wo + ox] = src[iy * w + ix];
            }
        }
    }
    out
}

pub fn resize_nearest_backward<T: Real>(dy: &Tensor<T>, shape: [usize; 4]) -> Tensor<T> {
    let [c, n, h, w] = shape;
    let [_, _, ho, wo] = dy.shape;
    let mut dx = Tensor::zeros(shape);
    let xs: Vec<usize> = (0..wo).map(|ox| nearest_index(ox, w, wo)).collect();
    for cb in 0..c * n {
        let src = &dy.data[cb * ho * wo..(cb + 1) * ho * wo];
        let dst = &mut dx.data[cb * h * w..(cb + 1) * h * w];
        for oy in 0..ho {
            let iy = nearest_index(oy, h, ho);
            for (ox, &ix) in xs.iter().enumerate() {
                dst[iy * w + ix] += src[oy * wo + ox];
            }
        }
    }
    dx
}

/// Half-pixel-centred linear interpolation taps along one axis.
fn linear_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(src_len - 1);
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resize to `(ho, wo)`.
pub fn resize_bilinear<T: Real>(x: &Tensor<T>, ho: usize, wo: usize) -> Tensor<T> {
    let [c, n, h, w] = x.shape;
    let ty = linear_taps(h, ho);
    let tx = linear_taps(w, wo);
    let mut out = Tensor::zeros([c, n, ho, wo]);
    for cb in 0..c * n {
        let src = &x.data[cb * h * w..(cb + 1) * h * w];
        let dst = &mut out.data[cb * ho * wo..(cb + 1) * ho * wo];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::of(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::of(fx);
                let top = src[y0 * w + x0] * (T::one() - fx) + src[y0 * w + x1] * fx;
                let bottom = src[y1 * w + x0] * (T::one() - fx) + src[y1 * w + x1] * fx;
                dst[oy * wo + ox] = top * (T::one() - fy) + bottom * fy;
            }
        }
    }
    out
}

pub fn resize_bilinear_backward<T: Real>(dy: &Tensor<T>, shape: [usize; 4]) -> Tensor<T> {
    let [c, n, h, w] = shape;
    let [_, _, ho, wo] = dy.shape;
    let ty = linear_taps(h, ho);
    let tx = linear_taps(w, wo);
    let mut dx = Tensor::zeros(shape);
    for cb in 0..c * n {
        let src = &dy.data[cb * ho * wo..(cb + 1) * ho * wo];
        let dst = &mut dx.data[cb * h * w..(cb + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::of(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::of(fx);
                let g = src[oy * wo + ox];
                let gt = g * (T::one() - fy);
                let gb = g * fy;
                dst[y0 * w + x0] += gt * (T::one() - fx);
                dst[y0 * w + x1] += gt * fx;
                dst[y1 * w + x0] += gb * (T::one() - fx);
                dst[y1 * w + x1] += gb * fx;
            }
        }
    }
    dx
}
