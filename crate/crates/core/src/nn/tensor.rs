use std::fmt::Debug;

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2, LinalgScalar};
use num_traits::Float;

/// Scalar type the network can run in: `f32` for training, `f64` for
/// gradient checks.
pub trait Real:
    Float + LinalgScalar + Debug + Default + Send + Sync + std::iter::Sum + std::ops::AddAssign + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense activation tensor in `[channels, batch, height, width]` order.
///
/// Keeping channels outermost lets every convolution run as one matrix
/// product over the whole batch. Feature vectors use `[features, batch, 1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor data/shape mismatch");
        Tensor { shape, data }
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn batch(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn at(&self, c: usize, n: usize, y: usize, x: usize) -> T {
        let [_, nb, h, w] = self.shape;
        self.data[((c * nb + n) * h + y) * w + x]
    }

    /// The first `count` samples of the batch.
    pub fn take_batch(&self, count: usize) -> Tensor<T> {
        let [c, n, h, w] = self.shape;
        assert!(count <= n);
        let plane = h * w;
        let mut data = Vec::with_capacity(c * count * plane);
        for ch in 0..c {
            let start = ch * n * plane;
            data.extend_from_slice(&self.data[start..start + count * plane]);
        }
        Tensor::from_vec([c, count, h, w], data)
    }

    /// Adds `part` (covering the first samples of the batch) into `self`.
    pub fn add_batch_prefix(&mut self, part: &Tensor<T>) {
        let [c, n, h, w] = self.shape;
        assert_eq!([part.shape[0], part.shape[2], part.shape[3]], [c, h, w]);
        let count = part.shape[1];
        let plane = h * w;
        for ch in 0..c {
            let dst = &mut self.data[ch * n * plane..ch * n * plane + count * plane];
            let src = &part.data[ch * count * plane..(ch + 1) * count * plane];
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape);
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
    }
}

/// `c = alpha · op(a) · op(b) + beta · c` on row-major slices.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    alpha: T,
    a: &[T],
    a_rows: usize,
    a_cols: usize,
    trans_a: bool,
    b: &[T],
    b_rows: usize,
    b_cols: usize,
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    let a = ArrayView2::from_shape((a_rows, a_cols), a).expect("gemm: a shape");
    let b = ArrayView2::from_shape((b_rows, b_cols), b).expect("gemm: b shape");
    let a = if trans_a { a.reversed_axes() } else { a };
    let b = if trans_b { b.reversed_axes() } else { b };
    let (m, n) = (a.nrows(), b.ncols());
    let mut c = ArrayViewMut2::from_shape((m, n), c).expect("gemm: c shape");
    general_mat_mul(alpha, &a, &b, beta, &mut c);
}
