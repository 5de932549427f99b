//! Minimal dense network toolkit with hand-written gradients.

mod adam;
mod layers;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{
    flatten, grad_reverse_backward, relu, relu_backward, resize_bilinear, resize_bilinear_backward, resize_nearest,
    resize_nearest_backward, unflatten, Conv2d, ConvCache, ConvSpec, Linear, Param,
};
pub use tensor::{Real, Tensor};
