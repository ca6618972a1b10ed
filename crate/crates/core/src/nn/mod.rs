//! Minimal CPU network stack in f64: convolution, batch normalization,
//! pooling, linear layers, bilinear upsampling, and an adaptive-moment
//! optimizer. Every layer pairs `forward` with an explicit `backward`, and
//! all computation is deterministic for a fixed seed.

mod adam;
mod batchnorm;
mod conv;
mod linear;
mod pool;
mod upsample;

pub use adam::{AdamHyper, AdamState};
pub use batchnorm::{BatchNorm2d, BnCache};
pub use conv::Conv2d;
pub use linear::Linear;
pub use pool::{AdaptiveAvgPool, MaxPool2d};
pub use upsample::{upsample_bilinear, upsample_bilinear_backward};

use ndarray::Array4;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

/// A named mutable view of one parameter tensor and its gradient.
pub struct ParamMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
    pub grad: &'a mut [f64],
    /// Whether weight decay applies (convolution/linear weights only).
    pub decay: bool,
}

/// A named mutable view of a non-trainable state tensor (running stats).
pub struct BufMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
}

/// Anything with named parameters and buffers, visited in a fixed order.
pub trait Model {
    fn params_mut(&mut self) -> Vec<ParamMut<'_>>;
    fn buffers_mut(&mut self) -> Vec<BufMut<'_>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.data.len()).sum()
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, params: Vec<ParamMut<'a>>) -> Vec<ParamMut<'a>> {
    params
        .into_iter()
        .map(|mut p| {
            p.name = format!("{prefix}.{}", p.name);
            p
        })
        .collect()
}

pub(crate) fn prefixed_bufs<'a>(prefix: &str, bufs: Vec<BufMut<'a>>) -> Vec<BufMut<'a>> {
    bufs.into_iter()
        .map(|mut b| {
            b.name = format!("{prefix}.{}", b.name);
            b
        })
        .collect()
}

/// Fill a slice with zero-mean normal samples.
pub fn fill_normal(rng: &mut ChaCha8Rng, std: f64, data: &mut [f64]) {
    let dist = rand_distr::Normal::new(0.0, std).expect("valid std");
    for v in data.iter_mut() {
        *v = dist.sample(rng);
    }
}

pub fn relu(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU given the forward output.
pub fn relu_backward(dy: &Array4<f64>, y: &Array4<f64>) -> Array4<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
