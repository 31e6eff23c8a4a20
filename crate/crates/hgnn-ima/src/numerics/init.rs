//! Parameter initialization, dropout, and pointwise nonlinearities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::tape::sigmoid_scalar;
use crate::numerics::tensor::Tensor;

/// Glorot-uniform tensor with fans taken from the 2-D shape.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    glorot_uniform_with_fans([rows, cols], rows, cols, rng)
}

/// Glorot-uniform init with explicit fans, for block-structured tensors whose
/// stored shape differs from the logical map (e.g. stacked per-head blocks).
pub fn glorot_uniform_with_fans(
    shape: impl Into<Vec<usize>>,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor {
    let shape = shape.into();
    let n: usize = shape.iter().product();
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_parts(shape, data)
}

/// Draws a 0/1 keep mask with keep probability `1 - rate`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 })
        .collect()
}

/// Inverted dropout on a plain tensor. With `training = false` this is the
/// identity.
pub fn dropout(x: &Tensor, rate: f64, training: bool, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!("dropout rate {rate} not in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let scale = 1.0 / (1.0 - rate);
    let mask = dropout_mask(x.len(), rate, rng);
    let data: Vec<f64> = x
        .data()
        .iter()
        .zip(&mask)
        .map(|(v, m)| v * m * scale)
        .collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Nonlinearity {
    Sigmoid,
    Tanh,
}

pub fn nonlinearity(x: &Tensor, kind: Nonlinearity) -> Tensor {
    let data: Vec<f64> = match kind {
        Nonlinearity::Sigmoid => x.data().iter().map(|&v| sigmoid_scalar(v)).collect(),
        Nonlinearity::Tanh => x.data().iter().map(|v| v.tanh()).collect(),
    };
    Tensor::from_parts(x.shape().to_vec(), data)
}
