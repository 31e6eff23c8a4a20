//! Dense row-major tensors over `f64`.
//!
//! Everything in this crate runs in 64-bit arithmetic so analytic gradients
//! can be validated against central finite differences at tight tolerances.
//! Tensors are value types: cheap to clone at desk scale and safe to share
//! read-only.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating element count and finiteness.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                expected: format!("{expected} values for shape {shape:?}"),
                got: format!("{} values", data.len()),
                context: "Tensor::new".into(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Tensor::new".into()));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for op outputs; skips the finiteness scan.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension; a 1-D tensor of length n has n rows of width 1.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per leading row.
    pub fn row_width(&self) -> usize {
        let r = self.rows();
        if r == 0 {
            0
        } else {
            self.data.len() / r
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.row_width() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Shape {
                expected: "1 element".into(),
                got: format!("{}", self.data.len()),
                context: "Tensor::item".into(),
            });
        }
        Ok(self.data[0])
    }

    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Shape {
                expected: format!("{expected} values for shape {shape:?}"),
                got: format!("{} values", self.data.len()),
                context: "Tensor::reshaped".into(),
            });
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }
}

/// Plain matrix product of two 2-D tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Shape {
            expected: "[p x q] * [q x r]".into(),
            got: format!("{:?} * {:?}", a.shape(), b.shape()),
            context: "matmul".into(),
        });
    }
    let (p, q, r) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        for k in 0..q {
            let aik = a.data()[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data()[k * r..(k + 1) * r];
            let orow = &mut out[i * r..(i + 1) * r];
            for j in 0..r {
                orow[j] += aik * brow[j];
            }
        }
    }
    Ok(Tensor::from_parts(vec![p, r], out))
}
