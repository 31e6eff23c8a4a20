//! Dense f64 tensors, a reverse-mode autodiff tape, parameter
//! initialization, dropout, Adam, and a finite-difference gradient oracle.

pub mod adam;
pub mod gradcheck;
pub mod init;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{finite_diff_check, FdOptions, FdReport};
pub use init::{dropout, glorot_uniform, glorot_uniform_with_fans, nonlinearity, Nonlinearity};
pub use tape::{Gradients, RowIndex, Segments, Tape, Tid};
pub use tensor::{matmul, Tensor};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Named parameter tensors with a deterministic iteration order.
pub type ParamMap = BTreeMap<String, Tensor>;

/// Numerically stable softmax over a score vector with an optional mask.
///
/// Masked entries receive probability 0 and do not participate in the
/// normalization. Errors if every entry is masked.
pub fn softmax_stable(scores: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::data("softmax over empty score vector"));
    }
    if let Some(m) = mask {
        if m.len() != scores.len() {
            return Err(Error::Shape {
                expected: format!("mask of {}", scores.len()),
                got: format!("{}", m.len()),
                context: "softmax_stable".into(),
            });
        }
    }
    let keep = |i: usize| mask.map_or(true, |m| m[i]);
    let max = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::data("softmax with all entries masked"));
    }
    let mut out = vec![0.0; scores.len()];
    let mut sum = 0.0;
    for (i, &v) in scores.iter().enumerate() {
        if keep(i) {
            out[i] = (v - max).exp();
            sum += out[i];
        }
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_symmetry() {
        assert_eq!(softmax_stable(&[0.0, 0.0], None).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_closed_form() {
        let out = softmax_stable(&[2.0f64.ln(), 0.0], None).unwrap();
        assert!((out[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((out[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_no_overflow() {
        let out = softmax_stable(&[1000.0, 0.0], None).unwrap();
        assert!(out[0].is_finite() && out[1].is_finite());
        assert!((out[0] - 1.0).abs() < 1e-12);
        assert!(out[1] < 1e-300);
    }

    #[test]
    fn softmax_mask() {
        let out = softmax_stable(&[5.0, 1.0, 1.0], Some(&[false, true, true])).unwrap();
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_all_masked_errors() {
        assert!(softmax_stable(&[1.0, 2.0], Some(&[false, false])).is_err());
    }

    proptest! {
        #[test]
        fn softmax_simplex_and_shift_invariance(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let a = softmax_stable(&scores, None).unwrap();
            prop_assert!(a.iter().all(|v| *v >= 0.0));
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = scores.iter().map(|v| v + shift).collect();
            let b = softmax_stable(&shifted, None).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
