//! Dense row-major tensors.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// A dense row-major tensor of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(CoreError::Shape(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn fill(&mut self, v: S) {
        self.data.fill(v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Convert element-wise to another scalar type through f64.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| T::from_f64(v.to_f64())).collect(),
        }
    }

    /// Flat offset of `[n, c]` in an NCHW tensor, i.e. the start of that plane.
    #[inline]
    pub fn plane_offset(&self, n: usize, c: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 4);
        let (ch, h, w) = (self.shape[1], self.shape[2], self.shape[3]);
        ((n * ch) + c) * h * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn cast_round_trips_values() {
        let t = Tensor::<f32>::from_vec(&[3], vec![1.5, -2.0, 0.25]).unwrap();
        let d: Tensor<f64> = t.cast();
        let back: Tensor<f32> = d.cast();
        assert_eq!(t, back);
    }
}
