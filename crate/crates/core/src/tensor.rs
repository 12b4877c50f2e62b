//! Dense row-major tensors with mode-wise linear maps.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for k in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.shape[k + 1];
        }
        strides
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        index.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.flat_index(index)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Applies `f` to every fiber along axis `mode`; `f` must preserve length.
    pub fn map_mode(&self, mode: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Tensor {
        let len = self.shape[mode];
        let stride = self.strides()[mode];
        let outer: usize = self.shape[..mode].iter().product();
        let mut out = self.clone();
        let mut fiber = vec![0.0; len];
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * len * stride + inner;
                for (t, v) in fiber.iter_mut().enumerate() {
                    *v = self.data[base + t * stride];
                }
                let mapped = f(&fiber);
                debug_assert_eq!(mapped.len(), len);
                for (t, v) in mapped.into_iter().enumerate() {
                    out.data[base + t * stride] = v;
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_maps_match_matrix_products() {
        // t = [[1,2],[3,4]]; mode 0 with M = [[0,1],[1,0]] swaps rows,
        // mode 1 swaps columns.
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let swap = |v: &[f64]| vec![v[1], v[0]];
        assert_eq!(t.map_mode(0, swap).data(), [3.0, 4.0, 1.0, 2.0]);
        assert_eq!(t.map_mode(1, swap).data(), [2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn three_way_indexing() {
        let t = Tensor::new(vec![2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        assert_eq!(t.get(&[1, 2, 3]), 23.0);
        let doubled_mid = t.map_mode(1, |v| v.iter().map(|x| 2.0 * x).collect());
        assert_eq!(doubled_mid.get(&[1, 1, 0]), 2.0 * 16.0);
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }
}
