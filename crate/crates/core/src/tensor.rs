//! Dense row-major tensor values.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::real::Real;

/// A dense N-dimensional array stored in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err("Tensor::new", shape, &[data.len()]);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    /// Square identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return shape_err("reshape", &self.shape, shape);
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Element at a multi-index.
    pub fn at(&self, idx: &[usize]) -> T {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &d) in idx.iter().zip(&self.shape) {
            off = off * d + i;
        }
        self.data[off]
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let c = self.shape[self.shape.len() - 1];
        &self.data[i * c..(i + 1) * c]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// Slab `index` along axis 0, keeping the leading axis with extent 1.
    pub fn select0(&self, index: usize) -> Result<Self> {
        if self.shape.is_empty() || index >= self.shape[0] {
            return invalid("select0", "index out of range");
        }
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Ok(Self {
            shape,
            data: self.data[index * inner..(index + 1) * inner].to_vec(),
        })
    }

    /// Concatenate along axis 0.
    pub fn stack0(parts: &[Tensor<T>]) -> Result<Self> {
        let first = match parts.first() {
            Some(f) => f,
            None => return invalid("stack0", "no tensors"),
        };
        let mut shape = first.shape.clone();
        let mut data = Vec::new();
        shape[0] = 0;
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return shape_err("stack0", &first.shape, &p.shape);
            }
            shape[0] += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Self { shape, data })
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// Split a shape around `axis` into (outer, axis extent, inner).
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_element_count() {
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f32>::new(&[2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.numel(), 6);
    }

    #[test]
    fn select_and_stack_are_inverse() {
        let t = Tensor::<f64>::from_f64(&[3, 2], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let parts: Vec<_> = (0..3).map(|i| t.select0(i).unwrap()).collect();
        assert_eq!(parts[1].data(), &[3., 4.]);
        assert_eq!(Tensor::stack0(&parts).unwrap(), t);
    }

    #[test]
    fn at_uses_row_major_order() {
        let t = Tensor::<f32>::from_f64(&[2, 2, 2], &[0., 1., 2., 3., 4., 5., 6., 7.]).unwrap();
        assert_eq!(t.at(&[1, 0, 1]), 5.0);
    }
}
