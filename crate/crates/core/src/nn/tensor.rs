use std::cell::OnceCell;

use super::Scalar;
use crate::error::{Error, Result};

/// Row-major dense array with a same-shape gradient buffer.
///
/// The gradient buffer is allocated on first access and reads as zeros
/// until written.
#[derive(Debug, Clone)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: OnceCell<Vec<T>>,
}

impl<T: Scalar> PartialEq for Tensor<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data && self.grad() == other.grad()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
            grad: OnceCell::new(),
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {len} elements, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            grad: OnceCell::new(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn grad(&self) -> &[T] {
        self.grad.get_or_init(|| vec![T::zero(); self.data.len()])
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        self.grad();
        self.grad.get_mut().expect("initialised above")
    }

    /// Simultaneous access to values and gradient.
    pub fn data_and_grad_mut(&mut self) -> (&mut [T], &mut [T]) {
        self.grad();
        (&mut self.data, self.grad.get_mut().expect("initialised above"))
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.get_mut() {
            g.fill(T::zero());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data viewed under a new shape with equal element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?} changes element count", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn item(&self, n: usize) -> &[T] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    /// Converts element type; the gradient buffer is reset.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            grad: OnceCell::new(),
        }
    }
}
