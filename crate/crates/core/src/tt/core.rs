use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::Scalar;

/// Order-3 core `(left, mode, right)` stored with the first index fastest.
///
/// With this layout the raw buffer is simultaneously the column-major
/// storage of the left unfolding `(left*mode) x right` and of the right
/// unfolding `left x (mode*right)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Core<T> {
    left: usize,
    mode: usize,
    right: usize,
    data: Vec<T>,
}

impl<T: Scalar> Core<T> {
    pub fn new(left: usize, mode: usize, right: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != left * mode * right {
            return Err(Error::ShapeMismatch(format!(
                "core ({left}, {mode}, {right}) needs {} values, got {}",
                left * mode * right,
                data.len()
            )));
        }
        Ok(Self { left, mode, right, data })
    }

    pub fn zeros(left: usize, mode: usize, right: usize) -> Self {
        Self { left, mode, right, data: vec![T::zero(); left * mode * right] }
    }

    pub fn from_fn(left: usize, mode: usize, right: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(left * mode * right);
        for r in 0..right {
            for s in 0..mode {
                for l in 0..left {
                    data.push(f(l, s, r));
                }
            }
        }
        Self { left, mode, right, data }
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, l: usize, s: usize, r: usize) -> T {
        self.data[l + self.left * (s + self.mode * r)]
    }

    #[inline]
    pub fn at_mut(&mut self, l: usize, s: usize, r: usize) -> &mut T {
        &mut self.data[l + self.left * (s + self.mode * r)]
    }

    pub fn left_unfolding(&self) -> DMatrix<T> {
        DMatrix::from_column_slice(self.left * self.mode, self.right, &self.data)
    }

    pub fn right_unfolding(&self) -> DMatrix<T> {
        DMatrix::from_column_slice(self.left, self.mode * self.right, &self.data)
    }

    pub fn from_left_unfolding(m: &DMatrix<T>, left: usize, mode: usize) -> Self {
        assert_eq!(m.nrows(), left * mode, "left unfolding row count");
        Self { left, mode, right: m.ncols(), data: m.as_slice().to_vec() }
    }

    pub fn from_right_unfolding(m: &DMatrix<T>, mode: usize, right: usize) -> Self {
        assert_eq!(m.ncols(), mode * right, "right unfolding column count");
        Self { left: m.nrows(), mode, right, data: m.as_slice().to_vec() }
    }

    /// The `left x right` matrix at mode index `s`.
    pub fn slice(&self, s: usize) -> DMatrix<T> {
        DMatrix::from_fn(self.left, self.right, |l, r| self.at(l, s, r))
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x.modulus_squared()).sum()
    }

    pub fn scaled(&self, a: T) -> Self {
        Self { data: self.data.iter().map(|&x| x * a).collect(), ..*self }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Core<U> {
        Core { left: self.left, mode: self.mode, right: self.right, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// `(left, mode, right) -> (left, mode, m.ncols())` by right-multiplying
    /// the left unfolding.
    pub fn mul_right(&self, m: &DMatrix<T>) -> Self {
        Self::from_left_unfolding(&(self.left_unfolding() * m), self.left, self.mode)
    }

    /// `(left, mode, right) -> (m.nrows(), mode, right)` by left-multiplying
    /// the right unfolding.
    pub fn mul_left(&self, m: &DMatrix<T>) -> Self {
        Self::from_right_unfolding(&(m * self.right_unfolding()), self.mode, self.right)
    }
}
