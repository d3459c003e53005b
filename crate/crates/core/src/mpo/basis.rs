use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Orthonormal Hermitian basis of `d x d` matrices under the
/// Hilbert-Schmidt inner product, identity first.
///
/// `d = 2` gives `{I, X, Y, Z} / sqrt(2)`. For `d >= 3` the order is the
/// `d - 1` diagonal generalized Gell-Mann matrices, then the symmetric ones
/// `(E_jk + E_kj)/sqrt(2)`, then the antisymmetric ones
/// `-i (E_jk - E_kj)/sqrt(2)`, with `(j, k)` pairs in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalBasis {
    d: usize,
    matrices: Vec<DMatrix<Complex64>>,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn make_basis(d: usize) -> Result<LocalBasis> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("local dimension {d} < 2")));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut matrices = Vec::with_capacity(d * d);
    if d == 2 {
        matrices.push(DMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]));
        matrices.push(DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(h, 0.0), c(h, 0.0), c(0.0, 0.0)]));
        matrices.push(DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -h), c(0.0, h), c(0.0, 0.0)]));
        matrices.push(DMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-h, 0.0)]));
        return Ok(LocalBasis { d, matrices });
    }
    matrices.push(DMatrix::from_diagonal_element(d, d, c(1.0 / (d as f64).sqrt(), 0.0)));
    for l in 1..d {
        let scale = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = c(scale, 0.0);
        }
        m[(l, l)] = c(-(l as f64) * scale, 0.0);
        matrices.push(m);
    }
    for j in 0..d {
        for k in j + 1..d {
            let mut m = DMatrix::zeros(d, d);
            m[(j, k)] = c(h, 0.0);
            m[(k, j)] = c(h, 0.0);
            matrices.push(m);
        }
    }
    for j in 0..d {
        for k in j + 1..d {
            let mut m = DMatrix::zeros(d, d);
            m[(j, k)] = c(0.0, -h);
            m[(k, j)] = c(0.0, h);
            matrices.push(m);
        }
    }
    Ok(LocalBasis { d, matrices })
}

impl LocalBasis {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrices(&self) -> &[DMatrix<Complex64>] {
        &self.matrices
    }

    pub fn get(&self, s: usize) -> &DMatrix<Complex64> {
        &self.matrices[s]
    }

    /// `d^2 x d^2` matrix of Hilbert-Schmidt inner products.
    pub fn gram(&self) -> DMatrix<Complex64> {
        let n = self.matrices.len();
        DMatrix::from_fn(n, n, |a, b| self.matrices[a].dotc(&self.matrices[b]))
    }
}
