//! Small dense linear-algebra helpers on top of `nalgebra`, shared by the
//! real (coefficient tensor) and complex (MPO/MPS) code paths. Singular value
//! decompositions go through `faer`.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

/// Scalar types the tensor-train kernels are generic over.
pub trait Scalar: ComplexField<RealField = f64> + Copy + faer::traits::ComplexField<Real = f64> {}

impl Scalar for f64 {}
impl Scalar for Complex64 {}

/// Thin QR: `m = q * r` with `q` having `min(rows, cols)` orthonormal columns.
pub fn thin_qr<T: Scalar>(m: DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let qr = m.qr();
    (qr.q(), qr.r())
}

fn to_faer<T: Scalar>(m: &DMatrix<T>) -> faer::Mat<T> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer<T: Scalar>(m: faer::MatRef<'_, T>) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD `m = u diag(s) v^H` with `s` descending. Returns `(u, s, v^H)`.
pub fn thin_svd<T: Scalar>(m: &DMatrix<T>) -> (DMatrix<T>, Vec<f64>, DMatrix<T>) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return (DMatrix::zeros(rows, 0), Vec::new(), DMatrix::zeros(0, cols));
    }
    let svd = to_faer(m).thin_svd().expect("SVD did not converge");
    let s = svd.S();
    let values = (0..k).map(|i| crate::linalg::real_part(s[i])).collect();
    (from_faer(svd.U()), values, from_faer(svd.V()).adjoint())
}

fn real_part<T: Scalar>(x: T) -> f64 {
    ComplexField::real(x)
}

/// Left singular vectors and singular values (descending) of `m`, thin form.
pub fn left_singular<T: Scalar>(m: &DMatrix<T>) -> (DMatrix<T>, Vec<f64>) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(rows, 0), Vec::new());
    }
    let (u, s, _) = thin_svd(m);
    (u, s)
}

/// Singular values of `m` in descending order.
pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let s = to_faer(m).singular_values().expect("SVD did not converge");
    s
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted
/// descending; columns of the returned matrix are the matching eigenvectors.
pub fn hermitian_eigen_desc<T: Scalar>(m: DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Extends the orthonormal columns of `u` to `k` orthonormal columns by
/// Gram-Schmidt against canonical basis vectors (deterministic).
pub fn complete_orthonormal<T: Scalar>(u: DMatrix<T>, k: usize) -> DMatrix<T> {
    let rows = u.nrows();
    assert!(k <= rows, "cannot fit {k} orthonormal columns in dimension {rows}");
    if u.ncols() >= k {
        return u.columns(0, k).into_owned();
    }
    let mut cols: Vec<_> = u.column_iter().map(|c| c.into_owned()).collect();
    for i in 0..rows {
        if cols.len() == k {
            break;
        }
        let mut v = nalgebra::DVector::<T>::zeros(rows);
        v[i] = T::one();
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&v);
                v -= c * proj;
            }
        }
        let nrm = v.norm();
        if nrm > 0.5 {
            cols.push(v.unscale(nrm));
        }
    }
    DMatrix::from_columns(&cols)
}

/// `max |a_ij - b_ij|`.
pub fn max_abs_diff<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (*x - *y).modulus()).fold(0.0, f64::max)
}
