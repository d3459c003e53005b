//! Complex matrix product operators and states, the Hermitian core
//! condition, and the transform to real coefficient tensors.
//!
//! MPO cores are `Core<Complex64>` of shape `(r_{k-1}, d*d, r_k)` where the
//! mode index is `i + d*j` for the matrix entry `(i, j)`. Dense matrices use
//! multi-indices `(i_1, ..., i_n)` linearized first index fastest.

mod basis;
mod coeff;
mod hermitian;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub use basis::{make_basis, LocalBasis};
pub use coeff::{coeff_to_mpo, imaginary_residue, mpo_to_coeff};
pub use hermitian::{gauge_transform, hermitian_decompose, hermitian_decompose_mpo, is_hermitian_cores, hermitian_defect};

use crate::error::{Error, Result};
use crate::tt::chain;
use crate::tt::io::{read_ttc1, write_ttc1, ComplexKind};
use crate::tt::Core;

/// Largest `d^n` for which operators may be materialized densely.
pub const DENSE_DIM_CAP: usize = 1 << 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Mpo {
    d: usize,
    cores: Vec<Core<Complex64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mps {
    d: usize,
    cores: Vec<Core<Complex64>>,
}

fn dim_power(d: usize, n: usize) -> Option<usize> {
    d.checked_pow(u32::try_from(n).ok()?)
}

impl Mpo {
    pub fn new(d: usize, cores: Vec<Core<Complex64>>) -> Result<Self> {
        chain::check_chain(&cores)?;
        if cores.iter().any(|c| c.mode() != d * d) {
            return Err(Error::ShapeMismatch(format!("MPO cores need mode extent {}", d * d)));
        }
        Ok(Self { d, cores })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[Core<Complex64>] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<Core<Complex64>> {
        self.cores
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.n() - 1].iter().map(|c| c.right()).collect()
    }

    /// `U(l, i, j, m)`.
    pub fn at(&self, k: usize, l: usize, i: usize, j: usize, m: usize) -> Complex64 {
        self.cores[k].at(l, i + self.d * j, m)
    }

    /// `I / d^n` as a rank-one MPO.
    pub fn maximally_mixed(d: usize, n: usize) -> Self {
        let cores = (0..n)
            .map(|_| Core::from_fn(1, d * d, 1, |_, s, _| if s % d == s / d { Complex64::new(1.0 / d as f64, 0.0) } else { Complex64::new(0.0, 0.0) }))
            .collect();
        Self { d, cores }
    }

    /// Dense `d^n x d^n` matrix; only for `d^n <= 2^10`.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        let dim = dim_power(self.d, self.n()).filter(|&x| x <= DENSE_DIM_CAP).ok_or(Error::SizeCap {
            size: dim_power(self.d, self.n()).unwrap_or(usize::MAX),
            cap: DENSE_DIM_CAP,
        })?;
        let flat = chain::dense_left(&self.cores);
        let d = self.d;
        let mut out = DMatrix::zeros(dim, dim);
        for (lin, &v) in flat.iter().enumerate() {
            let (mut rest, mut row, mut col, mut stride) = (lin, 0, 0, 1);
            for _ in 0..self.n() {
                let s = rest % (d * d);
                rest /= d * d;
                row += (s % d) * stride;
                col += (s / d) * stride;
                stride *= d;
            }
            out[(row, col)] = v;
        }
        Ok(out)
    }

    /// Hilbert-Schmidt inner product `Tr(self^dagger other)`.
    pub fn inner(&self, other: &Mpo) -> Result<Complex64> {
        if self.d != other.d || self.n() != other.n() {
            return Err(Error::ShapeMismatch("MPO shapes differ".into()));
        }
        Ok(chain::inner(&self.cores, &other.cores))
    }

    pub fn frobenius_norm(&self) -> f64 {
        chain::inner(&self.cores, &self.cores).re.max(0.0).sqrt()
    }

    /// `||self - other||_F` through the rank-summed difference, orthogonalized.
    pub fn distance(&self, other: &Mpo) -> Result<f64> {
        if self.d != other.d || self.n() != other.n() {
            return Err(Error::ShapeMismatch("MPO shapes differ".into()));
        }
        let diff = chain::axpy(Complex64::new(-1.0, 0.0), &self.cores, &other.cores);
        let lo = chain::left_orthogonalize(&diff);
        Ok(lo[lo.len() - 1].norm_sq().sqrt())
    }

    /// Conjugate transpose: swap `(i, j)` and conjugate in every core.
    pub fn adjoint(&self) -> Mpo {
        let d = self.d;
        let cores = self
            .cores
            .iter()
            .map(|c| Core::from_fn(c.left(), c.mode(), c.right(), |l, s, r| c.at(l, s / d + d * (s % d), r).conj()))
            .collect();
        Mpo { d, cores }
    }

    pub fn scaled(&self, a: Complex64) -> Mpo {
        let mut cores = self.cores.clone();
        cores[0] = cores[0].scaled(a);
        Mpo { d: self.d, cores }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write_ttc1(w, ComplexKind::Mpo, &vec![self.d; self.n()], &self.cores)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (kind, dims, cores) = read_ttc1(r)?;
        if kind != ComplexKind::Mpo || dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Format("expected a uniform MPO container".into()));
        }
        Mpo::new(dims[0], cores)
    }
}

impl Mps {
    pub fn new(d: usize, cores: Vec<Core<Complex64>>) -> Result<Self> {
        chain::check_chain(&cores)?;
        if cores.iter().any(|c| c.mode() != d) {
            return Err(Error::ShapeMismatch(format!("MPS cores need mode extent {d}")));
        }
        Ok(Self { d, cores })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[Core<Complex64>] {
        &self.cores
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.n() - 1].iter().map(|c| c.right()).collect()
    }

    /// `|0...0>`.
    pub fn product_zero(d: usize, n: usize) -> Self {
        let cores = (0..n).map(|_| Core::from_fn(1, d, 1, |_, s, _| Complex64::new(if s == 0 { 1.0 } else { 0.0 }, 0.0))).collect();
        Self { d, cores }
    }

    pub fn amplitude(&self, idx: &[usize]) -> Complex64 {
        chain::entry(&self.cores, idx)
    }

    pub fn to_dense(&self) -> Result<DVector<Complex64>> {
        let size = dim_power(self.d, self.n()).unwrap_or(usize::MAX);
        if size > crate::tt::DENSE_CAP {
            return Err(Error::SizeCap { size, cap: crate::tt::DENSE_CAP });
        }
        Ok(DVector::from_column_slice(chain::dense_left(&self.cores).as_slice()))
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Mps) -> Result<Complex64> {
        if self.d != other.d || self.n() != other.n() {
            return Err(Error::ShapeMismatch("MPS shapes differ".into()));
        }
        Ok(chain::inner(&self.cores, &other.cores))
    }

    pub fn norm(&self) -> f64 {
        chain::inner(&self.cores, &self.cores).re.max(0.0).sqrt()
    }

    /// Left-orthogonal copy scaled to unit norm.
    pub fn normalized(&self) -> Result<Mps> {
        let mut cores = chain::left_orthogonalize(&self.cores);
        let last = cores.len() - 1;
        let nrm = cores[last].norm_sq().sqrt();
        if nrm == 0.0 {
            return Err(Error::ZeroTensor);
        }
        cores[last] = cores[last].scaled(Complex64::new(1.0 / nrm, 0.0));
        Ok(Mps { d: self.d, cores })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write_ttc1(w, ComplexKind::Mps, &vec![self.d; self.n()], &self.cores)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (kind, dims, cores) = read_ttc1(r)?;
        if kind != ComplexKind::Mps || dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Format("expected a uniform MPS container".into()));
        }
        Mps::new(dims[0], cores)
    }
}

/// Orthonormal Hermitian basis of `r x r` matrices, stored as the columns
/// `vec(Q_a)` (column-major) of a unitary `r^2 x r^2` matrix.
fn hermitian_bond_unitary(r: usize) -> DMatrix<Complex64> {
    if r == 1 {
        return DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    }
    let basis = make_basis(r).expect("r >= 2");
    DMatrix::from_fn(r * r, r * r, |row, a| basis.get(a)[(row % r, row / r)])
}

/// `|psi><psi|` as an MPO whose cores satisfy the Hermitian condition.
///
/// The doubled bond `(l, l')` (l fastest) is rotated by the unitary whose
/// columns are an orthonormal Hermitian basis `Q_a` of bond matrices, which
/// turns each core into `<Q_a, A_i Q_b A_j^dagger>` with `A_i = psi_k(., i, .)`.
pub fn mps_to_mpo(psi: &Mps) -> Mpo {
    let d = psi.d;
    let n = psi.n();
    let units: Vec<DMatrix<Complex64>> = (0..=n)
        .map(|k| {
            let r = if k == 0 || k == n { 1 } else { psi.cores[k - 1].right() };
            hermitian_bond_unitary(r)
        })
        .collect();
    let cores = psi
        .cores
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let (l, r) = (c.left(), c.right());
            let raw = Core::from_fn(l * l, d * d, r * r, |bl, s, br| {
                let (i, j) = (s % d, s / d);
                c.at(bl % l, i, br % r) * c.at(bl / l, j, br / r).conj()
            });
            raw.mul_right(&units[k + 1]).mul_left(&units[k].adjoint())
        })
        .collect();
    Mpo { d, cores }
}

/// `Tr(rho)` by contracting every core with `delta_ij`.
pub fn mpo_trace(m: &Mpo) -> Complex64 {
    let d = m.d;
    let mut env = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for c in &m.cores {
        let mut t = DMatrix::zeros(c.left(), c.right());
        for i in 0..d {
            t += c.slice(i + d * i);
        }
        env = env * t;
    }
    env[(0, 0)]
}

/// `<psi| rho |psi>` contracted site by site.
pub fn expectation(psi: &Mps, m: &Mpo) -> Result<Complex64> {
    if psi.d != m.d || psi.n() != m.n() {
        return Err(Error::ShapeMismatch("state and operator shapes differ".into()));
    }
    let d = m.d;
    // env indexed (a, A, a') flattened a + ra * (A + rA * a')
    let mut env = vec![Complex64::new(1.0, 0.0)];
    let (mut ra, mut rm) = (1, 1);
    for (p, u) in psi.cores.iter().zip(&m.cores) {
        let (pa, pm) = (p.right(), u.right());
        let mut next = vec![Complex64::new(0.0, 0.0); pa * pm * pa];
        for a2 in 0..ra {
            for am in 0..rm {
                for a1 in 0..ra {
                    let e = env[a1 + ra * (am + rm * a2)];
                    if e == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for i in 0..d {
                        for j in 0..d {
                            for bm in 0..pm {
                                let w = e * u.at(am, i + d * j, bm);
                                if w == Complex64::new(0.0, 0.0) {
                                    continue;
                                }
                                for b2 in 0..pa {
                                    let wr = w * p.at(a2, j, b2);
                                    for b1 in 0..pa {
                                        next[b1 + pa * (bm + pm * b2)] += p.at(a1, i, b1).conj() * wr;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        env = next;
        ra = pa;
        rm = pm;
    }
    Ok(env[0])
}

/// `|<psi|rho|psi>|`.
pub fn fidelity(psi: &Mps, m: &Mpo) -> Result<f64> {
    Ok(expectation(psi, m)?.norm())
}

/// `|<psi|phi>|^2`.
pub fn fidelity_pure(psi: &Mps, phi: &Mps) -> Result<f64> {
    Ok(psi.inner(phi)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximally_mixed_trace_and_dense() {
        let m = Mpo::maximally_mixed(2, 3);
        assert!((mpo_trace(&m) - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        let dense = m.to_dense().unwrap();
        assert!((dense - DMatrix::from_diagonal_element(8, 8, Complex64::new(0.125, 0.0))).camax() < 1e-15);
    }

    #[test]
    fn product_state_projector() {
        let psi = Mps::product_zero(2, 3);
        let rho = mps_to_mpo(&psi);
        assert_eq!(rho.ranks(), vec![1, 1]);
        let dense = rho.to_dense().unwrap();
        assert!((dense[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((dense.norm() - 1.0).abs() < 1e-15);
        assert!((fidelity(&psi, &rho).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn adjoint_matches_dense() {
        let cores = vec![
            Core::from_fn(1, 4, 2, |_, s, r| Complex64::new(s as f64 + 0.5, r as f64 - 0.3 * s as f64)),
            Core::from_fn(2, 4, 1, |l, s, _| Complex64::new(l as f64 - s as f64, 0.7 * s as f64)),
        ];
        let m = Mpo::new(2, cores).unwrap();
        let a = m.adjoint().to_dense().unwrap();
        assert!((a - m.to_dense().unwrap().adjoint()).camax() < 1e-14);
    }
}
