//! Hermitian core condition `U(l, i, j, m) = conj(U(l, j, i, m))`, real gauge
//! transforms, and the Hermitian-preserving decomposition sweep.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::Mpo;
use crate::error::{Error, Result};
use crate::linalg::hermitian_eigen_desc;
use crate::tt::{chain, check_ranks, Core};

const CORE_TOL: f64 = 1e-12;
const HERMITIAN_INPUT_TOL: f64 = 1e-10;
const CLUSTER_TOL: f64 = 1e-10;

/// Largest `|U(l,i,j,m) - conj(U(l,j,i,m))|` relative to each core's largest modulus.
pub fn hermitian_defect(m: &Mpo) -> f64 {
    let d = m.d();
    m.cores()
        .iter()
        .map(|c| {
            let scale = c.data().iter().fold(0.0f64, |a, z| a.max(z.norm()));
            if scale == 0.0 {
                return 0.0;
            }
            let mut worst = 0.0f64;
            for r in 0..c.right() {
                for j in 0..d {
                    for i in 0..d {
                        for l in 0..c.left() {
                            worst = worst.max((c.at(l, i + d * j, r) - c.at(l, j + d * i, r).conj()).norm());
                        }
                    }
                }
            }
            worst / scale
        })
        .fold(0.0, f64::max)
}

pub fn is_hermitian_cores(m: &Mpo) -> bool {
    hermitian_defect(m) <= CORE_TOL
}

/// `U_k <- G_{k-1}^{-1} U_k G_k` with real invertible bond matrices.
pub fn gauge_transform(m: &Mpo, gauges: &[DMatrix<f64>]) -> Result<Mpo> {
    let n = m.n();
    let ranks = m.ranks();
    if gauges.len() != n - 1 {
        return Err(Error::ShapeMismatch(format!("need {} gauge matrices", n - 1)));
    }
    let mut inverses = Vec::with_capacity(n - 1);
    for (k, (g, &r)) in gauges.iter().zip(&ranks).enumerate() {
        if g.shape() != (r, r) {
            return Err(Error::ShapeMismatch(format!("gauge {k} must be {r}x{r}")));
        }
        let inv = g.clone().try_inverse().ok_or(Error::SingularGauge(k + 1))?;
        let cond = g.norm() * inv.norm();
        if !cond.is_finite() || cond > 1e14 {
            return Err(Error::SingularGauge(k + 1));
        }
        inverses.push(inv.map(|x| Complex64::new(x, 0.0)));
    }
    let cores = m
        .cores()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut c = c.clone();
            if k > 0 {
                c = c.mul_left(&inverses[k - 1]);
            }
            if k + 1 < n {
                c = c.mul_right(&gauges[k].map(|x| Complex64::new(x, 0.0)));
            }
            c
        })
        .collect();
    Mpo::new(m.d(), cores)
}

/// `conj(v(l, j, i))` for a column indexed `l + left * (i + d * j)`.
fn swap_conj(v: &DVector<Complex64>, left: usize, d: usize) -> DVector<Complex64> {
    DVector::from_fn(v.len(), |row, _| {
        let l = row % left;
        let s = row / left;
        let (i, j) = (s % d, s / d);
        v[l + left * (j + d * i)].conj()
    })
}

/// Orthonormal columns spanning the leading `r` eigenvectors of the
/// Hermitian `gram`, each fixed by `swap_conj`. Eigenvalues are grouped into
/// clusters and the real-combination step is applied inside each cluster.
fn symmetric_eigenbasis(gram: DMatrix<Complex64>, left: usize, d: usize, r: usize) -> DMatrix<Complex64> {
    let rows = gram.nrows();
    let (vals, vecs) = hermitian_eigen_desc(gram);
    let top = vals[0].max(0.0);
    let mut chosen: Vec<DVector<Complex64>> = Vec::with_capacity(r);
    let mut start = 0;
    while chosen.len() < r && start < rows {
        let mut end = start + 1;
        while end < rows && (vals[start] - vals[end]).abs() <= CLUSTER_TOL * top.max(f64::MIN_POSITIVE) {
            end += 1;
        }
        let mut candidates = Vec::with_capacity(2 * (end - start));
        for c in start..end {
            let v = vecs.column(c).into_owned();
            let f = swap_conj(&v, left, d);
            candidates.push((&v + &f).unscale(2.0));
            candidates.push((&v - &f) * Complex64::new(0.0, -0.5));
        }
        let want = (end - start).min(r - chosen.len());
        let before = chosen.len();
        // pivoted Gram-Schmidt: always take the candidate with the largest residual
        while chosen.len() - before < want {
            let mut best: Option<(f64, DVector<Complex64>)> = None;
            for cand in &candidates {
                let mut res = cand.clone();
                for _ in 0..2 {
                    for q in &chosen {
                        let coef = q.dotc(&res).re;
                        res -= q * Complex64::new(coef, 0.0);
                    }
                }
                let nrm = res.norm();
                if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                    best = Some((nrm, res));
                }
            }
            match best {
                Some((nrm, res)) if nrm > 1e-8 => chosen.push(res.unscale(nrm)),
                _ => break,
            }
        }
        start = end;
    }
    if chosen.len() < r {
        // rank deficiency: continue with symmetric canonical-type vectors
        for row in 0..rows {
            if chosen.len() == r {
                break;
            }
            let mut e = DVector::zeros(rows);
            e[row] = Complex64::new(1.0, 0.0);
            let f = swap_conj(&e, left, d);
            for cand in [(&e + &f).unscale(2.0), (&e - &f) * Complex64::new(0.0, -0.5)] {
                let mut res = cand;
                for _ in 0..2 {
                    for q in &chosen {
                        let coef = q.dotc(&res).re;
                        res -= q * Complex64::new(coef, 0.0);
                    }
                }
                let nrm = res.norm();
                if nrm > 1e-6 && chosen.len() < r {
                    chosen.push(res.unscale(nrm));
                }
            }
        }
    }
    DMatrix::from_columns(&chosen)
}

fn check_dense_hermitian(rho: &DMatrix<Complex64>) -> Result<()> {
    let scale = rho.norm();
    let defect = (rho - rho.adjoint()).norm();
    if defect > HERMITIAN_INPUT_TOL * scale {
        return Err(Error::NotHermitian(if scale > 0.0 { defect / scale } else { defect }));
    }
    Ok(())
}

/// Decomposes a dense Hermitian `d^n x d^n` matrix into an MPO whose cores
/// satisfy the Hermitian condition.
pub fn hermitian_decompose(rho: &DMatrix<Complex64>, d: usize, ranks: &[usize]) -> Result<Mpo> {
    let dim = rho.nrows();
    if rho.ncols() != dim || d < 2 {
        return Err(Error::ShapeMismatch("need a square matrix and d >= 2".into()));
    }
    let mut n = 0;
    let mut p = 1usize;
    while p < dim {
        p *= d;
        n += 1;
    }
    if p != dim || n < 2 {
        return Err(Error::ShapeMismatch(format!("dimension {dim} is not d^n with n >= 2 for d={d}")));
    }
    if dim > super::DENSE_DIM_CAP {
        return Err(Error::SizeCap { size: dim, cap: super::DENSE_DIM_CAP });
    }
    check_dense_hermitian(rho)?;
    let dims = vec![d * d; n];
    check_ranks(&dims, ranks)?;
    // Y(s_1, ..., s_n) = rho(I, J) with s_k = i_k + d j_k, first index fastest
    let mut y = vec![Complex64::new(0.0, 0.0); dim * dim];
    for col in 0..dim {
        for row in 0..dim {
            let (mut lin, mut stride, mut ri, mut ci) = (0, 1, row, col);
            for _ in 0..n {
                lin += (ri % d + d * (ci % d)) * stride;
                ri /= d;
                ci /= d;
                stride *= d * d;
            }
            y[lin] = rho[(row, col)];
        }
    }
    let mut left = 1;
    let mut cores = Vec::with_capacity(n);
    for &r in ranks {
        let rows = left * d * d;
        let mk = DMatrix::from_vec(rows, y.len() / rows, y);
        let gram = &mk * mk.adjoint();
        let u = symmetric_eigenbasis(gram, left, d, r);
        y = (u.adjoint() * &mk).as_slice().to_vec();
        cores.push(Core::from_left_unfolding(&u, left, d * d));
        left = r;
    }
    cores.push(Core::new(left, d * d, 1, y)?);
    Mpo::new(d, cores)
}

/// Same sweep on MPO input without densifying: right-orthogonalize, then the
/// bond-space Gram matrix of each carried core stands in for `M_k M_k^dagger`.
pub fn hermitian_decompose_mpo(m: &Mpo, ranks: &[usize]) -> Result<Mpo> {
    let d = m.d();
    let scale = m.frobenius_norm();
    let defect = m.distance(&m.adjoint())?;
    if defect > HERMITIAN_INPUT_TOL * scale {
        return Err(Error::NotHermitian(if scale > 0.0 { defect / scale } else { defect }));
    }
    check_ranks(&vec![d * d; m.n()], ranks)?;
    let mut cores = chain::right_orthogonalize(m.cores());
    let n = cores.len();
    for k in 0..n - 1 {
        let c = &cores[k];
        let l = c.left_unfolding();
        let u = symmetric_eigenbasis(&l * l.adjoint(), c.left(), d, ranks[k]);
        let carry = u.adjoint() * &l;
        let next = cores[k + 1].mul_left(&carry);
        cores[k] = Core::from_left_unfolding(&u, c.left(), d * d);
        cores[k + 1] = next;
    }
    Mpo::new(d, cores)
}
