//! Generic kernels over a chain of order-3 cores (train with boundary ranks 1).

use nalgebra::DMatrix;

use super::core::Core;
use crate::error::{Error, Result};
use crate::linalg::{thin_qr, Scalar};

pub fn check_chain<T: Scalar>(cores: &[Core<T>]) -> Result<()> {
    if cores.is_empty() {
        return Err(Error::ShapeMismatch("empty core list".into()));
    }
    if cores[0].left() != 1 || cores[cores.len() - 1].right() != 1 {
        return Err(Error::ShapeMismatch("boundary ranks must be 1".into()));
    }
    for (k, w) in cores.windows(2).enumerate() {
        if w[0].right() != w[1].left() {
            return Err(Error::ShapeMismatch(format!(
                "core {} right rank {} != core {} left rank {}",
                k,
                w[0].right(),
                k + 1,
                w[1].left()
            )));
        }
    }
    Ok(())
}

pub fn entry<T: Scalar>(cores: &[Core<T>], idx: &[usize]) -> T {
    let mut v = vec![T::one()];
    let mut next = Vec::new();
    for (core, &s) in cores.iter().zip(idx) {
        next.clear();
        next.resize(core.right(), T::zero());
        for (r, out) in next.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (l, &vl) in v.iter().enumerate() {
                acc += vl * core.at(l, s, r);
            }
            *out = acc;
        }
        std::mem::swap(&mut v, &mut next);
    }
    v[0]
}

/// Dense left part `prod(mode) x right` of `cores` (first index fastest).
pub fn dense_left<T: Scalar>(cores: &[Core<T>]) -> DMatrix<T> {
    let mut acc = DMatrix::<T>::from_element(1, 1, T::one());
    for core in cores {
        let p = acc.nrows();
        let mut next = DMatrix::<T>::zeros(p * core.mode(), core.right());
        for s in 0..core.mode() {
            let block = &acc * core.slice(s);
            next.rows_mut(p * s, p).copy_from(&block);
        }
        acc = next;
    }
    acc
}

/// Dense right part `left x prod(mode)` of `cores` (first index fastest).
pub fn dense_right<T: Scalar>(cores: &[Core<T>]) -> DMatrix<T> {
    let mut acc = DMatrix::<T>::from_element(1, 1, T::one());
    for core in cores.iter().rev() {
        let q = acc.ncols();
        let mut next = DMatrix::<T>::zeros(core.left(), core.mode() * q);
        for s in 0..core.mode() {
            let block = core.slice(s) * &acc;
            for c in 0..q {
                next.set_column(s + core.mode() * c, &block.column(c));
            }
        }
        acc = next;
    }
    acc
}

/// `sum conj(a) * b` by left-to-right environment contraction.
pub fn inner<T: Scalar>(a: &[Core<T>], b: &[Core<T>]) -> T {
    let mut env = DMatrix::<T>::from_element(1, 1, T::one());
    for (ca, cb) in a.iter().zip(b) {
        let mut next = DMatrix::<T>::zeros(ca.right(), cb.right());
        for s in 0..ca.mode() {
            next += ca.slice(s).adjoint() * (&env * cb.slice(s));
        }
        env = next;
    }
    env[(0, 0)]
}

/// QR sweep making cores `0..n-1` left-orthogonal; ranks may shrink to the
/// row count of an unfolding.
pub fn left_orthogonalize<T: Scalar>(cores: &[Core<T>]) -> Vec<Core<T>> {
    let n = cores.len();
    let mut out = Vec::with_capacity(n);
    let mut carry: Option<DMatrix<T>> = None;
    for (k, core) in cores.iter().enumerate() {
        let core = match &carry {
            Some(r) => core.mul_left(r),
            None => core.clone(),
        };
        if k + 1 == n {
            out.push(core);
            break;
        }
        let (q, r) = thin_qr(core.left_unfolding());
        out.push(Core::from_left_unfolding(&q, core.left(), core.mode()));
        carry = Some(r);
    }
    out
}

/// LQ sweep making cores `1..n` right-orthogonal (orthonormal rows of the
/// right unfolding).
pub fn right_orthogonalize<T: Scalar>(cores: &[Core<T>]) -> Vec<Core<T>> {
    let n = cores.len();
    let mut out: Vec<Core<T>> = Vec::with_capacity(n);
    let mut carry: Option<DMatrix<T>> = None;
    for (k, core) in cores.iter().enumerate().rev() {
        let core = match &carry {
            Some(l) => core.mul_right(l),
            None => core.clone(),
        };
        if k == 0 {
            out.push(core);
            break;
        }
        let (q, r) = thin_qr(core.right_unfolding().adjoint());
        out.push(Core::from_right_unfolding(&q.adjoint(), core.mode(), core.right()));
        carry = Some(r.adjoint());
    }
    out.reverse();
    out
}

/// Block-sum train representing `alpha * a + b`; ranks add.
pub fn axpy<T: Scalar>(alpha: T, a: &[Core<T>], b: &[Core<T>]) -> Vec<Core<T>> {
    let n = a.len();
    if n == 1 {
        let ca = &a[0];
        let data = ca.data().iter().zip(b[0].data()).map(|(&x, &y)| alpha * x + y).collect();
        return vec![Core::new(1, ca.mode(), 1, data).unwrap()];
    }
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(k, (ca, cb))| {
            let first = k == 0;
            let last = k + 1 == n;
            let left = if first { 1 } else { ca.left() + cb.left() };
            let right = if last { 1 } else { ca.right() + cb.right() };
            let mut out = Core::zeros(left, ca.mode(), right);
            for s in 0..ca.mode() {
                for r in 0..ca.right() {
                    for l in 0..ca.left() {
                        let v = if first { alpha * ca.at(l, s, r) } else { ca.at(l, s, r) };
                        *out.at_mut(l, s, r) = v;
                    }
                }
                let (lo, ro) = (if first { 0 } else { ca.left() }, if last { 0 } else { ca.right() });
                for r in 0..cb.right() {
                    for l in 0..cb.left() {
                        *out.at_mut(lo + l, s, ro + r) = cb.at(l, s, r);
                    }
                }
            }
            out
        })
        .collect()
}
