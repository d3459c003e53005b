use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::SparseTensor;
use crate::error::{Error, Result};
use crate::linalg::hermitian_eigen_desc;
use crate::tt::{dense_left, dense_right, Core, DenseTensor, TtTensor};

/// Smallest admissible ratio of extreme right-part singular values.
const RANK_TOL: f64 = 1e-12;

/// Tangent vector at a left-orthogonal foot point, stored as variation
/// cores `X_k` with `L(X_k)^T L(T_k) = 0` for every `k < n-1`.
#[derive(Clone, Debug)]
pub struct TangentVector {
    base: Arc<TtTensor>,
    variation: Vec<Core<f64>>,
}

/// Foot point plus the Cholesky factors of the right-part Gram matrices
/// `G_k = T^{>=k+1} T^{>=k+1,T}`, shared by all projections at that point.
#[derive(Clone, Debug)]
pub struct TangentSpace {
    base: Arc<TtTensor>,
    grams: Vec<Cholesky<f64, Dyn>>,
}

impl TangentSpace {
    pub fn new(base: &TtTensor) -> Result<Self> {
        if !base.is_left_orthogonal() {
            return Err(Error::InvalidArgument("foot point must be left-orthogonal".into()));
        }
        let n = base.n();
        let cores = base.cores();
        let mut grams = Vec::with_capacity(n - 1);
        let last = cores[n - 1].right_unfolding();
        let mut g = &last * last.transpose();
        for k in (0..n - 1).rev() {
            // g is the Gram matrix of the right part starting at core k+1
            let (vals, _) = hermitian_eigen_desc(g.clone());
            let ratio = (vals[vals.len() - 1].max(0.0) / vals[0]).sqrt();
            if !(vals[0] > 0.0) || !(ratio >= RANK_TOL) {
                return Err(Error::RankDeficient { cut: k + 1, ratio: if ratio.is_nan() { 0.0 } else { ratio } });
            }
            let chol = Cholesky::new(g.clone()).ok_or(Error::RankDeficient { cut: k + 1, ratio })?;
            grams.push(chol);
            if k > 0 {
                let c = &cores[k];
                let mut next = DMatrix::zeros(c.left(), c.left());
                for s in 0..c.mode() {
                    let t = c.slice(s);
                    next += &t * &g * t.transpose();
                }
                g = next;
            }
        }
        grams.reverse();
        Ok(Self { base: Arc::new(base.clone()), grams })
    }

    pub fn base(&self) -> &TtTensor {
        &self.base
    }

    /// Projects a weighted sum of canonical basis tensors. Accumulates the
    /// raw gradient cores over all entries, then removes the components along
    /// `L(T_k)` once per core.
    pub fn project_entries<'a, I>(&self, entries: I) -> TangentVector
    where
        I: IntoIterator<Item = (&'a [usize], f64)>,
    {
        let cores = self.base.cores();
        let n = cores.len();
        let mut raw: Vec<Core<f64>> = cores.iter().map(|c| Core::zeros(c.left(), c.mode(), c.right())).collect();
        let mut prefix: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut suffix: Vec<DVector<f64>> = vec![DVector::zeros(0); n];
        for (idx, g) in entries {
            if g == 0.0 {
                continue;
            }
            prefix[0] = vec![1.0];
            for k in 0..n - 1 {
                let c = &cores[k];
                let s = idx[k];
                let a = &prefix[k];
                prefix[k + 1] = (0..c.right()).map(|r| (0..c.left()).map(|l| a[l] * c.at(l, s, r)).sum()).collect();
            }
            suffix[n - 1] = DVector::from_element(1, 1.0);
            for k in (0..n - 1).rev() {
                let c = &cores[k + 1];
                let s = idx[k + 1];
                let b = &suffix[k + 1];
                suffix[k] = DVector::from_fn(c.left(), |l, _| (0..c.right()).map(|r| c.at(l, s, r) * b[r]).sum());
            }
            for k in 0..n {
                let a = &prefix[k];
                let s = idx[k];
                let x = &mut raw[k];
                if k + 1 == n {
                    for (l, &al) in a.iter().enumerate() {
                        *x.at_mut(l, s, 0) += g * al;
                    }
                } else {
                    let w = self.grams[k].solve(&suffix[k]);
                    for r in 0..w.len() {
                        let gw = g * w[r];
                        for (l, &al) in a.iter().enumerate() {
                            *x.at_mut(l, s, r) += al * gw;
                        }
                    }
                }
            }
        }
        for k in 0..n - 1 {
            let l = cores[k].left_unfolding();
            let d = raw[k].left_unfolding();
            let fixed = &d - &l * (l.transpose() * &d);
            raw[k] = Core::from_left_unfolding(&fixed, cores[k].left(), cores[k].mode());
        }
        TangentVector { base: self.base.clone(), variation: raw }
    }

    pub fn project_sparse(&self, g: &SparseTensor) -> Result<TangentVector> {
        if g.dims() != self.base.mode_dims() {
            return Err(Error::ShapeMismatch(format!("sparse dims {:?} vs base {:?}", g.dims(), self.base.mode_dims())));
        }
        Ok(self.project_entries(g.entries().iter().map(|(i, v)| (i.as_slice(), *v))))
    }

    /// Dense-input projection through contracted left and right parts.
    pub fn project_dense(&self, x: &DenseTensor) -> Result<TangentVector> {
        let dims = self.base.mode_dims();
        if x.dims() != dims.as_slice() {
            return Err(Error::ShapeMismatch(format!("dense dims {:?} vs base {dims:?}", x.dims())));
        }
        let cores = self.base.cores();
        let n = cores.len();
        let mut variation = Vec::with_capacity(n);
        for k in 0..n {
            let c = &cores[k];
            let left = dense_left(&cores[..k]);
            let p = left.nrows();
            let z = DMatrix::from_column_slice(p, x.data().len() / p, x.data());
            let lz = left.transpose() * z;
            let lz = DMatrix::from_column_slice(c.left() * c.mode(), lz.len() / (c.left() * c.mode()), lz.as_slice());
            let d = if k + 1 == n {
                lz
            } else {
                let right = dense_right(&cores[k + 1..]);
                let y = lz * right.transpose();
                let y = self.grams[k].solve(&y.transpose()).transpose();
                let l = c.left_unfolding();
                &y - &l * (l.transpose() * &y)
            };
            variation.push(Core::from_left_unfolding(&d, c.left(), c.mode()));
        }
        Ok(TangentVector { base: self.base.clone(), variation })
    }
}

pub fn project_tangent_sparse(base: &TtTensor, g: &SparseTensor) -> Result<TangentVector> {
    TangentSpace::new(base)?.project_sparse(g)
}

pub fn project_tangent_dense(base: &TtTensor, x: &DenseTensor) -> Result<TangentVector> {
    TangentSpace::new(base)?.project_dense(x)
}

impl TangentVector {
    /// Builds a tangent vector from explicit variation cores; the gauge
    /// condition is not enforced here (see [`Self::gauge_defect`]).
    pub fn from_cores(base: &TtTensor, variation: Vec<Core<f64>>) -> Result<Self> {
        if variation.len() != base.n()
            || variation.iter().zip(base.cores()).any(|(x, t)| (x.left(), x.mode(), x.right()) != (t.left(), t.mode(), t.right()))
        {
            return Err(Error::ShapeMismatch("variation cores must match the base cores".into()));
        }
        Ok(Self { base: Arc::new(base.clone()), variation })
    }

    pub fn zeros(base: &TtTensor) -> Self {
        let variation = base.cores().iter().map(|c| Core::zeros(c.left(), c.mode(), c.right())).collect();
        Self { base: Arc::new(base.clone()), variation }
    }

    pub fn base(&self) -> &TtTensor {
        &self.base
    }

    pub fn variation(&self) -> &[Core<f64>] {
        &self.variation
    }

    /// Largest `|L(X_k)^T L(T_k)|` entry over `k < n-1`.
    pub fn gauge_defect(&self) -> f64 {
        let n = self.variation.len();
        (0..n - 1)
            .map(|k| {
                let m = self.variation[k].left_unfolding().transpose() * self.base.core(k).left_unfolding();
                m.amax()
            })
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { base: self.base.clone(), variation: self.variation.iter().map(|x| x.scaled(a)).collect() }
    }

    /// Exact TT representation of the ambient tensor, ranks `2 r_k`.
    pub fn to_tt(&self) -> TtTensor {
        stacked(self.base.cores(), &self.variation, 1.0, false)
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        self.to_tt().to_dense()
    }

    /// `sum_k ||X_k||_F^2`.
    pub fn core_norm_sq(&self) -> f64 {
        self.variation.iter().map(|x| x.norm_sq()).sum()
    }
}

/// Block cores `[T X]`, `[[T X],[0 T]]`, `[X; T]` with `X` scaled by `coef`.
/// With `keep_base` the last block becomes `[T + coef X; T]`, giving
/// `base + coef * ambient`.
fn stacked(t: &[Core<f64>], x: &[Core<f64>], coef: f64, keep_base: bool) -> TtTensor {
    let n = t.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (tc, xc) = (&t[k], &x[k]);
        let (l, m, r) = (tc.left(), tc.mode(), tc.right());
        let first = k == 0;
        let last = k + 1 == n;
        let nl = if first { 1 } else { 2 * l };
        let nr = if last { 1 } else { 2 * r };
        let mut c = Core::zeros(nl, m, nr);
        for s in 0..m {
            for j in 0..r {
                for i in 0..l {
                    let tv = tc.at(i, s, j);
                    let xv = coef * xc.at(i, s, j);
                    match (first, last) {
                        (true, true) => *c.at_mut(0, s, 0) = if keep_base { tv + xv } else { xv },
                        (true, false) => {
                            *c.at_mut(0, s, j) = tv;
                            *c.at_mut(0, s, r + j) = xv;
                        }
                        (false, true) => {
                            *c.at_mut(i, s, 0) = if keep_base { tv + xv } else { xv };
                            *c.at_mut(l + i, s, 0) = tv;
                        }
                        (false, false) => {
                            *c.at_mut(i, s, j) = tv;
                            *c.at_mut(i, s, r + j) = xv;
                            *c.at_mut(l + i, s, r + j) = tv;
                        }
                    }
                }
            }
        }
        out.push(c);
    }
    TtTensor::new(out).expect("stacked cores form a valid chain")
}

/// `base - eta * ambient(v)` in TT format with ranks `2 r_k`.
pub fn tangent_step(base: &TtTensor, v: &TangentVector, eta: f64) -> Result<TtTensor> {
    if base.cores() != v.base.cores() {
        return Err(Error::InvalidArgument("tangent vector belongs to a different foot point".into()));
    }
    Ok(stacked(base.cores(), &v.variation, -eta, true))
}
