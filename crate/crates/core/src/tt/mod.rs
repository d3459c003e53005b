//! Real tensor trains: the object the online solver optimizes.
//!
//! All multi-indices are zero-based and linearized with the first index
//! fastest, both in dense arrays and in core storage.

pub mod chain;
mod core;
mod diagnostics;
pub mod io;
mod svd;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub use self::chain::{check_chain, dense_left, dense_right};
pub use self::core::Core;
pub use self::diagnostics::{coherence_report, separation_spectra, separation_singular_values, CoherenceReport, SeparationSpectrum, SpectrumSummary};
pub use self::svd::{split_core, ttsvd, ttsvd_dense, ttsvd_tol};

use crate::error::{Error, Result};

/// Largest number of entries any dense materialization may have.
pub const DENSE_CAP: usize = 1 << 20;
/// Largest left/right part (rows x rank) materialized by diagnostics.
pub const PART_CAP: usize = 1 << 22;

/// Orthogonality state of a core.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ortho {
    Left,
    Right,
    Unknown,
}

/// Dense n-mode real array, first index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let size: usize = dims.iter().product();
        if size != data.len() {
            return Err(Error::ShapeMismatch(format!("dims {dims:?} need {size} entries, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let size = dims.iter().product();
        Self { dims, data: vec![0.0; size] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        linear_index(&self.dims, idx)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// The `k`-th separation: modes `0..k` as rows, `k..n` as columns.
    pub fn separation(&self, k: usize) -> DMatrix<f64> {
        let rows: usize = self.dims[..k].iter().product();
        DMatrix::from_column_slice(rows, self.data.len() / rows, &self.data)
    }

    pub fn sub(&self, other: &DenseTensor) -> DenseTensor {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        DenseTensor { dims: self.dims.clone(), data }
    }
}

pub(crate) fn linear_index(dims: &[usize], idx: &[usize]) -> usize {
    let mut lin = 0;
    let mut stride = 1;
    for (&i, &d) in idx.iter().zip(dims) {
        lin += i * stride;
        stride *= d;
    }
    lin
}

/// Inverse of the first-index-fastest linearization.
pub fn multi_index(dims: &[usize], mut lin: usize) -> Vec<usize> {
    dims.iter()
        .map(|&d| {
            let i = lin % d;
            lin /= d;
            i
        })
        .collect()
}

/// Checks `r_k <= min(prod_{i<=k} m_i, prod_{i>k} m_i)` together with the
/// per-core bounds `r_k <= r_{k-1} m_k` and `r_{k-1} <= m_k r_k`.
pub fn check_ranks(dims: &[usize], ranks: &[usize]) -> Result<()> {
    let n = dims.len();
    let bad = || Error::InfeasibleRanks { ranks: ranks.to_vec(), dims: dims.to_vec() };
    if n < 2 || ranks.len() != n - 1 || ranks.contains(&0) {
        return Err(bad());
    }
    let mut bounds = vec![1usize; n + 1];
    bounds[1..n].copy_from_slice(ranks);
    for k in 1..n {
        let left = dims[..k].iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
        let right = dims[k..].iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
        if ranks[k - 1] > left.min(right) {
            return Err(bad());
        }
    }
    for k in 0..n {
        if bounds[k + 1] > bounds[k] * dims[k] || bounds[k] > dims[k] * bounds[k + 1] {
            return Err(bad());
        }
    }
    Ok(())
}

/// Ranks `min(prod left, prod right, cap)` at every cut.
pub fn capped_ranks(dims: &[usize], cap: usize) -> Vec<usize> {
    let n = dims.len();
    (1..n)
        .map(|k| {
            let left = dims[..k].iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
            let right = dims[k..].iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
            left.min(right).min(cap)
        })
        .collect()
}

/// Real tensor in TT format.
#[derive(Clone, Debug, PartialEq)]
pub struct TtTensor {
    cores: Vec<Core<f64>>,
    ortho: Vec<Ortho>,
}

impl TtTensor {
    pub fn new(cores: Vec<Core<f64>>) -> Result<Self> {
        check_chain(&cores)?;
        let n = cores.len();
        if n < 2 {
            return Err(Error::ShapeMismatch("a tensor train needs at least two modes".into()));
        }
        Ok(Self { cores, ortho: vec![Ortho::Unknown; n] })
    }

    pub(crate) fn from_parts(cores: Vec<Core<f64>>, ortho: Vec<Ortho>) -> Self {
        debug_assert!(check_chain(&cores).is_ok());
        Self { cores, ortho }
    }

    fn left_flagged(cores: Vec<Core<f64>>) -> Self {
        let n = cores.len();
        let mut ortho = vec![Ortho::Left; n];
        ortho[n - 1] = Ortho::Unknown;
        Self { cores, ortho }
    }

    /// Rank-one tensor with every entry equal to one.
    pub fn ones(dims: &[usize]) -> Self {
        let cores = dims.iter().map(|&m| Core::new(1, m, 1, vec![1.0; m]).unwrap()).collect();
        Self::new(cores).expect("valid rank-one chain")
    }

    pub fn zeros(dims: &[usize], ranks: &[usize]) -> Result<Self> {
        let n = dims.len();
        if ranks.len() + 1 != n {
            return Err(Error::ShapeMismatch("need n-1 ranks".into()));
        }
        let mut full = vec![1];
        full.extend_from_slice(ranks);
        full.push(1);
        Self::new((0..n).map(|k| Core::zeros(full[k], dims[k], full[k + 1])).collect())
    }

    /// Tensor with i.i.d. standard normal core entries.
    pub fn random_gaussian<R: Rng + ?Sized>(dims: &[usize], ranks: &[usize], rng: &mut R) -> Result<Self> {
        let n = dims.len();
        if ranks.len() + 1 != n {
            return Err(Error::ShapeMismatch("need n-1 ranks".into()));
        }
        let mut full = vec![1];
        full.extend_from_slice(ranks);
        full.push(1);
        let cores = (0..n)
            .map(|k| Core::from_fn(full[k], dims[k], full[k + 1], |_, _, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self::new(cores)
    }

    pub fn n(&self) -> usize {
        self.cores.len()
    }

    pub fn mode_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.mode()).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.n() - 1].iter().map(|c| c.right()).collect()
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    pub fn cores(&self) -> &[Core<f64>] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &Core<f64> {
        &self.cores[k]
    }

    pub fn into_cores(self) -> Vec<Core<f64>> {
        self.cores
    }

    pub fn ortho(&self) -> &[Ortho] {
        &self.ortho
    }

    /// True when cores `0..n-1` are flagged left-orthogonal.
    pub fn is_left_orthogonal(&self) -> bool {
        self.ortho[..self.n() - 1].iter().all(|&o| o == Ortho::Left)
    }

    /// `sqrt(prod mode_dims)`, i.e. `d^n` for coefficient tensors.
    pub fn sqrt_size(&self) -> f64 {
        self.cores.iter().map(|c| (c.mode() as f64).sqrt()).product()
    }

    /// Number of entries, saturating at `usize::MAX`.
    pub fn size(&self) -> usize {
        self.cores.iter().try_fold(1usize, |a, c| a.checked_mul(c.mode())).unwrap_or(usize::MAX)
    }

    pub fn check_index(&self, idx: &[usize]) -> Result<()> {
        if idx.len() != self.n() || idx.iter().zip(&self.cores).any(|(&i, c)| i >= c.mode()) {
            return Err(Error::IndexOutOfRange { index: idx.to_vec(), dims: self.mode_dims() });
        }
        Ok(())
    }

    /// Entry at `idx` as a chain of row-vector / matrix products.
    pub fn entry(&self, idx: &[usize]) -> Result<f64> {
        self.check_index(idx)?;
        Ok(chain::entry(&self.cores, idx))
    }

    pub(crate) fn entry_unchecked(&self, idx: &[usize]) -> f64 {
        chain::entry(&self.cores, idx)
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        let size = self.size();
        if size > DENSE_CAP {
            return Err(Error::SizeCap { size, cap: DENSE_CAP });
        }
        let m = dense_left(&self.cores);
        DenseTensor::new(self.mode_dims(), m.as_slice().to_vec())
    }

    /// Exact TT representation of a dense array with full ranks.
    pub fn from_dense(x: &DenseTensor) -> Result<Self> {
        let ranks = capped_ranks(x.dims(), usize::MAX);
        ttsvd_dense(x, &ranks)
    }

    fn check_same_shape(&self, other: &TtTensor) -> Result<()> {
        if self.mode_dims() != other.mode_dims() {
            return Err(Error::ShapeMismatch(format!("mode dims {:?} vs {:?}", self.mode_dims(), other.mode_dims())));
        }
        Ok(())
    }

    pub fn inner(&self, other: &TtTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(chain::inner(&self.cores, &other.cores))
    }

    pub fn norm(&self) -> f64 {
        if self.is_left_orthogonal() {
            return self.cores[self.n() - 1].norm_sq().sqrt();
        }
        chain::inner(&self.cores, &self.cores).max(0.0).sqrt()
    }

    /// `||a - b||_F` via `||a||^2 + ||b||^2 - 2<a,b>`.
    pub fn distance(&self, other: &TtTensor) -> Result<f64> {
        let ab = self.inner(other)?;
        let d2 = self.norm().powi(2) + other.norm().powi(2) - 2.0 * ab;
        Ok(d2.max(0.0).sqrt())
    }

    /// `||a - b||_F` through the rank-summed difference train, orthogonalized.
    pub fn distance_expanded(&self, other: &TtTensor) -> Result<f64> {
        Ok(tt_axpy(-1.0, self, other)?.left_orthogonalize().norm())
    }

    pub fn left_orthogonalize(&self) -> TtTensor {
        Self::left_flagged(chain::left_orthogonalize(&self.cores))
    }

    pub fn right_orthogonalize(&self) -> TtTensor {
        let n = self.n();
        let mut ortho = vec![Ortho::Right; n];
        ortho[0] = Ortho::Unknown;
        Self { cores: chain::right_orthogonalize(&self.cores), ortho }
    }

    /// Dense `T^{<=k}` of shape `prod_{i<k} m_i x r_k` for cut `k` in `1..n`.
    pub fn left_part(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_cut(k)?;
        let rows: usize = self.cores[..k].iter().map(|c| c.mode()).product();
        let size = rows.saturating_mul(self.cores[k - 1].right());
        if size > PART_CAP {
            return Err(Error::SizeCap { size, cap: PART_CAP });
        }
        Ok(dense_left(&self.cores[..k]))
    }

    /// Dense `T^{>=k+1}` of shape `r_k x prod_{i>=k} m_i` for cut `k` in `1..n`.
    pub fn right_part(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_cut(k)?;
        let cols: usize = self.cores[k..].iter().map(|c| c.mode()).product();
        let size = cols.saturating_mul(self.cores[k].left());
        if size > PART_CAP {
            return Err(Error::SizeCap { size, cap: PART_CAP });
        }
        Ok(dense_right(&self.cores[k..]))
    }

    pub(crate) fn check_cut(&self, k: usize) -> Result<()> {
        if k == 0 || k >= self.n() {
            return Err(Error::InvalidArgument(format!("cut {k} outside 1..{}", self.n())));
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> TtTensor {
        let mut cores = self.cores.clone();
        let last = cores.len() - 1;
        cores[last] = cores[last].scaled(a);
        Self { cores, ortho: self.ortho.clone() }
    }

    /// Largest `||L(T_k)^T L(T_k) - I||_max` over flagged left cores.
    pub fn left_orthogonality_defect(&self) -> f64 {
        self.cores
            .iter()
            .zip(&self.ortho)
            .filter(|(_, &o)| o == Ortho::Left)
            .map(|(c, _)| {
                let l = c.left_unfolding();
                let g = l.transpose() * &l;
                crate::linalg::max_abs_diff(&g, &DMatrix::identity(g.nrows(), g.ncols()))
            })
            .fold(0.0, f64::max)
    }
}

/// `alpha * a + b` with ranks `r_a + r_b`.
pub fn tt_axpy(alpha: f64, a: &TtTensor, b: &TtTensor) -> Result<TtTensor> {
    a.check_same_shape(b)?;
    if alpha == 0.0 {
        return Ok(b.clone());
    }
    TtTensor::new(chain::axpy(alpha, &a.cores, &b.cores))
}
