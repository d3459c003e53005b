use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::trim_threshold;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen_desc, left_singular};
use crate::manifold::retract;
use crate::measurement::{Observation, ObservationSource};
use crate::rng::rng_from;
use crate::tt::{split_core, ttsvd, tt_axpy, Core, TtTensor, PART_CAP};

/// Settings of the sequential spectral initializer.
#[derive(Clone, Debug, PartialEq)]
pub struct InitConfig {
    /// Group sizes `(m1, m2, m3)` of the three-way reshaping.
    pub split: (usize, usize, usize),
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    /// Incoherence parameter of the row-norm truncation.
    pub mu: f64,
    /// Spikiness parameter of the final trim.
    pub nu: f64,
}

impl InitConfig {
    /// Default split `m1 = ceil(n/3)`, `m2 = floor(n/3)`, the rest in `m3`,
    /// and `k` samples per stage.
    pub fn new(n: usize, k: usize, mu: f64, nu: f64) -> Self {
        let m1 = n.div_ceil(3);
        let m2 = n / 3;
        Self { split: (m1, m2, n - m1 - m2), k1: k, k2: k, k3: k, mu, nu }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let (m1, m2, m3) = self.split;
        if m1 + m2 + m3 != n || m1 == 0 || m2 == 0 || m3 == 0 {
            return Err(Error::InvalidArgument(format!("split {:?} does not partition {n} sites into nonempty groups", self.split)));
        }
        if self.k1 == 0 || self.k2 == 0 || self.k3 == 0 {
            return Err(Error::InvalidArgument("sample counts must be at least 1".into()));
        }
        if !(self.mu > 0.0) || !(self.nu > 0.0) {
            return Err(Error::InvalidArgument(format!("mu and nu must be positive, got {} and {}", self.mu, self.nu)));
        }
        Ok(())
    }
}

fn group_index(idx: &[usize], m: usize, lo: usize, hi: usize) -> usize {
    idx[lo..hi].iter().rev().fold(0, |acc, &i| acc * m + i)
}

/// `(1/2K^2) sum_c (a_c b_c^T + b_c a_c^T)`, where `a_c` (`b_c`) sums the
/// row vectors of the first (second) group's samples sharing column `c`.
/// Each sample contributes a sparse row vector given by `row`.
fn symmetrized_gram<F>(first: &[Observation], second: &[Observation], dim: usize, col: impl Fn(&[usize]) -> usize, row: F) -> DMatrix<f64>
where
    F: Fn(&[usize]) -> Vec<(usize, f64)>,
{
    let accumulate = |group: &[Observation]| {
        let mut by_col: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        for obs in group {
            let w = obs.scaled_value() * obs.scale;
            let slot = by_col.entry(col(obs.index())).or_default();
            for (r, v) in row(obs.index()) {
                *slot.entry(r).or_insert(0.0) += w * v;
            }
        }
        by_col
    };
    let a = accumulate(first);
    let b = accumulate(second);
    let mut n = DMatrix::zeros(dim, dim);
    for (c, av) in &a {
        if let Some(bv) = b.get(c) {
            for (&i, &x) in av {
                for (&j, &y) in bv {
                    n[(i, j)] += x * y;
                    n[(j, i)] += x * y;
                }
            }
        }
    }
    n / (2.0 * first.len() as f64 * second.len() as f64)
}

/// Row-norm truncation at `cap` followed by `Z (Z^T Z)^{-1/2}`.
fn truncate_and_renormalize(mut z: DMatrix<f64>, cap: f64, stage: usize) -> Result<DMatrix<f64>> {
    for mut row in z.row_iter_mut() {
        let norm = row.norm();
        if norm > cap {
            row *= cap / norm;
        }
    }
    let (vals, vecs) = hermitian_eigen_desc(z.transpose() * &z);
    let top = vals.first().copied().unwrap_or(0.0);
    let low = vals.last().copied().unwrap_or(0.0);
    if !(top > 0.0) || low <= 1e-12 * top {
        return Err(Error::Initialization(format!(
            "stage {stage}: truncated factor is singular (Gram eigenvalues {low:e}..{top:e}); increase the sample counts"
        )));
    }
    let inv_sqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| 1.0 / v.sqrt())));
    Ok(z * (&vecs * inv_sqrt * vecs.transpose()))
}

fn check_gram_size(dim: usize) -> Result<()> {
    if dim.saturating_mul(dim) > PART_CAP {
        return Err(Error::SizeCap { size: dim.saturating_mul(dim), cap: PART_CAP });
    }
    Ok(())
}

/// Output of the spectral initializer together with the assembled estimate's
/// norm and the trim threshold that was applied.
#[derive(Clone, Debug)]
pub struct SpectralInit {
    pub tensor: TtTensor,
    pub assembled_norm: f64,
    pub xi: f64,
}

/// Sequential second-order spectral initializer. Stage one reads `2 k1`
/// observations, stage two the next `2 k2`, stage three the next `k3`.
/// The result is trimmed at `10 ||Z|| nu / (9 d^n)` and truncated to `ranks`.
pub fn spectral_init<S: ObservationSource + ?Sized>(stream: &mut S, dims: &[usize], cfg: &InitConfig, ranks: &[usize]) -> Result<TtTensor> {
    Ok(spectral_init_report(stream, dims, cfg, ranks)?.tensor)
}

pub fn spectral_init_report<S: ObservationSource + ?Sized>(
    stream: &mut S,
    dims: &[usize],
    cfg: &InitConfig,
    ranks: &[usize],
) -> Result<SpectralInit> {
    let n = dims.len();
    cfg.validate(n)?;
    crate::tt::check_ranks(dims, ranks)?;
    if dims.iter().any(|&m| m != dims[0]) {
        return Err(Error::InvalidArgument("spectral initializer needs equal mode dimensions".into()));
    }
    let m = dims[0];
    let (m1, m2, _) = cfg.split;
    let c12 = m1 + m2;
    let p1 = m.pow(m1 as u32);
    let p2 = m.pow(m2 as u32);
    let p3 = m.pow((n - c12) as u32);
    let r1 = ranks[m1 - 1];
    let r2 = ranks[c12 - 1];
    check_gram_size(p1)?;
    check_gram_size(r1 * p2)?;
    let sqrt_m = (m as f64).sqrt();

    let first = stream.next_batch(2 * cfg.k1)?;
    let (g1, g2) = first.split_at(cfg.k1);
    let n1 = symmetrized_gram(g1, g2, p1, |i| group_index(i, m, m1, n), |i| vec![(group_index(i, m, 0, m1), 1.0)]);
    let (u1, _) = left_singular(&n1);
    let cap1 = (cfg.mu * r1 as f64).sqrt() / sqrt_m.powi(m1 as i32);
    let z1 = truncate_and_renormalize(u1.columns(0, r1).into_owned(), cap1, 1)?;

    let second = stream.next_batch(2 * cfg.k2)?;
    let (h1, h2) = second.split_at(cfg.k2);
    let project = |i: &[usize]| {
        let a = group_index(i, m, 0, m1);
        let b = group_index(i, m, m1, c12);
        (0..r1).map(|l| (l + r1 * b, z1[(a, l)])).collect()
    };
    let n2 = symmetrized_gram(h1, h2, r1 * p2, |i| group_index(i, m, c12, n), project);
    let (u2, _) = left_singular(&n2);
    let cap2 = (cfg.mu * r2 as f64).sqrt() / sqrt_m.powi(m2 as i32);
    let z2 = truncate_and_renormalize(u2.columns(0, r2).into_owned(), cap2, 2)?;

    let third = stream.next_batch(cfg.k3)?;
    let mut z3 = DMatrix::zeros(r2, p3);
    for obs in &third {
        let i = obs.index();
        let a = group_index(i, m, 0, m1);
        let b = group_index(i, m, m1, c12);
        let c = group_index(i, m, c12, n);
        let w = obs.scaled_value() * obs.scale / cfg.k3 as f64;
        for s in 0..r2 {
            let row: f64 = (0..r1).map(|l| z1[(a, l)] * z2[(l + r1 * b, s)]).sum();
            z3[(s, c)] += w * row;
        }
    }

    let grouped = [
        Core::from_left_unfolding(&z1, 1, p1),
        Core::from_left_unfolding(&z2, r1, p2),
        Core::from_right_unfolding(&z3, p3, 1),
    ];
    let spans = [(0, m1), (m1, c12), (c12, n)];
    let mut cores = Vec::with_capacity(n);
    for (core, (lo, hi)) in grouped.iter().zip(spans) {
        cores.extend(split_core(core, &dims[lo..hi])?);
    }
    let z = TtTensor::new(cores)?;
    let assembled_norm = z.norm();
    if assembled_norm == 0.0 {
        return Err(Error::Initialization("assembled estimate is zero; increase the sample counts".into()));
    }
    let xi = trim_threshold(&z, cfg.nu);
    Ok(SpectralInit { tensor: retract(&z, ranks, Some(xi))?, assembled_norm, xi })
}

/// `TTSVD_r(T* + delta E / ||E||)` with `E` a Gaussian TT tensor of ranks `ranks`.
pub fn perturbed_init(t_star: &TtTensor, ranks: &[usize], delta: f64, seed: u64) -> Result<TtTensor> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be nonnegative, got {delta}")));
    }
    let e = TtTensor::random_gaussian(&t_star.mode_dims(), ranks, &mut rng_from(seed))?;
    let e = e.scaled(delta / e.norm());
    ttsvd(&tt_axpy(1.0, &e, t_star)?, ranks)
}

/// Coefficient tensor of a random rank-`ranks` operator, Gaussian cores,
/// scaled to unit Frobenius norm.
pub fn random_mpo_init(dims: &[usize], ranks: &[usize], seed: u64) -> Result<TtTensor> {
    let t = TtTensor::random_gaussian(dims, ranks, &mut rng_from(seed))?.left_orthogonalize();
    let norm = t.norm();
    Ok(t.scaled(1.0 / norm))
}
