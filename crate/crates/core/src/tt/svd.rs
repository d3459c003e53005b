//! Sequential truncated SVD into TT format, for dense and TT inputs.

use nalgebra::DMatrix;

use super::core::Core;
use super::{check_ranks, chain, DenseTensor, TtTensor};
use crate::error::{Error, Result};
use crate::linalg::{complete_orthonormal, left_singular};
#[cfg(test)]
use crate::linalg::singular_values;

fn leading(u: DMatrix<f64>, r: usize) -> DMatrix<f64> {
    complete_orthonormal(u, r)
}

/// Truncates a TT tensor to `ranks`: right-orthogonalize, then one left
/// sweep keeping the leading left singular vectors of each left unfolding.
/// Ranks above the numerical rank are padded with orthonormal completions.
pub fn ttsvd(t: &TtTensor, ranks: &[usize]) -> Result<TtTensor> {
    let dims = t.mode_dims();
    check_ranks(&dims, ranks)?;
    let mut cores = chain::right_orthogonalize(t.cores());
    let n = cores.len();
    for k in 0..n - 1 {
        let c = &cores[k];
        let l = c.left_unfolding();
        let (u, _) = left_singular(&l);
        let q = leading(u, ranks[k]);
        let carry = q.transpose() * &l;
        let next = cores[k + 1].mul_left(&carry);
        cores[k] = Core::from_left_unfolding(&q, c.left(), c.mode());
        cores[k + 1] = next;
    }
    Ok(TtTensor::left_flagged(cores))
}

/// Same sweep on a dense array: each step reshapes the projected remainder
/// in place (first index fastest keeps the buffer valid).
pub fn ttsvd_dense(x: &DenseTensor, ranks: &[usize]) -> Result<TtTensor> {
    let dims = x.dims().to_vec();
    check_ranks(&dims, ranks)?;
    let n = dims.len();
    let mut rest = x.data().to_vec();
    let mut left = 1;
    let mut cores = Vec::with_capacity(n);
    for k in 0..n - 1 {
        let rows = left * dims[k];
        let m = DMatrix::from_vec(rows, rest.len() / rows, rest);
        let (u, _) = left_singular(&m);
        let q = leading(u, ranks[k]);
        rest = (q.transpose() * &m).as_slice().to_vec();
        cores.push(Core::from_left_unfolding(&q, left, dims[k]));
        left = ranks[k];
    }
    cores.push(Core::new(left, dims[n - 1], 1, rest)?);
    Ok(TtTensor::left_flagged(cores))
}

/// Rank-adaptive variant: at each cut keeps the fewest singular vectors whose
/// discarded energy is at most `rel_tol^2 ||t||^2 / (n-1)`, capped at `max_rank`.
pub fn ttsvd_tol(t: &TtTensor, rel_tol: f64, max_rank: usize) -> Result<TtTensor> {
    if !(rel_tol >= 0.0) || max_rank == 0 {
        return Err(Error::InvalidArgument("tolerance must be >= 0 and max_rank >= 1".into()));
    }
    let mut cores = chain::right_orthogonalize(t.cores());
    let n = cores.len();
    let total = cores[0].norm_sq();
    let budget = rel_tol * rel_tol * total / (n - 1) as f64;
    for k in 0..n - 1 {
        let c = &cores[k];
        let l = c.left_unfolding();
        let (u, s) = left_singular(&l);
        let mut r = s.len();
        let mut tail = 0.0;
        while r > 1 && tail + s[r - 1] * s[r - 1] <= budget {
            tail += s[r - 1] * s[r - 1];
            r -= 1;
        }
        let r = r.min(max_rank).max(1);
        let q = u.columns(0, r).into_owned();
        let carry = q.transpose() * &l;
        let next = cores[k + 1].mul_left(&carry);
        cores[k] = Core::from_left_unfolding(&q, c.left(), c.mode());
        cores[k + 1] = next;
    }
    Ok(TtTensor::left_flagged(cores))
}

/// Splits a core whose mode is the grouped index of `dims` (first fastest)
/// into `dims.len()` cores by exact SVDs. Numerically zero singular values
/// (below `1e-14` of the largest) are dropped.
pub fn split_core(core: &Core<f64>, dims: &[usize]) -> Result<Vec<Core<f64>>> {
    if dims.iter().product::<usize>() != core.mode() || dims.is_empty() {
        return Err(Error::ShapeMismatch(format!("cannot split mode {} into {dims:?}", core.mode())));
    }
    let right = core.right();
    let mut rest = core.data().to_vec();
    let mut left = core.left();
    let mut out = Vec::with_capacity(dims.len());
    for &m in &dims[..dims.len() - 1] {
        let rows = left * m;
        let mat = DMatrix::from_vec(rows, rest.len() / rows, rest);
        let (u, s) = left_singular(&mat);
        let keep = s.iter().take_while(|&&x| x > 1e-14 * s[0]).count().max(1);
        let q = u.columns(0, keep).into_owned();
        rest = (q.transpose() * &mat).as_slice().to_vec();
        out.push(Core::from_left_unfolding(&q, left, m));
        left = keep;
    }
    out.push(Core::new(left, dims[dims.len() - 1], right, rest)?);
    Ok(out)
}

/// Tail energies `sum_{i > r_k} sigma_i^2` of every dense separation.
#[cfg(test)]
pub(crate) fn dense_tail_energies(x: &DenseTensor, ranks: &[usize]) -> Vec<f64> {
    (1..x.dims().len())
        .map(|k| singular_values(&x.separation(k)).iter().skip(ranks[k - 1]).map(|s| s * s).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::capped_ranks;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_dense(dims: &[usize], rng: &mut ChaCha20Rng) -> DenseTensor {
        let size = dims.iter().product();
        DenseTensor::new(dims.to_vec(), (0..size).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap()
    }

    #[test]
    fn exact_rank_input_is_reproduced() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let t = TtTensor::random_gaussian(&[4, 4, 4, 4], &[2, 3, 2], &mut rng).unwrap();
        let s = ttsvd(&t, &[2, 3, 2]).unwrap();
        assert!(s.distance_expanded(&t).unwrap() <= 1e-10 * t.norm());
        assert!(s.left_orthogonality_defect() < 1e-12);
        let d = ttsvd_dense(&t.to_dense().unwrap(), &[2, 3, 2]).unwrap();
        assert!(d.distance_expanded(&t).unwrap() <= 1e-10 * t.norm());
    }

    #[test]
    fn ones_is_rank_one() {
        let t = TtTensor::ones(&[4, 4, 4]);
        let s = ttsvd(&t, &[1, 1]).unwrap();
        assert!(s.distance_expanded(&t).unwrap() < 1e-12 * t.norm());
    }

    #[test]
    fn dense_quasi_optimal() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let x = random_dense(&[4, 4, 4], &mut rng);
        let s = ttsvd_dense(&x, &[1, 1]).unwrap();
        let err = s.to_dense().unwrap().sub(&x).norm().powi(2);
        let bound: f64 = dense_tail_energies(&x, &[1, 1]).iter().sum();
        assert!(err <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn padding_keeps_requested_ranks() {
        let t = TtTensor::ones(&[4, 4, 4]);
        let s = ttsvd(&t, &[3, 2]).unwrap();
        assert_eq!(s.ranks(), vec![3, 2]);
        assert!(s.left_orthogonality_defect() < 1e-12);
        assert!(s.distance_expanded(&t).unwrap() < 1e-12);
    }

    #[test]
    fn infeasible_ranks_fail() {
        let t = TtTensor::ones(&[4, 4, 4]);
        assert!(matches!(ttsvd(&t, &[5, 1]), Err(Error::InfeasibleRanks { .. })));
    }

    #[test]
    fn tolerance_variant_finds_true_ranks() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let t = TtTensor::random_gaussian(&[4, 4, 4, 4], &[2, 3, 2], &mut rng).unwrap();
        let padded = ttsvd(&t, &capped_ranks(&t.mode_dims(), 16)).unwrap();
        let s = ttsvd_tol(&padded, 1e-12, 64).unwrap();
        assert_eq!(s.ranks(), vec![2, 3, 2]);
        assert!(s.distance_expanded(&t).unwrap() < 1e-9 * t.norm());
    }

    #[test]
    fn split_recovers_grouped_core() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let c = Core::from_fn(1, 16, 3, |_, _, _| rng.random::<f64>());
        let parts = split_core(&c, &[4, 4]).unwrap();
        let joined = chain::dense_left(&parts);
        assert!(crate::linalg::max_abs_diff(&joined, &c.left_unfolding()) < 1e-12);
    }
}
