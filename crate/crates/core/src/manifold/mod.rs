//! Fixed-TT-rank manifold: tangent projections, tangent steps, trimming and
//! the trim + TTSVD retraction.

mod sparse;
mod tangent;

pub use sparse::SparseTensor;
pub use tangent::{project_tangent_dense, project_tangent_sparse, tangent_step, TangentSpace, TangentVector};

use crate::error::Result;
use crate::tt::{ttsvd, ttsvd_dense, TtTensor, DENSE_CAP};

/// `sum_k m_k r_{k-1} r_k - sum_{k<n} r_k^2`.
pub fn manifold_dim(mode_dims: &[usize], ranks: &[usize]) -> usize {
    let n = mode_dims.len();
    let mut full = vec![1];
    full.extend_from_slice(ranks);
    full.push(1);
    let params: usize = (0..n).map(|k| mode_dims[k] * full[k] * full[k + 1]).sum();
    params - ranks.iter().map(|r| r * r).sum::<usize>()
}

#[derive(Clone, Debug)]
pub struct Trimmed {
    pub tensor: TtTensor,
    /// True when the tensor exceeded the dense cap and was returned untouched.
    pub skipped: bool,
}

/// Whether entrywise trimming can be carried out for tensors of this size.
pub fn trim_applies(t: &TtTensor) -> bool {
    t.size() <= DENSE_CAP
}

fn clipped_dense(t: &TtTensor, xi: f64) -> Result<crate::tt::DenseTensor> {
    let mut dense = t.to_dense()?;
    for x in dense.data_mut() {
        *x = x.clamp(-xi, xi);
    }
    Ok(dense)
}

/// Clips every entry to `[-xi, xi]`. Above the dense cap this is a no-op
/// and `skipped` is set.
pub fn trim(t: &TtTensor, xi: f64) -> Result<Trimmed> {
    if !trim_applies(t) {
        return Ok(Trimmed { tensor: t.clone(), skipped: true });
    }
    let dense = clipped_dense(t, xi.max(0.0))?;
    Ok(Trimmed { tensor: TtTensor::from_dense(&dense)?, skipped: false })
}

/// Optional trim followed by TTSVD to `ranks`. The output is left-orthogonal.
pub fn retract(t_plus: &TtTensor, ranks: &[usize], trim_xi: Option<f64>) -> Result<TtTensor> {
    match trim_xi {
        Some(xi) if trim_applies(t_plus) => ttsvd_dense(&clipped_dense(t_plus, xi.max(0.0))?, ranks),
        _ => ttsvd(t_plus, ranks),
    }
}
