//! Separation spectra and the incoherence / spikiness diagnostics.

use nalgebra::DMatrix;

use super::{chain, TtTensor, DENSE_CAP};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, thin_qr};

/// Singular values of the `cut`-th separation, nonincreasing.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationSpectrum {
    pub cut: usize,
    pub singular_values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumSummary {
    /// `min_k sigma_{r_k}` of the k-th separation.
    pub lambda_min: f64,
    /// `max_k sigma_1` of the k-th separation.
    pub lambda_max: f64,
    pub kappa: f64,
}

/// Spectra of all separations `1..n` without densifying: left-orthogonalize,
/// then sweep LQ factorizations from the right; the carried `r x r` factor
/// at each cut has the separation's singular values.
pub fn separation_spectra(t: &TtTensor) -> Vec<SeparationSpectrum> {
    let mut cores = chain::left_orthogonalize(t.cores());
    let n = cores.len();
    let mut out = Vec::with_capacity(n - 1);
    for j in (1..n).rev() {
        let (q, r) = thin_qr(cores[j].right_unfolding().transpose());
        let l = r.transpose();
        out.push(SeparationSpectrum { cut: j, singular_values: singular_values(&l) });
        let mode = cores[j].mode();
        let right = cores[j].right();
        cores[j] = super::Core::from_right_unfolding(&q.transpose(), mode, right);
        cores[j - 1] = cores[j - 1].mul_right(&l);
    }
    out.reverse();
    out
}

/// Spectrum of a single cut `k` in `1..n`.
pub fn separation_singular_values(t: &TtTensor, k: usize) -> Result<SeparationSpectrum> {
    t.check_cut(k)?;
    Ok(separation_spectra(t).swap_remove(k - 1))
}

impl SpectrumSummary {
    /// `lambda_min` uses the representation rank `r_k`; a separation whose
    /// numerical rank is lower contributes zero.
    pub fn from_spectra(spectra: &[SeparationSpectrum], ranks: &[usize]) -> Self {
        let mut lambda_min = f64::INFINITY;
        let mut lambda_max: f64 = 0.0;
        for (s, &r) in spectra.iter().zip(ranks) {
            let sv = &s.singular_values;
            lambda_max = lambda_max.max(sv.first().copied().unwrap_or(0.0));
            lambda_min = lambda_min.min(sv.get(r - 1).copied().unwrap_or(0.0));
        }
        let kappa = if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY };
        Self { lambda_min, lambda_max, kappa }
    }

    pub fn of(t: &TtTensor) -> Self {
        Self::from_spectra(&separation_spectra(t), &t.ranks())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceReport {
    pub spikiness: f64,
    /// Set when `||T||_inf` was replaced by an upper bound (size above the dense cap).
    pub spikiness_is_bound: bool,
    /// `None` when some cut exceeded the part size cap.
    pub incoherence: Option<f64>,
    /// `(left ratio, right ratio)` per cut.
    pub per_cut: Vec<(Option<f64>, Option<f64>)>,
    pub spectrum: SpectrumSummary,
}

fn max_row_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

fn max_col_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn coherence_report(t: &TtTensor) -> Result<CoherenceReport> {
    let fro = t.norm();
    if fro == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let dims = t.mode_dims();
    let n = dims.len();
    let lo = t.left_orthogonalize();
    let ro = t.right_orthogonalize();
    let spectra = separation_spectra(t);
    let ranks = t.ranks();
    let spectrum = SpectrumSummary::from_spectra(&spectra, &ranks);

    let mut per_cut = Vec::with_capacity(n - 1);
    let mut inf_bound = f64::INFINITY;
    for k in 1..n {
        let rows: f64 = dims[..k].iter().map(|&d| d as f64).product();
        let cols: f64 = dims[k..].iter().map(|&d| d as f64).product();
        let u = lo.left_part(k).ok();
        let v = ro.right_part(k).ok();
        let a = u.as_ref().map(max_row_norm);
        let b = v.as_ref().map(max_col_norm);
        let ru = u.as_ref().map_or(1, |m| m.ncols()) as f64;
        let rv = v.as_ref().map_or(1, |m| m.nrows()) as f64;
        per_cut.push((a.map(|a| (rows / ru).sqrt() * a), b.map(|b| (cols / rv).sqrt() * b)));
        let lam = spectra[k - 1].singular_values.first().copied().unwrap_or(0.0);
        inf_bound = inf_bound.min(lam * a.unwrap_or(1.0).min(1.0) * b.unwrap_or(1.0).min(1.0));
    }
    let incoherence = per_cut.iter().try_fold(0.0f64, |m, &(a, b)| Some(m.max(a?).max(b?)));

    let (inf_norm, spikiness_is_bound) = if t.size() <= DENSE_CAP {
        (t.to_dense()?.max_abs(), false)
    } else {
        (inf_bound, true)
    };
    Ok(CoherenceReport {
        spikiness: t.sqrt_size() * inf_norm / fro,
        spikiness_is_bound,
        incoherence,
        per_cut,
        spectrum,
    })
}
