//! MPO cores <-> real coefficient cores in a local Hermitian basis:
//! `T_k(l, s, m) = <P_s, U_k(l, ., ., m)>` and `U_k = sum_s T_k(l, s, m) P_s`.

use num_complex::Complex64;

use super::{LocalBasis, Mpo};
use crate::error::{Error, Result};
use crate::tt::{Core, Ortho, TtTensor};

const RESIDUE_TOL: f64 = 1e-12;
const ORTHO_TOL: f64 = 1e-12;

fn check_basis(m: &Mpo, basis: &LocalBasis) -> Result<()> {
    if basis.d() != m.d() {
        return Err(Error::ShapeMismatch(format!("basis d={} but MPO d={}", basis.d(), m.d())));
    }
    Ok(())
}

fn complex_cores(m: &Mpo, basis: &LocalBasis) -> Vec<Core<Complex64>> {
    let d = m.d();
    m.cores()
        .iter()
        .map(|c| {
            Core::from_fn(c.left(), d * d, c.right(), |l, s, r| {
                let p = basis.get(s);
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..d {
                    for i in 0..d {
                        acc += c.at(l, i + d * j, r) * p[(i, j)].conj();
                    }
                }
                acc
            })
        })
        .collect()
}

/// Largest `|Im T_k(l, s, m)|` relative to the core's largest modulus.
pub fn imaginary_residue(m: &Mpo, basis: &LocalBasis) -> Result<f64> {
    check_basis(m, basis)?;
    Ok(complex_cores(m, basis)
        .iter()
        .map(|c| {
            let scale = c.data().iter().fold(0.0f64, |a, z| a.max(z.norm()));
            let im = c.data().iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
            if scale > 0.0 { im / scale.max(1.0) } else { 0.0 }
        })
        .fold(0.0, f64::max))
}

/// Real coefficient tensor of a Hermitian-core MPO. Cores whose real left
/// unfoldings are orthonormal come back flagged left-orthogonal.
pub fn mpo_to_coeff(m: &Mpo, basis: &LocalBasis) -> Result<TtTensor> {
    check_basis(m, basis)?;
    let complex = complex_cores(m, basis);
    let n = complex.len();
    let mut cores = Vec::with_capacity(n);
    let mut ortho = Vec::with_capacity(n);
    for (k, c) in complex.iter().enumerate() {
        let scale = c.data().iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1.0);
        let worst = c.data().iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
        if worst > RESIDUE_TOL * scale {
            return Err(Error::HermitianCondition(worst / scale));
        }
        let real = c.map(|z| z.re);
        let flag = if k + 1 < n {
            let l = real.left_unfolding();
            let g = l.transpose() * &l;
            let defect = (g - nalgebra::DMatrix::identity(real.right(), real.right())).amax();
            if defect <= ORTHO_TOL { Ortho::Left } else { Ortho::Unknown }
        } else {
            Ortho::Unknown
        };
        cores.push(real);
        ortho.push(flag);
    }
    Ok(TtTensor::from_parts(cores, ortho))
}

/// Inverse transform; the output always satisfies the Hermitian core condition.
pub fn coeff_to_mpo(t: &TtTensor, basis: &LocalBasis) -> Result<Mpo> {
    let d = basis.d();
    if t.mode_dims().iter().any(|&m| m != d * d) {
        return Err(Error::ShapeMismatch(format!("coefficient modes {:?} do not match basis dimension {}", t.mode_dims(), d * d)));
    }
    let cores = t
        .cores()
        .iter()
        .map(|c| {
            Core::from_fn(c.left(), d * d, c.right(), |l, ij, r| {
                let (i, j) = (ij % d, ij / d);
                (0..d * d).map(|s| basis.get(s)[(i, j)] * c.at(l, s, r)).sum()
            })
        })
        .collect();
    Mpo::new(d, cores)
}
