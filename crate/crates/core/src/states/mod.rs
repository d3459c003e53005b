//! Target-state generators: random MPS, GHZ, and the transverse-field Ising
//! ground state.

mod dmrg;

use num_complex::Complex64;
use rand::Rng;

pub use dmrg::{ising_ground, ising_mpo, DmrgResult};

use crate::error::{Error, Result};
use crate::mpo::Mps;
use crate::rng::rng_from;
use crate::tt::Core;

#[derive(Clone, Debug, PartialEq)]
pub enum StateFamily {
    /// Bond dimensions `min(d^k, d^{n-k}, r)`.
    RandomMps { rank: usize },
    Ghz,
    /// `H = -sum Z_i Z_{i+1} + g sum X_i`, bond dimension cap `max_bond`.
    IsingGround { g: f64, max_bond: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpec {
    pub family: StateFamily,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct GeneratedState {
    pub mps: Mps,
    /// Variational energy for Hamiltonian ground states.
    pub energy: Option<f64>,
}

pub fn generate(spec: &StateSpec) -> Result<GeneratedState> {
    if spec.n < 2 {
        return Err(Error::InvalidArgument("states need n >= 2".into()));
    }
    match spec.family {
        StateFamily::RandomMps { rank } => Ok(GeneratedState { mps: random_mps(spec.n, spec.d, rank, spec.seed)?, energy: None }),
        StateFamily::Ghz => {
            if spec.d != 2 {
                return Err(Error::InvalidArgument("GHZ states are defined for qubits".into()));
            }
            Ok(GeneratedState { mps: ghz(spec.n)?, energy: None })
        }
        StateFamily::IsingGround { g, max_bond } => {
            if spec.d != 2 {
                return Err(Error::InvalidArgument("the Ising model is defined for qubits".into()));
            }
            let res = ising_ground(spec.n, g, max_bond)?;
            Ok(GeneratedState { mps: res.state, energy: Some(res.energy) })
        }
    }
}

/// Bond dimensions `min(d^k, d^{n-k}, cap)`.
pub fn capped_bonds(n: usize, d: usize, cap: usize) -> Vec<usize> {
    (1..n)
        .map(|k| {
            let pow = |e: usize| d.checked_pow(e as u32).unwrap_or(usize::MAX);
            pow(k).min(pow(n - k)).min(cap)
        })
        .collect()
}

/// Cores with real and imaginary parts i.i.d. uniform on `[0, 1]`, then
/// normalized to unit norm.
pub fn random_mps(n: usize, d: usize, rank: usize, seed: u64) -> Result<Mps> {
    if rank == 0 || d < 2 || n < 2 {
        return Err(Error::InvalidArgument("random MPS needs n >= 2, d >= 2, r >= 1".into()));
    }
    let mut rng = rng_from(seed);
    let mut full = vec![1];
    full.extend(capped_bonds(n, d, rank));
    full.push(1);
    let cores = (0..n)
        .map(|k| Core::from_fn(full[k], d, full[k + 1], |_, _, _| Complex64::new(rng.random(), rng.random())))
        .collect();
    Mps::new(d, cores)?.normalized()
}

/// `(|0...0> + |1...1>) / sqrt(2)` with bond dimension 2.
pub fn ghz(n: usize) -> Result<Mps> {
    if n < 2 {
        return Err(Error::InvalidArgument("GHZ needs n >= 2".into()));
    }
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let first = Core::from_fn(1, 2, 2, |_, s, b| if s == b { Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0) } else { zero });
    let mid = Core::from_fn(2, 2, 2, |a, s, b| if a == s && s == b { one } else { zero });
    let last = Core::from_fn(2, 2, 1, |a, s, _| if a == s { one } else { zero });
    let mut cores = vec![first];
    cores.extend(std::iter::repeat_n(mid, n - 2));
    cores.push(last);
    Mps::new(2, cores)
}
