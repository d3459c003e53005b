use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index:?} out of range for mode dims {dims:?}")]
    IndexOutOfRange { index: Vec<usize>, dims: Vec<usize> },

    #[error("infeasible ranks {ranks:?} for mode dims {dims:?}")]
    InfeasibleRanks { ranks: Vec<usize>, dims: Vec<usize> },

    #[error("dense size {size} exceeds cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("operation undefined for the zero tensor")]
    ZeroTensor,

    #[error("rank-deficient foot point at cut {cut} (singular value ratio {ratio:e})")]
    RankDeficient { cut: usize, ratio: f64 },

    #[error("input is not Hermitian (relative defect {0:e})")]
    NotHermitian(f64),

    #[error("Hermitian core condition violated (residue {0:e})")]
    HermitianCondition(f64),

    #[error("singular gauge matrix at bond {0}")]
    SingularGauge(usize),

    #[error("unphysical expectation value {value} at index {index:?}")]
    Unphysical { value: f64, index: Vec<usize> },

    #[error("DMRG did not converge after {sweeps} sweeps (last energy {energy})")]
    NotConverged { sweeps: usize, energy: f64 },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
