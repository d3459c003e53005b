pub mod error;
pub mod linalg;
pub mod manifold;
pub mod measurement;
pub mod mpo;
pub mod rng;
pub mod solvers;
pub mod states;
pub mod tt;

pub use error::{Error, Result};
pub use tt::{tt_axpy, DenseTensor, TtTensor};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
