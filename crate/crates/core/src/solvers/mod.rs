//! Reconstruction algorithms: online RGD with minibatches, the data-reuse
//! RSGD variant, the offline RGD baseline and the sequential spectral
//! initializer.

mod init;
mod orgd;

pub use init::{perturbed_init, random_mpo_init, spectral_init, spectral_init_report, InitConfig, SpectralInit};
pub use orgd::{epoch_order, orgd_run, orgd_step, rgd_offline_step, rsgd_run, RsgdConfig};

use std::io::Write;

use crate::error::{Error, Result};
use crate::mpo::{coeff_to_mpo, fidelity, make_basis, LocalBasis, Mps};
use crate::tt::TtTensor;

/// Step-size rule for the averaged minibatch gradient. `Alpha` resolves to
/// `eta = alpha B / n^2`, i.e. `alpha / n^2` per summed sample gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    Alpha(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stopping {
    /// Relative Frobenius error against the ground truth.
    RelError(f64),
    /// `||T_t - T_{t-w}|| / ||T_{t-w}||` over a window of `w` steps.
    Movement { tol: f64, window: usize },
    /// Run the full iteration budget.
    Never,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub ranks: Vec<usize>,
    pub step: StepSize,
    pub batch: usize,
    pub max_iters: usize,
    /// Spikiness parameter; `Some` turns trimming on.
    pub trim_nu: Option<f64>,
    pub stopping: Stopping,
    /// Log every `log_every` iterations (plus the first and the last).
    pub log_every: usize,
}

impl SolverConfig {
    pub fn new(ranks: Vec<usize>, step: StepSize, batch: usize, max_iters: usize) -> Self {
        Self { ranks, step, batch, max_iters, trim_nu: None, stopping: Stopping::Never, log_every: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        let step_ok = match self.step {
            StepSize::Fixed(eta) => eta >= 0.0 && eta.is_finite(),
            StepSize::Alpha(a) => a >= 0.0 && a.is_finite(),
        };
        if !step_ok {
            return Err(Error::InvalidArgument(format!("step size must be finite and nonnegative, got {:?}", self.step)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidArgument("log cadence must be at least 1".into()));
        }
        if let Some(nu) = self.trim_nu {
            if !(nu > 0.0) {
                return Err(Error::InvalidArgument(format!("spikiness parameter must be positive, got {nu}")));
            }
        }
        if let Stopping::Movement { window: 0, .. } = self.stopping {
            return Err(Error::InvalidArgument("movement window must be at least 1".into()));
        }
        Ok(())
    }

    /// Step size for an `n`-site problem.
    pub fn eta(&self, n: usize) -> f64 {
        match self.step {
            StepSize::Fixed(eta) => eta,
            StepSize::Alpha(a) => a * self.batch as f64 / (n * n) as f64,
        }
    }
}

/// `xi = 10 ||T|| nu / (9 d^n)`.
pub fn trim_threshold(t: &TtTensor, nu: f64) -> f64 {
    10.0 * t.norm() * nu / (9.0 * t.sqrt_size())
}

/// Reference quantities for error tracking.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub coeff: TtTensor,
    pub pure: Option<Mps>,
    basis: LocalBasis,
    norm: f64,
}

impl GroundTruth {
    pub fn new(coeff: TtTensor, pure: Option<Mps>) -> Result<Self> {
        let m = coeff.mode_dims()[0];
        let d = (m as f64).sqrt().round() as usize;
        if d * d != m {
            return Err(Error::InvalidArgument(format!("mode dimension {m} is not a square")));
        }
        let norm = coeff.norm();
        if norm == 0.0 {
            return Err(Error::ZeroTensor);
        }
        Ok(Self { basis: make_basis(d)?, coeff, pure, norm })
    }

    /// `||T - T*|| / ||T*||` from inner products. Below `1e-6` the identity
    /// loses digits to cancellation and the rank-summed difference is
    /// orthogonalized instead.
    pub fn rel_error(&self, t: &TtTensor) -> Result<f64> {
        let rel = t.distance(&self.coeff)? / self.norm;
        if rel < 1e-6 {
            return Ok(t.distance_expanded(&self.coeff)? / self.norm);
        }
        Ok(rel)
    }

    pub fn fidelity(&self, t: &TtTensor) -> Result<Option<f64>> {
        match &self.pure {
            Some(psi) => Ok(Some(fidelity(psi, &coeff_to_mpo(t, &self.basis)?)?)),
            None => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TracePoint {
    pub iter: usize,
    pub samples: u64,
    pub rel_error: Option<f64>,
    pub fidelity: Option<f64>,
    pub wall_ms: f64,
    pub lambda_min: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub points: Vec<TracePoint>,
    /// Iterations actually performed.
    pub iters: usize,
    pub converged: bool,
}

pub const TRACE_HEADER: &str = "iter,samples,rel_error,fidelity,wall_ms,lambda_min";

fn opt_field(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl RunTrace {
    pub fn last(&self) -> Option<&TracePoint> {
        self.points.last()
    }

    /// Comma-separated rows under [`TRACE_HEADER`]. Floats are written in
    /// shortest round-trip form.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{:.3},{:?}",
                p.iter,
                p.samples,
                opt_field(p.rel_error),
                opt_field(p.fidelity),
                p.wall_ms,
                p.lambda_min
            )?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl std::io::Read) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
            return Err(Error::Format(format!("unexpected trace header {headers:?}")));
        }
        let float = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::Format(format!("bad number {s:?}")))
            }
        };
        let mut points = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::Format(e.to_string()))?;
            let int = |i: usize| row[i].parse::<u64>().map_err(|_| Error::Format(format!("bad integer {:?}", &row[i])));
            points.push(TracePoint {
                iter: int(0)? as usize,
                samples: int(1)?,
                rel_error: float(&row[2])?,
                fidelity: float(&row[3])?,
                wall_ms: float(&row[4])?.unwrap_or(0.0),
                lambda_min: float(&row[5])?.ok_or_else(|| Error::Format("missing lambda_min".into()))?,
            });
        }
        let iters = points.last().map_or(0, |p| p.iter);
        Ok(Self { points, iters, converged: false })
    }
}
