use std::time::Instant;

use rand::seq::SliceRandom;

use super::{trim_threshold, GroundTruth, RunTrace, SolverConfig, Stopping, TracePoint};
use crate::error::{Error, Result};
use crate::manifold::{retract, tangent_step, TangentSpace};
use crate::measurement::{Observation, ObservationSource};
use crate::rng::{derive_seed, rng_from};
use crate::tt::{SpectrumSummary, TtTensor};

fn step_with_eta(t_cur: &TtTensor, batch: &[Observation], ranks: &[usize], eta: f64, trim_nu: Option<f64>) -> Result<TtTensor> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let base = if t_cur.is_left_orthogonal() { t_cur.clone() } else { t_cur.left_orthogonalize() };
    let space = TangentSpace::new(&base)?;
    let weight = 1.0 / batch.len() as f64;
    let mut entries = Vec::with_capacity(batch.len());
    for obs in batch {
        let idx = obs.index();
        base.check_index(idx)?;
        let residual = obs.scale * base.entry_unchecked(idx) - obs.scaled_value();
        entries.push((idx, weight * residual * obs.scale));
    }
    let v = space.project_entries(entries);
    let t_plus = tangent_step(space.base(), &v, eta)?;
    let xi = trim_nu.map(|nu| trim_threshold(&t_plus, nu));
    retract(&t_plus, ranks, xi)
}

/// One minibatch round: averaged gradient `(1/B) sum_b (<E_b,T> - Y_b) E_b`,
/// tangent projection, step, optional trim and TTSVD back to `cfg.ranks`.
pub fn orgd_step(t_cur: &TtTensor, batch: &[Observation], cfg: &SolverConfig) -> Result<TtTensor> {
    cfg.validate()?;
    step_with_eta(t_cur, batch, &cfg.ranks, cfg.eta(t_cur.n()), cfg.trim_nu)
}

/// Full-gradient step over a resident dataset, averaged over all of it.
/// The step size is `cfg.eta(n)` as configured.
pub fn rgd_offline_step(t_cur: &TtTensor, all_data: &[Observation], cfg: &SolverConfig) -> Result<TtTensor> {
    orgd_step(t_cur, all_data, cfg)
}

struct Tracker<'a> {
    truth: Option<&'a GroundTruth>,
    start: Instant,
    trace: RunTrace,
}

impl<'a> Tracker<'a> {
    fn new(truth: Option<&'a GroundTruth>) -> Self {
        Self { truth, start: Instant::now(), trace: RunTrace::default() }
    }

    fn rel_error(&self, t: &TtTensor) -> Result<Option<f64>> {
        self.truth.map(|g| g.rel_error(t)).transpose()
    }

    fn log(&mut self, iter: usize, samples: u64, t: &TtTensor, rel_error: Option<f64>) -> Result<()> {
        let fidelity = match self.truth {
            Some(g) => g.fidelity(t)?,
            None => None,
        };
        let wall_ms = self.start.elapsed().as_secs_f64() * 1e3;
        let lambda_min = SpectrumSummary::of(t).lambda_min;
        self.trace.points.push(TracePoint { iter, samples, rel_error, fidelity, wall_ms, lambda_min });
        Ok(())
    }
}

struct Mover {
    anchor: TtTensor,
    since: usize,
}

impl Mover {
    /// True when the iterate moved less than `tol` (relative) during the last
    /// `window` steps.
    fn settled(&mut self, t: &TtTensor, tol: f64, window: usize) -> Result<bool> {
        self.since += 1;
        if self.since < window {
            return Ok(false);
        }
        let moved = t.distance(&self.anchor)? / self.anchor.norm().max(f64::MIN_POSITIVE);
        self.anchor = t.clone();
        self.since = 0;
        Ok(moved < tol)
    }
}

/// Iterates [`orgd_step`] on consecutive minibatches from `stream` until the
/// stopping rule fires or `cfg.max_iters` is reached.
pub fn orgd_run<S: ObservationSource + ?Sized>(
    t0: &TtTensor,
    stream: &mut S,
    cfg: &SolverConfig,
    truth: Option<&GroundTruth>,
) -> Result<(TtTensor, RunTrace)> {
    cfg.validate()?;
    if let (Stopping::RelError(_), None) = (cfg.stopping, truth) {
        return Err(Error::InvalidArgument("relative-error stopping needs a ground truth".into()));
    }
    let eta = cfg.eta(t0.n());
    let mut t = if t0.is_left_orthogonal() { t0.clone() } else { t0.left_orthogonalize() };
    let mut tracker = Tracker::new(truth);
    let start_samples = stream.consumed();
    let err0 = tracker.rel_error(&t)?;
    tracker.log(0, 0, &t, err0)?;
    let mut mover = Mover { anchor: t.clone(), since: 0 };
    let mut converged = matches!((cfg.stopping, err0), (Stopping::RelError(tol), Some(e)) if e < tol);
    let mut iter = 0;
    while !converged && iter < cfg.max_iters {
        let batch = stream.next_batch(cfg.batch)?;
        t = step_with_eta(&t, &batch, &cfg.ranks, eta, cfg.trim_nu)?;
        iter += 1;
        let err = tracker.rel_error(&t)?;
        converged = match cfg.stopping {
            Stopping::RelError(tol) => err.is_some_and(|e| e < tol),
            Stopping::Movement { tol, window } => mover.settled(&t, tol, window)?,
            Stopping::Never => false,
        };
        if iter % cfg.log_every == 0 || converged || iter == cfg.max_iters {
            tracker.log(iter, stream.consumed() - start_samples, &t, err)?;
        }
    }
    tracker.trace.iters = iter;
    tracker.trace.converged = converged;
    Ok((t, tracker.trace))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RsgdConfig {
    /// Per-step settings. `step` gives the first epoch's step size.
    pub solver: SolverConfig,
    pub epochs: usize,
    /// Epoch `k` (1-based) scales the step by `decay^(k-1)`.
    pub decay: f64,
    pub seed: u64,
}

/// Order in which epoch `epoch` (1-based) visits a dataset of size `len`.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng_from(derive_seed(seed, &format!("epoch-{epoch}"))));
    order
}

/// Riemannian SGD over a fixed dataset, reshuffled every epoch, with the
/// step decaying by `decay` per epoch. A trailing partial batch is used as is.
pub fn rsgd_run(
    t0: &TtTensor,
    dataset: &[Observation],
    cfg: &RsgdConfig,
    truth: Option<&GroundTruth>,
) -> Result<(TtTensor, RunTrace)> {
    let sc = &cfg.solver;
    sc.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if !(cfg.decay > 0.0) {
        return Err(Error::InvalidArgument(format!("decay must be positive, got {}", cfg.decay)));
    }
    let eta1 = sc.eta(t0.n());
    let mut t = if t0.is_left_orthogonal() { t0.clone() } else { t0.left_orthogonalize() };
    let mut tracker = Tracker::new(truth);
    let err0 = tracker.rel_error(&t)?;
    tracker.log(0, 0, &t, err0)?;
    let mut iter = 0;
    let mut samples = 0u64;
    for epoch in 1..=cfg.epochs {
        let eta = eta1 * cfg.decay.powi(epoch as i32 - 1);
        let order = epoch_order(dataset.len(), cfg.seed, epoch);
        for chunk in order.chunks(sc.batch) {
            if iter == sc.max_iters {
                break;
            }
            let batch: Vec<Observation> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            t = step_with_eta(&t, &batch, &sc.ranks, eta, sc.trim_nu)?;
            iter += 1;
            samples += batch.len() as u64;
            if iter % sc.log_every == 0 {
                let err = tracker.rel_error(&t)?;
                tracker.log(iter, samples, &t, err)?;
            }
        }
        if tracker.trace.points.last().is_some_and(|p| p.iter != iter) {
            let err = tracker.rel_error(&t)?;
            tracker.log(iter, samples, &t, err)?;
        }
    }
    tracker.trace.iters = iter;
    Ok((t, tracker.trace))
}
