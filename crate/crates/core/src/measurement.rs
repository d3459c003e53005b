//! Simulated measurements of tensor-product observables against a target
//! coefficient tensor, and the sample streams fed to the solvers.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::manifold::SparseTensor;
use crate::rng::rng_from;
use crate::tt::TtTensor;

/// Slack on `|2^{n/2} e| <= 1` before a target counts as unphysical.
const PHYSICAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shots {
    Exact,
    Finite(u64),
    /// Gaussian surrogate noise (not a physical shot model).
    Surrogate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub index: Vec<usize>,
    pub value: f64,
    pub shots: Shots,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseSource {
    Exact,
    /// `M` two-outcome shots per observable; qubits only.
    Shots(u64),
    /// Additive `N(0, sigma^2)` on the unscaled expectation.
    Gaussian(f64),
}

/// One streamed sample: `E = scale * e_omega` and `Y = scale * y_omega`
/// with `scale = d^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub record: MeasurementRecord,
    pub scale: f64,
}

impl Observation {
    pub fn index(&self) -> &[usize] {
        &self.record.index
    }

    /// `Y = d^n y`.
    pub fn scaled_value(&self) -> f64 {
        self.scale * self.record.value
    }

    pub fn indicator(&self, dims: &[usize]) -> SparseTensor {
        SparseTensor::new(dims.to_vec(), vec![(self.record.index.clone(), self.scale)]).expect("observation index in range")
    }
}

/// `<A_idx, rho>` read off the coefficient tensor.
pub fn exact_expectation(t_star: &TtTensor, idx: &[usize]) -> Result<f64> {
    t_star.entry(idx)
}

fn check_qubit(t_star: &TtTensor) -> Result<()> {
    if t_star.mode_dims().iter().any(|&m| m != 4) {
        return Err(Error::InvalidArgument("shot simulation needs qubit coefficient tensors (mode dims 4)".into()));
    }
    Ok(())
}

/// Binomial stand-in for `M` independent `+-1` outcomes with
/// `P(+1) = (1 + 2^{n/2} e) / 2`; returns `y = 2^{-n/2} * mean`.
pub fn sample_shots_qubit<R: Rng + ?Sized>(t_star: &TtTensor, idx: &[usize], shots: u64, rng: &mut R) -> Result<MeasurementRecord> {
    check_qubit(t_star)?;
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be positive".into()));
    }
    let e = t_star.entry(idx)?;
    let amp_scale = 2f64.powf(t_star.n() as f64 / 2.0);
    let amp = amp_scale * e;
    if amp.abs() > 1.0 + PHYSICAL_TOL {
        return Err(Error::Unphysical { value: amp, index: idx.to_vec() });
    }
    let p = ((1.0 + amp.clamp(-1.0, 1.0)) / 2.0).clamp(0.0, 1.0);
    let plus = Binomial::new(shots, p).expect("p in [0, 1]").sample(rng);
    let mean = 2.0 * plus as f64 / shots as f64 - 1.0;
    Ok(MeasurementRecord { index: idx.to_vec(), value: mean / amp_scale, shots: Shots::Finite(shots) })
}

/// Uniform-with-replacement observable stream with a seeded generator.
#[derive(Clone, Debug)]
pub struct MeasurementStream {
    t_star: Arc<TtTensor>,
    source: NoiseSource,
    seed: u64,
    rng: ChaCha20Rng,
    scale: f64,
    dims: Vec<usize>,
    drawn: u64,
}

pub fn make_stream(t_star: &TtTensor, source: NoiseSource, seed: u64) -> Result<MeasurementStream> {
    MeasurementStream::new(Arc::new(t_star.clone()), source, seed)
}

impl MeasurementStream {
    pub fn new(t_star: Arc<TtTensor>, source: NoiseSource, seed: u64) -> Result<Self> {
        match source {
            NoiseSource::Shots(m) => {
                check_qubit(&t_star)?;
                if m == 0 {
                    return Err(Error::InvalidArgument("shot count must be positive".into()));
                }
            }
            NoiseSource::Gaussian(s) if !(s >= 0.0) => {
                return Err(Error::InvalidArgument("gaussian sigma must be >= 0".into()));
            }
            _ => {}
        }
        let dims = t_star.mode_dims();
        Ok(Self { scale: t_star.sqrt_size(), dims, t_star, source, seed, rng: rng_from(seed), drawn: 0 })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source(&self) -> NoiseSource {
        self.source
    }

    pub fn target(&self) -> &TtTensor {
        &self.t_star
    }

    pub fn next_record(&mut self) -> Result<MeasurementRecord> {
        let idx: Vec<usize> = self.dims.iter().map(|&m| self.rng.random_range(0..m)).collect();
        self.drawn += 1;
        match self.source {
            NoiseSource::Exact => Ok(MeasurementRecord { value: self.t_star.entry_unchecked(&idx), index: idx, shots: Shots::Exact }),
            NoiseSource::Shots(m) => sample_shots_qubit(&self.t_star, &idx, m, &mut self.rng),
            NoiseSource::Gaussian(sigma) => {
                let z: f64 = self.rng.sample(StandardNormal);
                let value = self.t_star.entry_unchecked(&idx) + sigma * z;
                Ok(MeasurementRecord { index: idx, value, shots: Shots::Surrogate })
            }
        }
    }
}

/// Anything that yields observations in a fixed order.
pub trait ObservationSource {
    fn next_batch(&mut self, batch: usize) -> Result<Vec<Observation>>;
    /// Observations handed out so far.
    fn consumed(&self) -> u64;
}

impl ObservationSource for MeasurementStream {
    fn next_batch(&mut self, batch: usize) -> Result<Vec<Observation>> {
        (0..batch).map(|_| Ok(Observation { record: self.next_record()?, scale: self.scale })).collect()
    }

    fn consumed(&self) -> u64 {
        self.drawn
    }
}

/// Replays a recorded list of measurements in order.
#[derive(Clone, Debug)]
pub struct ReplayStream {
    records: Vec<MeasurementRecord>,
    scale: f64,
    pos: usize,
}

impl ReplayStream {
    /// `mode_dims` fixes the scale `sqrt(prod mode_dims) = d^n`.
    pub fn new(records: Vec<MeasurementRecord>, mode_dims: &[usize]) -> Result<Self> {
        for r in &records {
            if r.index.len() != mode_dims.len() || r.index.iter().zip(mode_dims).any(|(i, m)| i >= m) {
                return Err(Error::IndexOutOfRange { index: r.index.clone(), dims: mode_dims.to_vec() });
            }
        }
        let scale = mode_dims.iter().map(|&m| (m as f64).sqrt()).product();
        Ok(Self { records, scale, pos: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.pos
    }
}

impl ObservationSource for ReplayStream {
    fn next_batch(&mut self, batch: usize) -> Result<Vec<Observation>> {
        if self.remaining() < batch {
            return Err(Error::InvalidArgument(format!("replay exhausted: {} records left, {batch} requested", self.remaining())));
        }
        let out = self.records[self.pos..self.pos + batch].iter().map(|r| Observation { record: r.clone(), scale: self.scale }).collect();
        self.pos += batch;
        Ok(out)
    }

    fn consumed(&self) -> u64 {
        self.pos as u64
    }
}

/// Wraps a source and keeps every observation it hands out.
pub struct Recording<S> {
    inner: S,
    pub log: Vec<MeasurementRecord>,
}

impl<S: ObservationSource> Recording<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, log: Vec::new() }
    }

    pub fn into_parts(self) -> (S, Vec<MeasurementRecord>) {
        (self.inner, self.log)
    }
}

impl<S: ObservationSource> ObservationSource for Recording<S> {
    fn next_batch(&mut self, batch: usize) -> Result<Vec<Observation>> {
        let obs = self.inner.next_batch(batch)?;
        self.log.extend(obs.iter().map(|o| o.record.clone()));
        Ok(obs)
    }

    fn consumed(&self) -> u64 {
        self.inner.consumed()
    }
}

fn shots_field(s: Shots) -> String {
    match s {
        Shots::Exact => "inf".into(),
        Shots::Finite(m) => m.to_string(),
        Shots::Surrogate => "surrogate".into(),
    }
}

fn parse_shots(s: &str) -> Result<Shots> {
    match s {
        "inf" => Ok(Shots::Exact),
        "surrogate" => Ok(Shots::Surrogate),
        _ => s.parse().map(Shots::Finite).map_err(|_| Error::Format(format!("bad shots field {s:?}"))),
    }
}

/// Writes `step,omega_1,...,omega_n,value,shots` rows; indices are zero-based
/// and `step` is the record's position in the stream.
pub fn write_log(w: impl Write, n: usize, records: &[MeasurementRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["step".to_string()];
    header.extend((1..=n).map(|k| format!("omega_{k}")));
    header.extend(["value".to_string(), "shots".to_string()]);
    wr.write_record(&header).map_err(csv_err)?;
    for (step, r) in records.iter().enumerate() {
        let mut row = vec![step.to_string()];
        row.extend(r.index.iter().map(|i| i.to_string()));
        row.push(format!("{:?}", r.value));
        row.push(shots_field(r.shots));
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_log(r: impl Read) -> Result<Vec<MeasurementRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let n = headers
        .len()
        .checked_sub(3)
        .filter(|&n| n >= 1 && headers.get(0) == Some("step") && headers.get(n + 1) == Some("value") && headers.get(n + 2) == Some("shots"))
        .ok_or_else(|| Error::Format("measurement log header must be step,omega_1..omega_n,value,shots".into()))?;
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| Error::Format(format!("row {}: bad {what}", row + 1));
        let step: usize = rec[0].parse().map_err(|_| bad("step"))?;
        if step != row {
            return Err(bad("step order"));
        }
        let index = (1..=n).map(|k| rec[k].parse().map_err(|_| bad("index"))).collect::<Result<Vec<usize>>>()?;
        let value: f64 = rec[n + 1].parse().map_err(|_| bad("value"))?;
        if !value.is_finite() {
            return Err(bad("value"));
        }
        out.push(MeasurementRecord { index, value, shots: parse_shots(&rec[n + 2])? });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}
