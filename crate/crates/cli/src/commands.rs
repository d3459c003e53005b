use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use mpo_qst::measurement::{make_stream, read_log, write_log, MeasurementRecord, ObservationSource, Recording, ReplayStream};
use mpo_qst::mpo::{coeff_to_mpo, fidelity, make_basis, mpo_to_coeff, mps_to_mpo, Mpo, Mps};
use mpo_qst::rng::{derive_seed, RNG_ID};
use mpo_qst::solvers::{orgd_run, perturbed_init, random_mpo_init, spectral_init, GroundTruth, RunTrace};
use mpo_qst::states::{generate, GeneratedState};
use mpo_qst::tt::io::{read_ttr1, write_ttr1};
use mpo_qst::tt::coherence_report;
use mpo_qst::TtTensor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::plan::{ExperimentPlan, InitMode};

/// Run metadata written next to every set of outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    pub library_version: String,
    pub cli_version: String,
    pub rng: String,
    pub target_ranks: Vec<usize>,
    pub solver_ranks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    pub plan: ExperimentPlan,
}

/// Everything derived from a plan before any sampling happens.
pub struct Problem {
    pub plan: ExperimentPlan,
    pub state: GeneratedState,
    /// Coefficient tensor of the target density matrix.
    pub target: TtTensor,
    pub truth: GroundTruth,
    pub ranks: Vec<usize>,
}

pub fn prepare(plan: &ExperimentPlan) -> CliResult<Problem> {
    let state = generate(&plan.state_spec())?;
    let basis = make_basis(plan.state.d)?;
    let target = mpo_to_coeff(&mps_to_mpo(&state.mps), &basis)?;
    let ranks = plan.solver_ranks(&target.ranks());
    mpo_qst::tt::check_ranks(&target.mode_dims(), &ranks)?;
    let truth = GroundTruth::new(target.clone(), Some(state.mps.clone()))?;
    Ok(Problem { plan: plan.clone(), state, target, truth, ranks })
}

impl Problem {
    pub fn metadata(&self, command: &str) -> Metadata {
        Metadata {
            command: command.into(),
            library_version: mpo_qst::VERSION.into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            rng: RNG_ID.into(),
            target_ranks: self.target.ranks(),
            solver_ranks: self.ranks.clone(),
            energy: self.state.energy,
            plan: self.plan.clone(),
        }
    }

    /// Initial iterate of repetition `rep`. Spectral initialization reads
    /// from `stream`; the other modes leave it untouched.
    pub fn initialize<S: ObservationSource + ?Sized>(&self, rep: usize, stream: &mut S) -> CliResult<TtTensor> {
        let seed = derive_seed(self.plan.rep_seed(rep), "init");
        let dims = self.target.mode_dims();
        let t0 = match self.plan.init.mode {
            InitMode::Perturbed => perturbed_init(&self.target, &self.ranks, self.plan.init.delta.unwrap_or(0.1), seed)?,
            InitMode::RandomMpo => random_mpo_init(&dims, &self.ranks, seed)?,
            InitMode::Spectral => {
                let report = coherence_report(&self.target)?;
                let mu = report.incoherence.map_or(f64::INFINITY, |c| c * c);
                let cfg = self.plan.init_config(mu, report.spikiness);
                spectral_init(stream, &dims, &cfg, &self.ranks)?
            }
        };
        Ok(t0)
    }

    pub fn stream_seed(&self, rep: usize) -> u64 {
        derive_seed(self.plan.rep_seed(rep), "stream")
    }
}

#[derive(Clone, Debug)]
pub struct RepOutcome {
    pub rep: usize,
    pub init_error: f64,
    pub estimate: TtTensor,
    pub trace: RunTrace,
    pub records: Option<Vec<MeasurementRecord>>,
}

fn solve<S: ObservationSource>(problem: &Problem, rep: usize, stream: &mut S) -> CliResult<(f64, TtTensor, RunTrace)> {
    let t0 = problem.initialize(rep, stream)?;
    let init_error = problem.truth.rel_error(&t0)?;
    let cfg = problem.plan.solver_config(problem.ranks.clone())?;
    let (estimate, trace) = orgd_run(&t0, stream, &cfg, Some(&problem.truth))?;
    Ok((init_error, estimate, trace))
}

fn run_with<S: ObservationSource>(problem: &Problem, rep: usize, mut stream: S) -> CliResult<RepOutcome> {
    let (init_error, estimate, trace, records) = if problem.plan.measurement.record {
        let mut rec = Recording::new(stream);
        let (e, t, tr) = solve(problem, rep, &mut rec)?;
        (e, t, tr, Some(rec.into_parts().1))
    } else {
        let (e, t, tr) = solve(problem, rep, &mut stream)?;
        (e, t, tr, None)
    };
    Ok(RepOutcome { rep, init_error, estimate, trace, records })
}

/// One repetition with freshly simulated measurements, or with `log` replayed
/// in order when given.
pub fn run_repetition(problem: &Problem, rep: usize, log: Option<Vec<MeasurementRecord>>) -> CliResult<RepOutcome> {
    match log {
        Some(records) => run_with(problem, rep, ReplayStream::new(records, &problem.target.mode_dims())?),
        None => run_with(problem, rep, make_stream(&problem.target, problem.plan.noise(), problem.stream_seed(rep))?),
    }
}

pub fn output_dir(plan: &ExperimentPlan, flag: Option<&Path>) -> CliResult<PathBuf> {
    let dir = flag.map(Path::to_path_buf).or_else(|| plan.output.clone()).ok_or_else(|| CliError::Config("no output directory (set `output` or pass --out)".into()))?;
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_metadata(dir: &Path, meta: &Metadata) -> CliResult<()> {
    let path = dir.join("metadata.toml");
    let text = toml::to_string(meta).map_err(|e| CliError::Data(format!("metadata: {e}")))?;
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub fn read_metadata(dir: &Path) -> CliResult<Metadata> {
    let path = dir.join("metadata.toml");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let meta: Metadata = toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    meta.plan.validate()?;
    Ok(meta)
}

pub fn write_tensor(path: &Path, t: &TtTensor) -> CliResult<()> {
    let mut w = create(path)?;
    write_ttr1(&mut w, t)?;
    finish(w, path)
}

pub fn read_tensor(path: &Path) -> CliResult<TtTensor> {
    Ok(read_ttr1(&mut open(path)?)?)
}

pub fn trace_path(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("trace-{rep}.csv"))
}

pub fn estimate_path(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("estimate-{rep}.ttr1"))
}

pub fn log_path(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("measurements-{rep}.csv"))
}

pub const SUMMARY_HEADER: &str = "rep,seed,iters,samples,converged,init_error,final_error,final_fidelity";

/// `generate-state`: `state.ttc1` (MPS), `coeff.ttr1` and metadata.
pub fn generate_state(plan: &ExperimentPlan, dir: &Path) -> CliResult<Problem> {
    let problem = prepare(plan)?;
    let path = dir.join("state.ttc1");
    let mut w = create(&path)?;
    problem.state.mps.write_to(&mut w)?;
    finish(w, &path)?;
    write_tensor(&dir.join("coeff.ttr1"), &problem.target)?;
    write_metadata(dir, &problem.metadata("generate-state"))?;
    Ok(problem)
}

/// `reconstruct`: every repetition end to end. With `logs`, repetition `r`
/// replays `logs[r]` instead of simulating.
pub fn reconstruct(plan: &ExperimentPlan, dir: &Path, logs: Option<Vec<Vec<MeasurementRecord>>>) -> CliResult<Vec<RepOutcome>> {
    let problem = prepare(plan)?;
    write_metadata(dir, &problem.metadata("reconstruct"))?;
    let mut logs = logs.map(|l| l.into_iter());
    let mut outcomes = Vec::with_capacity(plan.repetitions);
    for rep in 0..plan.repetitions {
        let log = match logs.as_mut() {
            Some(it) => Some(it.next().ok_or_else(|| CliError::Data(format!("no measurement log for repetition {rep}")))?),
            None => None,
        };
        let out = run_repetition(&problem, rep, log)?;
        let path = trace_path(dir, rep);
        let mut w = create(&path)?;
        out.trace.write_csv(&mut w)?;
        finish(w, &path)?;
        write_tensor(&estimate_path(dir, rep), &out.estimate)?;
        if let Some(records) = &out.records {
            let path = log_path(dir, rep);
            let mut w = create(&path)?;
            write_log(&mut w, plan.state.n, records)?;
            finish(w, &path)?;
        }
        outcomes.push(out);
    }
    let path = dir.join("summary.csv");
    let mut w = create(&path)?;
    let io = |e| CliError::io(&path, e);
    writeln!(w, "{SUMMARY_HEADER}").map_err(io)?;
    for o in &outcomes {
        let last = o.trace.last().expect("trace has the initial point");
        writeln!(
            w,
            "{},{},{},{},{},{:?},{:?},{:?}",
            o.rep,
            plan.rep_seed(o.rep),
            o.trace.iters,
            last.samples,
            o.trace.converged,
            o.init_error,
            last.rel_error.unwrap_or(f64::NAN),
            last.fidelity.unwrap_or(f64::NAN)
        )
        .map_err(io)?;
    }
    finish(w, &path)?;
    Ok(outcomes)
}

/// `init`: initial iterates only, with their relative errors.
pub fn init_only(plan: &ExperimentPlan, dir: &Path) -> CliResult<Vec<(TtTensor, f64)>> {
    let problem = prepare(plan)?;
    write_metadata(dir, &problem.metadata("init"))?;
    let mut out = Vec::with_capacity(plan.repetitions);
    for rep in 0..plan.repetitions {
        let mut stream = make_stream(&problem.target, plan.noise(), problem.stream_seed(rep))?;
        let t0 = problem.initialize(rep, &mut stream)?;
        write_tensor(&dir.join(format!("init-{rep}.ttr1")), &t0)?;
        let err = problem.truth.rel_error(&t0)?;
        out.push((t0, err));
    }
    Ok(out)
}

/// A file holding either a state or an estimate.
pub enum Loaded {
    Pure(Mps),
    Operator(Mpo),
    Coeff(TtTensor),
}

pub fn load_any(path: &Path) -> CliResult<Loaded> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    let bad = |e: mpo_qst::Error| CliError::Data(format!("{}: {e}", path.display()));
    match bytes.get(..5) {
        Some([b'T', b'T', b'R', b'1', _]) => Ok(Loaded::Coeff(read_ttr1(&mut bytes.as_slice()).map_err(bad)?)),
        Some([b'T', b'T', b'C', b'1', 3]) => Ok(Loaded::Pure(Mps::read_from(&mut bytes.as_slice()).map_err(bad)?)),
        Some([b'T', b'T', b'C', b'1', 4]) => Ok(Loaded::Operator(Mpo::read_from(&mut bytes.as_slice()).map_err(bad)?)),
        _ => Err(CliError::Data(format!("{}: not a TTR1 or TTC1 file", path.display()))),
    }
}

fn local_dim(mode: usize) -> CliResult<usize> {
    let d = (mode as f64).sqrt().round() as usize;
    if d * d != mode {
        return Err(CliError::Data(format!("coefficient mode dimension {mode} is not a square")));
    }
    Ok(d)
}

fn to_coeff(x: &Loaded) -> CliResult<TtTensor> {
    Ok(match x {
        Loaded::Pure(psi) => mpo_to_coeff(&mps_to_mpo(psi), &make_basis(psi.d())?)?,
        Loaded::Operator(m) => mpo_to_coeff(m, &make_basis(m.d())?)?,
        Loaded::Coeff(t) => t.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// Relative Frobenius distance of the density matrices.
    pub distance: f64,
    /// `<psi|rho|psi>`, when the reference is a pure state.
    pub fidelity: Option<f64>,
}

/// `evaluate`: relative distance and fidelity, computed on tensor trains.
pub fn evaluate(state: &Path, reconstruction: &Path) -> CliResult<Metrics> {
    let reference = load_any(state)?;
    let estimate = load_any(reconstruction)?;
    let t_ref = to_coeff(&reference)?;
    let t_est = to_coeff(&estimate)?;
    if t_ref.mode_dims() != t_est.mode_dims() {
        return Err(CliError::Data(format!("mode dims differ: {:?} vs {:?}", t_ref.mode_dims(), t_est.mode_dims())));
    }
    let truth = GroundTruth::new(t_ref, None)?;
    let distance = truth.rel_error(&t_est)?;
    let fidelity = match &reference {
        Loaded::Pure(psi) => {
            let rho = match estimate {
                Loaded::Operator(m) => m,
                _ => coeff_to_mpo(&t_est, &make_basis(local_dim(t_est.mode_dims()[0])?)?)?,
            };
            Some(fidelity(psi, &rho)?)
        }
        _ => None,
    };
    Ok(Metrics { distance, fidelity })
}

/// Trace CSV with the wall-time column blanked.
pub fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            let mut cols: Vec<&str> = line.split(',').collect();
            if cols.len() > 4 {
                cols.remove(4);
            }
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    pub repetitions: usize,
    /// Repetitions whose trace or estimate differ from the original run.
    pub mismatched: Vec<usize>,
}

/// `replay`: reruns the plan recorded in `run_dir` into `out` and compares
/// traces (without wall time) and estimates byte for byte. `from_log`
/// feeds the recorded measurement logs instead of resimulating.
pub fn replay(run_dir: &Path, out: &Path, from_log: bool) -> CliResult<ReplayReport> {
    let meta = read_metadata(run_dir)?;
    let plan = meta.plan;
    let logs = if from_log {
        let logs = (0..plan.repetitions)
            .map(|rep| {
                let path = log_path(run_dir, rep);
                read_log(open(&path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
            })
            .collect::<CliResult<Vec<_>>>()?;
        Some(logs)
    } else {
        None
    };
    reconstruct(&plan, out, logs)?;
    let read = |path: PathBuf| fs::read(&path).map_err(|e| CliError::io(&path, e));
    let mut mismatched = Vec::new();
    for rep in 0..plan.repetitions {
        let a = String::from_utf8_lossy(&read(trace_path(run_dir, rep))?).into_owned();
        let b = String::from_utf8_lossy(&read(trace_path(out, rep))?).into_owned();
        let same_trace = strip_wall_time(&a) == strip_wall_time(&b);
        let same_estimate = read(estimate_path(run_dir, rep))? == read(estimate_path(out, rep))?;
        if !(same_trace && same_estimate) {
            mismatched.push(rep);
        }
    }
    Ok(ReplayReport { repetitions: plan.repetitions, mismatched })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    /// Iterations to reach the target per repetition; `None` if not reached.
    pub iters: Vec<Option<usize>>,
}

impl ScalingRow {
    pub fn mean(&self) -> Option<f64> {
        let v: Option<Vec<usize>> = self.iters.iter().copied().collect();
        v.map(|v| v.iter().sum::<usize>() as f64 / v.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub rows: Vec<ScalingRow>,
    /// `iterations ~ c n^p`; `None` when some size never reached the target.
    pub c: Option<f64>,
    pub p: Option<f64>,
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits `y ~ c x^p` in log-log space, returning `(c, p)`.
pub fn power_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (p, b) = linear_fit(&lx, &ly);
    (b.exp(), p)
}

/// `benchmark-scaling`: for each `n`, iterations until the relative error
/// drops below `target`, averaged over the plan's repetitions.
pub fn benchmark_scaling(template: &ExperimentPlan, sizes: &[usize], target: f64, dir: Option<&Path>) -> CliResult<ScalingFit> {
    if sizes.len() < 2 {
        return Err(CliError::Config("scaling needs at least two sizes".into()));
    }
    if !(target > 0.0) {
        return Err(CliError::Config(format!("target error must be positive, got {target}")));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut plan = template.clone();
        plan.state.n = n;
        plan.solver.stop_rel_error = Some(target);
        plan.solver.movement_tol = None;
        plan.solver.log_every = plan.solver.max_iters.max(1);
        plan.measurement.record = false;
        plan.validate()?;
        let problem = prepare(&plan)?;
        let mut iters = Vec::with_capacity(plan.repetitions);
        for rep in 0..plan.repetitions {
            let out = run_repetition(&problem, rep, None)?;
            iters.push(out.trace.converged.then_some(out.trace.iters));
        }
        rows.push(ScalingRow { n, iters });
    }
    let means: Option<Vec<f64>> = rows.iter().map(ScalingRow::mean).collect();
    let (c, p) = match means {
        Some(m) => {
            let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
            let (c, p) = power_fit(&x, &m);
            (Some(c), Some(p))
        }
        None => (None, None),
    };
    let fit = ScalingFit { rows, c, p };
    if let Some(dir) = dir {
        write_scaling(dir, template, &fit)?;
    }
    Ok(fit)
}

fn write_scaling(dir: &Path, template: &ExperimentPlan, fit: &ScalingFit) -> CliResult<()> {
    let path = dir.join("scaling.csv");
    let mut w = create(&path)?;
    let io = |e| CliError::io(&path, e);
    writeln!(w, "n,rep,seed,iters,converged").map_err(io)?;
    for row in &fit.rows {
        for (rep, it) in row.iters.iter().enumerate() {
            let iters = it.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{rep},{},{iters},{}", row.n, template.rep_seed(rep), it.is_some()).map_err(io)?;
        }
    }
    finish(w, &path)?;
    #[derive(Serialize)]
    struct Fit {
        sizes: Vec<usize>,
        mean_iters: Vec<f64>,
        c: Option<f64>,
        p: Option<f64>,
    }
    let summary = Fit {
        sizes: fit.rows.iter().map(|r| r.n).collect(),
        mean_iters: fit.rows.iter().map(|r| r.mean().unwrap_or(f64::NAN)).collect(),
        c: fit.c,
        p: fit.p,
    };
    let path = dir.join("scaling.toml");
    let text = toml::to_string(&summary).map_err(|e| CliError::Data(format!("scaling summary: {e}")))?;
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    let mut plan = template.clone();
    plan.output = Some(dir.to_path_buf());
    let meta = Metadata {
        command: "benchmark-scaling".into(),
        library_version: mpo_qst::VERSION.into(),
        cli_version: env!("CARGO_PKG_VERSION").into(),
        rng: RNG_ID.into(),
        target_ranks: vec![],
        solver_ranks: vec![],
        energy: None,
        plan,
    };
    write_metadata(dir, &meta)
}
