//! Experiment plans: the TOML schema read by every subcommand.
//!
//! ```toml
//! seed = 7
//! repetitions = 3
//! output = "runs/demo"
//!
//! [state]
//! family = "random-mps"   # random-mps | ghz | ising
//! n = 6
//! rank = 2                # random-mps bond dimension
//! # g = 1.0, max_bond = 16 for ising
//! # rank_cap = 16         # cap on the coefficient-tensor ranks
//!
//! [measurement]
//! noise = "exact"         # exact | shots | gaussian
//! # shots = 4000, sigma = 0.01
//! record = false          # write the measurement log of every repetition
//!
//! [solver]
//! alpha = 4e-3            # or eta = ... for a fixed step
//! batch = 20
//! max_iters = 20000
//! stop_rel_error = 1e-6
//! log_every = 10
//!
//! [init]
//! mode = "perturbed"      # perturbed | random-mpo | spectral
//! delta = 0.1
//! ```

use std::path::{Path, PathBuf};

use mpo_qst::measurement::NoiseSource;
use mpo_qst::solvers::{InitConfig, SolverConfig, StepSize, Stopping};
use mpo_qst::states::{StateFamily, StateSpec};
use mpo_qst::tt::capped_ranks;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    RandomMps,
    Ghz,
    Ising,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub family: Family,
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bond: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_cap: Option<usize>,
}

fn default_d() -> usize {
    2
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Noise {
    #[default]
    Exact,
    Shots,
    Gaussian,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSection {
    #[serde(default)]
    pub noise: Noise,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub record: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Target TT ranks; defaults to the (capped) ranks of the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trim_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_rel_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movement_tol: Option<f64>,
    #[serde(default = "default_window")]
    pub movement_window: usize,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_batch() -> usize {
    20
}

fn default_window() -> usize {
    50
}

fn default_log_every() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Perturbed,
    RandomMpo,
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub mode: InitMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Samples per spectral stage (`K1 = K2 = K3`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub state: StateSection,
    #[serde(default)]
    pub measurement: MeasurementSection,
    pub solver: SolverSection,
    pub init: InitSection,
}

fn default_reps() -> usize {
    1
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses `text` after applying `key.path=value` overrides. Values are read
/// as TOML literals, falling back to plain strings.
pub fn parse_plan(text: &str, overrides: &[String]) -> CliResult<ExperimentPlan> {
    let mut table: toml::Table = text.parse().map_err(|e| config(format!("plan: {e}")))?;
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| config(format!("override {item:?} is not key=value")))?;
        set_path(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    let plan: ExperimentPlan = table.try_into().map_err(|e: toml::de::Error| config(format!("plan: {e}")))?;
    plan.validate()?;
    Ok(plan)
}

pub fn load_plan(path: &Path, overrides: &[String]) -> CliResult<ExperimentPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    parse_plan(&text, overrides)
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> CliResult<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| config(format!("empty override key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.into(), value);
    Ok(())
}

impl ExperimentPlan {
    pub fn validate(&self) -> CliResult<()> {
        if self.repetitions == 0 {
            return Err(config("repetitions must be at least 1"));
        }
        let s = &self.state;
        if s.n < 2 || s.d < 2 {
            return Err(config("state needs n >= 2 and d >= 2"));
        }
        match s.family {
            Family::RandomMps if s.rank.is_none() => return Err(config("random-mps needs state.rank")),
            Family::Ising if s.g.is_none() || s.max_bond.is_none() => return Err(config("ising needs state.g and state.max_bond")),
            _ => {}
        }
        if s.rank_cap == Some(0) {
            return Err(config("state.rank_cap must be at least 1"));
        }
        let m = &self.measurement;
        match m.noise {
            Noise::Shots if m.shots.is_none_or(|k| k == 0) => return Err(config("shot noise needs measurement.shots >= 1")),
            Noise::Gaussian if !m.sigma.is_some_and(|x| x >= 0.0) => return Err(config("gaussian noise needs measurement.sigma >= 0")),
            _ => {}
        }
        let v = &self.solver;
        if v.alpha.is_some() == v.eta.is_some() {
            return Err(config("set exactly one of solver.alpha and solver.eta"));
        }
        if let Some(tol) = v.movement_tol {
            if v.stop_rel_error.is_some() {
                return Err(config("solver.stop_rel_error and solver.movement_tol are exclusive"));
            }
            if !(tol > 0.0) {
                return Err(config("solver.movement_tol must be positive"));
            }
        }
        self.solver_config(vec![])?.validate().map_err(|e| config(e.to_string()))?;
        let i = &self.init;
        if let Some(delta) = i.delta {
            if !(delta >= 0.0) {
                return Err(config(format!("init.delta must be >= 0, got {delta}")));
            }
        }
        if i.mode == InitMode::Spectral && i.samples.is_none_or(|k| k == 0) {
            return Err(config("spectral init needs init.samples >= 1"));
        }
        Ok(())
    }

    pub fn state_spec(&self) -> StateSpec {
        let s = &self.state;
        let family = match s.family {
            Family::RandomMps => StateFamily::RandomMps { rank: s.rank.unwrap_or(1) },
            Family::Ghz => StateFamily::Ghz,
            Family::Ising => StateFamily::IsingGround { g: s.g.unwrap_or(1.0), max_bond: s.max_bond.unwrap_or(16) },
        };
        StateSpec { family, n: s.n, d: s.d, seed: mpo_qst::rng::derive_seed(self.seed, "state") }
    }

    pub fn noise(&self) -> NoiseSource {
        match self.measurement.noise {
            Noise::Exact => NoiseSource::Exact,
            Noise::Shots => NoiseSource::Shots(self.measurement.shots.unwrap_or(1)),
            Noise::Gaussian => NoiseSource::Gaussian(self.measurement.sigma.unwrap_or(0.0)),
        }
    }

    /// Solver ranks: explicit, else the target's ranks capped by `rank_cap`.
    pub fn solver_ranks(&self, target_ranks: &[usize]) -> Vec<usize> {
        if let Some(r) = &self.solver.ranks {
            return r.clone();
        }
        match self.state.rank_cap {
            Some(cap) => {
                let m = self.state.d * self.state.d;
                capped_ranks(&vec![m; self.state.n], cap).iter().zip(target_ranks).map(|(&a, &b)| a.min(b)).collect()
            }
            None => target_ranks.to_vec(),
        }
    }

    pub fn solver_config(&self, ranks: Vec<usize>) -> CliResult<SolverConfig> {
        let v = &self.solver;
        let step = match (v.alpha, v.eta) {
            (Some(a), None) => StepSize::Alpha(a),
            (None, Some(e)) => StepSize::Fixed(e),
            _ => return Err(config("set exactly one of solver.alpha and solver.eta")),
        };
        let mut cfg = SolverConfig::new(ranks, step, v.batch, v.max_iters);
        cfg.trim_nu = v.trim_nu;
        cfg.log_every = v.log_every;
        cfg.stopping = match (v.stop_rel_error, v.movement_tol) {
            (Some(tol), _) => Stopping::RelError(tol),
            (None, Some(tol)) => Stopping::Movement { tol, window: v.movement_window },
            (None, None) => Stopping::Never,
        };
        Ok(cfg)
    }

    /// Spectral settings; unset `mu` / `nu` take the given target-derived values.
    pub fn init_config(&self, mu: f64, nu: f64) -> InitConfig {
        let i = &self.init;
        InitConfig::new(self.state.n, i.samples.unwrap_or(1), i.mu.unwrap_or(mu), i.nu.unwrap_or(nu))
    }

    /// Seed of repetition `rep`: the global seed xor the repetition index.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        self.seed ^ rep as u64
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }
}
