//! Experiment configuration: flat sections with typed keys, parsed from
//! TOML text. Every run artifact embeds the master seed and the config hash.

use serde::Deserialize;
use thiserror::Error;

use crate::games::{GoofspielSpec, NestSpec, SpecError, TinyMatrixSpec};
use crate::neural::{TrainConfig, TrainError};
use crate::solver::{NetConfig, SolveError, SolveMode, SolverConfig};
use crate::tabular::TabularError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

/// The `[game]` section, dispatched on `kind`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GameSection {
    Goofspiel(GoofspielSpec),
    Nest(NestSpec),
    TinyMatrix(TinyMatrixSpec),
}

fn default_iterations() -> u64 {
    64
}
fn default_traversals() -> usize {
    8
}
fn default_probe_threshold() -> usize {
    64
}
fn default_probe_count() -> usize {
    1
}
fn default_eval_every() -> u64 {
    1
}
fn default_eval_episodes() -> usize {
    1000
}
fn default_size_cap() -> u64 {
    crate::tabular::DEFAULT_SIZE_CAP
}
fn default_memory_capacity() -> usize {
    2_000_000
}
fn default_workers() -> usize {
    1
}

/// The `[solver]` section.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SolverSection {
    pub mode: SolveMode,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default = "default_traversals")]
    pub traversals: usize,
    #[serde(default = "default_probe_threshold")]
    pub probe_threshold: usize,
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_size_cap")]
    pub size_cap: u64,
    #[serde(default = "default_memory_capacity")]
    pub memory_capacity: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub time_budget_secs: Option<f64>,
    #[serde(default)]
    pub net: NetSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NetSection {
    pub hidden: Vec<usize>,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            hidden: NetConfig::default().hidden,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainSection {
    pub step_size: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub epochs: usize,
    pub eval_subsample: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            step_size: d.step_size,
            momentum: d.momentum,
            batch_size: d.batch_size,
            steps: d.steps,
            epochs: d.epochs,
            eval_subsample: d.eval_subsample,
        }
    }
}

fn default_final_episodes() -> usize {
    2000
}

/// The `[eval]` section: the final head-to-head evaluation.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_final_episodes")]
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            episodes: default_final_episodes(),
        }
    }
}

fn default_out_dir() -> String {
    "out".to_string()
}

/// The `[output]` section. With `wall-clock` off (the default) the seconds
/// column in the metrics CSV is zeroed so re-runs are byte-identical.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default)]
    pub wall_clock: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
            wall_clock: false,
        }
    }
}

/// A full experiment description.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub game: GameSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parses TOML text; parse failures carry the line/column diagnostics
    /// toml produces.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            mode: s.mode,
            iterations: s.iterations,
            traversals: s.traversals,
            probe_threshold: s.probe_threshold,
            probe_count: s.probe_count,
            seed: self.master_seed,
            eval_every: s.eval_every,
            eval_episodes: s.eval_episodes,
            size_cap: s.size_cap,
            net: NetConfig {
                hidden: s.net.hidden.clone(),
            },
            train: TrainConfig {
                step_size: s.train.step_size,
                momentum: s.train.momentum,
                batch_size: s.train.batch_size,
                steps: s.train.steps,
                epochs: s.train.epochs,
                eval_subsample: s.train.eval_subsample,
            },
            memory_capacity: s.memory_capacity,
            workers: s.workers,
            time_budget_secs: s.time_budget_secs,
        }
    }
}
