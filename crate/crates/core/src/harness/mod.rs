//! Experiment harness: config files, the solve+eval pipeline, metric CSV
//! and summary artifacts, checkpoints, and the property-suite verifier.

mod config;
mod verify;

pub use config::{
    EvalSection, ExperimentConfig, GameSection, HarnessError, OutputSection, SolverSection,
};
pub use verify::{run_verify, VerifyReport};

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint::{self, CheckpointMeta};
use crate::eval::{match_eval, MatchResult};
use crate::game::{Game, PlayerId};
use crate::report::{METRIC_MATCH_MEAN, METRIC_MATCH_SE};
use crate::solver::{solve, SolveArtifacts, SolveMode};
use crate::tabular::{best_response, AveragePolicy, Policy, UniformPolicy};

/// Environment variable capping traversal worker threads.
pub const THREADS_ENV: &str = "TEAMCFR_THREADS";

/// Machine-readable run summary written next to the metrics CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub config_hash: String,
    pub game: String,
    pub mode: String,
    pub iterations_completed: u64,
    pub budget_exceeded: bool,
    pub final_eval_mean: f64,
    pub final_eval_se: f64,
    pub exploitability: Option<f64>,
    pub checkpoint: String,
    pub metrics_csv: String,
}

fn mode_name(mode: SolveMode) -> &'static str {
    match mode {
        SolveMode::Mix => "mix",
        SolveMode::Joint => "joint",
        SolveMode::Tabular => "tabular",
    }
}

/// Resolves the worker count: the config value capped by `TEAMCFR_THREADS`.
pub fn resolve_workers(configured: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    match cap {
        Some(cap) if cap >= 1 => configured.min(cap),
        _ => configured,
    }
}

/// SHA-256 of the raw config text, hex-encoded.
pub fn config_hash(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Executes the solve + eval pipeline described by the config file and
/// writes `metrics.csv`, `summary.json` and a checkpoint into the output
/// directory. Deterministic given the seed in single-worker mode.
pub fn run(config_path: &Path) -> Result<RunSummary, HarnessError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| HarnessError::Io(config_path.display().to_string(), e))?;
    let config = ExperimentConfig::parse(&text)?;
    let hash = config_hash(&text);
    match config.game.clone() {
        GameSection::Goofspiel(spec) => {
            let game = crate::games::Goofspiel::new(spec)?;
            run_with(&game, "goofspiel", &config, &hash)
        }
        GameSection::Nest(spec) => {
            let game = crate::games::Nest::new(spec)?;
            run_with(&game, "nest", &config, &hash)
        }
        GameSection::TinyMatrix(spec) => {
            let game = crate::games::TinyMatrix::new(spec)?;
            run_with(&game, "tiny-matrix", &config, &hash)
        }
    }
}

fn run_with<G: Game>(
    game: &G,
    game_name: &str,
    config: &ExperimentConfig,
    hash: &str,
) -> Result<RunSummary, HarnessError> {
    let out_dir = PathBuf::from(&config.output.dir);
    fs::create_dir_all(&out_dir)
        .map_err(|e| HarnessError::Io(out_dir.display().to_string(), e))?;

    let mut solver_config = config.solver_config();
    solver_config.workers = resolve_workers(solver_config.workers);
    let (mut report, artifacts) = solve(game, &solver_config)?;
    if !config.output.wall_clock {
        for row in &mut report.rows {
            row.seconds = 0.0;
        }
    }

    // Final head-to-head evaluation: solved average policies on both sides.
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.master_seed ^ 0x5eed);
    let episodes = config.eval.episodes.max(2);
    let result: MatchResult = match &artifacts {
        SolveArtifacts::Tabular(tables) => {
            let policy = AveragePolicy(tables);
            match_eval(game, &policy, &policy, episodes, &mut eval_rng)
        }
        SolveArtifacts::Neural(nets) => {
            let policy = nets.average_policy(game);
            match_eval(game, &policy, &policy, episodes, &mut eval_rng)
        }
    };
    let final_iter = report.iterations_completed;
    report.push(final_iter, 0.0, METRIC_MATCH_MEAN, result.mean);
    report.push(final_iter, 0.0, METRIC_MATCH_SE, result.standard_error);

    let metrics_path = out_dir.join("metrics.csv");
    let mut csv = Vec::new();
    report
        .write_csv(&mut csv)
        .map_err(|e| HarnessError::Io(metrics_path.display().to_string(), e))?;
    fs::write(&metrics_path, &csv)
        .map_err(|e| HarnessError::Io(metrics_path.display().to_string(), e))?;

    let meta = CheckpointMeta {
        seed: config.master_seed,
        config_hash: hash.to_string(),
        iteration: report.iterations_completed,
    };
    let checkpoint_path = match &artifacts {
        SolveArtifacts::Tabular(tables) => {
            let path = out_dir.join("checkpoint.tcfr");
            let mut buf = Vec::new();
            checkpoint::save_tabular(&mut buf, tables, &meta)
                .and_then(|_| fs::write(&path, &buf))
                .map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
            path
        }
        SolveArtifacts::Neural(nets) => {
            let path = out_dir.join("checkpoint.tnet");
            let mut buf = Vec::new();
            checkpoint::save_neural(&mut buf, nets, game.num_agents(), &meta)
                .and_then(|_| fs::write(&path, &buf))
                .map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
            path
        }
    };

    let summary = RunSummary {
        seed: config.master_seed,
        config_hash: hash.to_string(),
        game: game_name.to_string(),
        mode: mode_name(solver_config.mode).to_string(),
        iterations_completed: report.iterations_completed,
        budget_exceeded: report.budget_exceeded,
        final_eval_mean: result.mean,
        final_eval_se: result.standard_error,
        exploitability: report.last_value(crate::report::METRIC_EXPLOITABILITY),
        checkpoint: checkpoint_path.display().to_string(),
        metrics_csv: metrics_path.display().to_string(),
    };
    let summary_path = out_dir.join("summary.json");
    let mut file = fs::File::create(&summary_path)
        .map_err(|e| HarnessError::Io(summary_path.display().to_string(), e))?;
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| HarnessError::Io(summary_path.display().to_string(), e.into()))?;
    file.write_all(json.as_bytes())
        .map_err(|e| HarnessError::Io(summary_path.display().to_string(), e))?;
    file.write_all(b"\n")
        .map_err(|e| HarnessError::Io(summary_path.display().to_string(), e))?;
    Ok(summary)
}

/// Loads a checkpoint (tabular or neural, by magic) and plays the stored
/// average strategies against the uniform baseline and against themselves.
pub fn eval_checkpoint(
    config_path: &Path,
    checkpoint_path: &Path,
    episodes: usize,
) -> Result<(MatchResult, MatchResult), HarnessError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| HarnessError::Io(config_path.display().to_string(), e))?;
    let config = ExperimentConfig::parse(&text)?;
    let bytes = fs::read(checkpoint_path)
        .map_err(|e| HarnessError::Io(checkpoint_path.display().to_string(), e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed ^ 0xc4e);

    macro_rules! eval_policy {
        ($game:expr, $policy:expr) => {{
            let vs_uniform = match_eval($game, $policy, &UniformPolicy, episodes, &mut rng);
            let selfplay = match_eval($game, $policy, $policy, episodes, &mut rng);
            Ok((vs_uniform, selfplay))
        }};
    }

    macro_rules! with_loaded {
        ($game:expr) => {{
            let game = $game;
            if bytes.starts_with(crate::checkpoint::NET_MAGIC) {
                let (nets, _) = checkpoint::load_neural(&mut bytes.as_slice())
                    .map_err(|e| HarnessError::Io(checkpoint_path.display().to_string(), e))?;
                let policy = nets.average_policy(&game);
                eval_policy!(&game, &policy)
            } else {
                let (tables, _) = checkpoint::load_tabular(&mut bytes.as_slice())
                    .map_err(|e| HarnessError::Io(checkpoint_path.display().to_string(), e))?;
                let policy = AveragePolicy(&tables);
                eval_policy!(&game, &policy)
            }
        }};
    }

    match config.game.clone() {
        GameSection::Goofspiel(spec) => with_loaded!(crate::games::Goofspiel::new(spec)?),
        GameSection::Nest(spec) => with_loaded!(crate::games::Nest::new(spec)?),
        GameSection::TinyMatrix(spec) => with_loaded!(crate::games::TinyMatrix::new(spec)?),
    }
}

/// Exact best-response values against a stored profile, from each
/// responder's perspective. Requires the game to fit the size cap.
pub fn best_response_checkpoint(
    config_path: &Path,
    checkpoint_path: &Path,
) -> Result<(f64, f64), HarnessError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| HarnessError::Io(config_path.display().to_string(), e))?;
    let config = ExperimentConfig::parse(&text)?;
    let cap = config.solver.size_cap;
    let bytes = fs::read(checkpoint_path)
        .map_err(|e| HarnessError::Io(checkpoint_path.display().to_string(), e))?;

    fn values<G: Game>(game: &G, policy: &dyn Policy, cap: u64) -> Result<(f64, f64), HarnessError> {
        let adv = best_response(game, policy, PlayerId::Adversary, cap)?;
        let team = best_response(game, policy, PlayerId::Team, cap)?;
        Ok((adv.value, team.value))
    }

    macro_rules! with_loaded {
        ($game:expr) => {{
            let game = $game;
            if bytes.starts_with(crate::checkpoint::NET_MAGIC) {
                let (nets, _) = checkpoint::load_neural(&mut bytes.as_slice())
                    .map_err(|e| HarnessError::Io(checkpoint_path.display().to_string(), e))?;
                let policy = nets.average_policy(&game);
                values(&game, &policy, cap)
            } else {
                let (tables, _) = checkpoint::load_tabular(&mut bytes.as_slice())
                    .map_err(|e| HarnessError::Io(checkpoint_path.display().to_string(), e))?;
                values(&game, &AveragePolicy(&tables), cap)
            }
        }};
    }

    match config.game.clone() {
        GameSection::Goofspiel(spec) => with_loaded!(crate::games::Goofspiel::new(spec)?),
        GameSection::Nest(spec) => with_loaded!(crate::games::Nest::new(spec)?),
        GameSection::TinyMatrix(spec) => with_loaded!(crate::games::TinyMatrix::new(spec)?),
    }
}
