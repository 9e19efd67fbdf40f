//! The outer solve loop: T iterations, each running K probe-sampling
//! traversals per player into reservoir memories, then training the regret
//! and strategy networks on warm-start targets.
//!
//! Three modes share the loop. `mix` decomposes team regrets through the
//! shared agent network and its product mixing layer; `joint` is the
//! baseline that scores whole joint actions with one network and has to
//! enumerate the joint space; `tabular` delegates to exact full-traversal
//! CFR for oracle-checkable runs.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::match_eval;
use crate::game::{Game, InfoSetKey, JointAction, PlayerId};
use crate::neural::{
    train_adversary_regret, train_joint_regret, train_joint_strategy, train_strategy,
    train_team_regret, AdversaryRegretNet, JointNet, NetSpec, Network, OutputHead,
    RecordedStrategy, RegretEntries, RegretRecord, RegretNet, SampleMemory, StrategyNet,
    StrategyRecord, TrainConfig, TrainError,
};
use crate::report::{
    SolveReport, METRIC_EXPLOITABILITY, METRIC_LOSS_REGRET, METRIC_LOSS_STRATEGY,
    METRIC_MATCH_MEAN, METRIC_MATCH_SE,
};
use crate::tabular::{
    cfr_iteration, estimate_histories, exploitability, probe_traverse, AveragePolicy, CfrTables,
    Policy, ProbeConfig, RecordingSink, RegretSink, TeamMode, TeamStrategy, TraversalStats,
    UniformPolicy,
};

/// Team representation used by the solve loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    /// Product-form decomposition: shared agent net + mixing layer.
    Mix,
    /// Joint-action baseline network over the enumerated joint space.
    Joint,
    /// Exact tabular CFR (joint team), for small games.
    Tabular,
}

/// Network architecture knobs (heads are fixed per net kind).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: vec![64, 64, 64],
        }
    }
}

/// Full solver configuration.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub mode: SolveMode,
    /// CFR iterations T.
    pub iterations: u64,
    /// Traversals per player per iteration K.
    pub traversals: usize,
    /// Max candidate joint actions evaluated per team infoset visit M.
    pub probe_threshold: usize,
    /// Rollouts per non-sampled action.
    pub probe_count: usize,
    pub seed: u64,
    /// Exploitability / match evaluation cadence (iterations).
    pub eval_every: u64,
    /// Episodes per match evaluation on games too large for exact
    /// exploitability.
    pub eval_episodes: usize,
    /// History cap for the exact routines.
    pub size_cap: u64,
    pub net: NetConfig,
    pub train: TrainConfig,
    /// Reservoir capacity per memory.
    pub memory_capacity: usize,
    /// Traversal worker threads (results are deterministic regardless).
    pub workers: usize,
    /// Optional wall-clock budget; the run stops gracefully when exceeded.
    pub time_budget_secs: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: SolveMode::Mix,
            iterations: 64,
            traversals: 8,
            probe_threshold: 64,
            probe_count: 1,
            seed: 1,
            eval_every: 1,
            eval_episodes: 1000,
            size_cap: crate::tabular::DEFAULT_SIZE_CAP,
            net: NetConfig::default(),
            train: TrainConfig::default(),
            memory_capacity: 2_000_000,
            workers: 1,
            time_budget_secs: None,
        }
    }
}

/// Trained networks of a neural solve.
#[derive(Debug, Clone)]
pub struct NeuralNets {
    pub mode: SolveMode,
    pub team_mix: Option<RegretNet>,
    pub team_joint: Option<JointNet>,
    pub team_strategy: Option<StrategyNet>,
    pub team_strategy_joint: Option<JointNet>,
    pub adversary_regret: AdversaryRegretNet,
    pub adversary_strategy: StrategyNet,
}

impl NeuralNets {
    /// Fresh networks per the mode's initialization discipline: plain nets
    /// start at exact zero output; the mixing net uses the strictly positive
    /// softplus head (constant output at init, hence uniform strategies),
    /// because an exactly zero product has identically zero gradients.
    pub fn initialize<G: Game>(game: &G, mode: SolveMode, net: &NetConfig, seed: u64) -> Self {
        let enc = game.encoding_len();
        let agents = game.num_agents();
        let mk = |input: usize, head: OutputHead, salt: u64| {
            Network::new(NetSpec::new(input, net.hidden.clone(), head, seed ^ salt))
        };
        NeuralNets {
            mode,
            team_mix: match mode {
                SolveMode::Mix => Some(RegretNet::new(mk(enc, OutputHead::Softplus, 0x7e51))),
                _ => None,
            },
            team_joint: match mode {
                SolveMode::Joint => Some(JointNet::new(
                    mk(agents * enc, OutputHead::ZeroedSoftplus, 0x90a1),
                    agents,
                )),
                _ => None,
            },
            team_strategy: match mode {
                SolveMode::Mix => Some(StrategyNet::new(mk(
                    enc,
                    OutputHead::ZeroedSoftplus,
                    0x51a7,
                ))),
                _ => None,
            },
            team_strategy_joint: match mode {
                SolveMode::Joint => Some(JointNet::new(
                    mk(agents * enc, OutputHead::ZeroedSoftplus, 0x3b2c),
                    agents,
                )),
                _ => None,
            },
            adversary_regret: AdversaryRegretNet::new(mk(enc, OutputHead::ZeroedSoftplus, 0xadf0)),
            adversary_strategy: StrategyNet::new(mk(enc, OutputHead::ZeroedSoftplus, 0x10b3)),
        }
    }

    /// Current-play policy: regret-matching+ over the regret networks.
    pub fn current_policy<'a, G: Game>(&'a self, game: &'a G) -> NeuralPolicy<'a, G> {
        NeuralPolicy {
            game,
            nets: self,
            average: false,
        }
    }

    /// Average-play policy: normalized strategy-network scores.
    pub fn average_policy<'a, G: Game>(&'a self, game: &'a G) -> NeuralPolicy<'a, G> {
        NeuralPolicy {
            game,
            nets: self,
            average: true,
        }
    }
}

/// Behavior strategies read from the networks. With `average` set the
/// strategy networks are used, otherwise regret matching over the regret
/// networks.
pub struct NeuralPolicy<'a, G: Game> {
    game: &'a G,
    nets: &'a NeuralNets,
    average: bool,
}

impl<G: Game> Policy for NeuralPolicy<'_, G> {
    fn adversary_strategy(&self, key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        if self.average {
            self.nets
                .adversary_strategy
                .distribution(self.game, key, 0, num_actions)
        } else {
            self.nets
                .adversary_regret
                .strategy(self.game, key, num_actions)
        }
    }

    fn team_strategy(&self, key: &InfoSetKey, counts: &[usize]) -> TeamStrategy {
        match (self.nets.mode, self.average) {
            (SolveMode::Mix, false) => self
                .nets
                .team_mix
                .as_ref()
                .unwrap()
                .team_strategy(self.game, key, counts),
            (SolveMode::Mix, true) => self
                .nets
                .team_strategy
                .as_ref()
                .unwrap()
                .team_strategy(self.game, key, counts),
            (SolveMode::Joint, false) => self
                .nets
                .team_joint
                .as_ref()
                .unwrap()
                .team_strategy(self.game, key, counts),
            (SolveMode::Joint, true) => self
                .nets
                .team_strategy_joint
                .as_ref()
                .unwrap()
                .team_strategy(self.game, key, counts),
            (SolveMode::Tabular, _) => panic!("tabular mode has no neural policy"),
        }
    }
}

/// Sink that forwards traversal records into the reservoir memories.
pub struct MemorySink<'a, R: Rng> {
    pub team_regrets: &'a mut SampleMemory<RegretRecord>,
    pub adversary_regrets: &'a mut SampleMemory<RegretRecord>,
    pub team_strategies: &'a mut SampleMemory<StrategyRecord>,
    pub adversary_strategies: &'a mut SampleMemory<StrategyRecord>,
    pub rng: &'a mut R,
}

impl<R: Rng> RegretSink for MemorySink<'_, R> {
    fn record_adversary_regrets(&mut self, key: &InfoSetKey, t: u64, regrets: &[f64]) {
        self.adversary_regrets.insert(
            RegretRecord {
                key: key.clone(),
                t,
                entries: RegretEntries::Flat(regrets.to_vec()),
            },
            self.rng,
        );
    }

    fn record_team_regrets(&mut self, key: &InfoSetKey, t: u64, entries: &[(JointAction, f64)]) {
        self.team_regrets.insert(
            RegretRecord {
                key: key.clone(),
                t,
                entries: RegretEntries::Joint(entries.to_vec()),
            },
            self.rng,
        );
    }

    fn record_adversary_strategy(&mut self, key: &InfoSetKey, t: u64, probs: &[f64]) {
        self.adversary_strategies.insert(
            StrategyRecord {
                key: key.clone(),
                t,
                strategy: RecordedStrategy::Flat(probs.to_vec()),
            },
            self.rng,
        );
    }

    fn record_team_strategy(
        &mut self,
        key: &InfoSetKey,
        t: u64,
        strategy: &TeamStrategy,
        counts: &[usize],
    ) {
        let strategy = match strategy {
            TeamStrategy::PerAgent(per) => RecordedStrategy::TeamPerAgent(per.clone()),
            TeamStrategy::Joint(probs) => RecordedStrategy::TeamJoint {
                probs: probs.clone(),
                counts: counts.to_vec(),
            },
        };
        self.team_strategies.insert(
            StrategyRecord {
                key: key.clone(),
                t,
                strategy,
            },
            self.rng,
        );
    }
}

/// One probe-sampling traversal updating the team, starting from the root.
/// Exposed for instrumentation; [`solve`] drives this in bulk.
pub fn team_traverse_step<G: Game, R: Rng>(
    game: &G,
    policy: &dyn Policy,
    sink: &mut dyn RegretSink,
    t: u64,
    rng: &mut R,
    config: &ProbeConfig,
) -> (f64, TraversalStats) {
    let mut stats = TraversalStats::default();
    let value = probe_traverse(
        &game.initial_state(),
        PlayerId::Team,
        policy,
        sink,
        t,
        rng,
        config,
        &mut stats,
    );
    (value, stats)
}

/// One probe-sampling traversal updating the adversary.
pub fn adversary_traverse_step<G: Game, R: Rng>(
    game: &G,
    policy: &dyn Policy,
    sink: &mut dyn RegretSink,
    t: u64,
    rng: &mut R,
    config: &ProbeConfig,
) -> (f64, TraversalStats) {
    let mut stats = TraversalStats::default();
    let value = probe_traverse(
        &game.initial_state(),
        PlayerId::Adversary,
        policy,
        sink,
        t,
        rng,
        config,
        &mut stats,
    );
    (value, stats)
}

/// Final strategies of a solve.
pub enum SolveArtifacts {
    Tabular(CfrTables),
    Neural(NeuralNets),
}

impl SolveArtifacts {
    pub fn neural(&self) -> Option<&NeuralNets> {
        match self {
            SolveArtifacts::Neural(nets) => Some(nets),
            SolveArtifacts::Tabular(_) => None,
        }
    }

    pub fn tabular(&self) -> Option<&CfrTables> {
        match self {
            SolveArtifacts::Tabular(tables) => Some(tables),
            SolveArtifacts::Neural(_) => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Runs the configured number of iterations and returns the metric report
/// plus the final strategy artifacts.
pub fn solve<G: Game>(game: &G, config: &SolverConfig) -> Result<(SolveReport, SolveArtifacts), SolveError> {
    match config.mode {
        SolveMode::Tabular => Ok(solve_tabular(game, config)),
        SolveMode::Mix | SolveMode::Joint => solve_neural(game, config),
    }
}

/// Whether exact exploitability is affordable for this game.
fn exact_eval_possible<G: Game>(game: &G, cap: u64) -> bool {
    estimate_histories(game, cap).is_ok()
}

fn record_eval<G: Game>(
    game: &G,
    config: &SolverConfig,
    report: &mut SolveReport,
    t: u64,
    seconds: f64,
    exact: bool,
    team: &dyn Policy,
    adversary: &dyn Policy,
    eval_rng: &mut ChaCha8Rng,
) {
    if exact {
        struct Both<'a> {
            team: &'a dyn Policy,
            adversary: &'a dyn Policy,
        }
        impl Policy for Both<'_> {
            fn adversary_strategy(&self, key: &InfoSetKey, n: usize) -> Vec<f64> {
                self.adversary.adversary_strategy(key, n)
            }
            fn team_strategy(&self, key: &InfoSetKey, counts: &[usize]) -> TeamStrategy {
                self.team.team_strategy(key, counts)
            }
        }
        let profile = Both { team, adversary };
        if let Ok(e) = exploitability(game, &profile, config.size_cap) {
            report.push(t, seconds, METRIC_EXPLOITABILITY, e);
        }
    } else {
        let result = match_eval(game, team, &UniformPolicy, config.eval_episodes, eval_rng);
        report.push(t, seconds, METRIC_MATCH_MEAN, result.mean);
        report.push(t, seconds, METRIC_MATCH_SE, result.standard_error);
    }
}

fn solve_tabular<G: Game>(game: &G, config: &SolverConfig) -> (SolveReport, SolveArtifacts) {
    let mut tables = CfrTables::new(TeamMode::Joint, game.num_agents());
    let mut report = SolveReport::new();
    let start = Instant::now();
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xe7a1);
    let exact = exact_eval_possible(game, config.size_cap);
    for t in 1..=config.iterations {
        cfr_iteration(game, &mut tables, t);
        let seconds = start.elapsed().as_secs_f64();
        if t % config.eval_every == 0 || t == config.iterations {
            let avg = AveragePolicy(&tables);
            record_eval(
                game, config, &mut report, t, seconds, exact, &avg, &avg, &mut eval_rng,
            );
        }
        report.iterations_completed = t;
        if let Some(budget) = config.time_budget_secs {
            if start.elapsed().as_secs_f64() > budget {
                report.budget_exceeded = true;
                break;
            }
        }
    }
    (report, SolveArtifacts::Tabular(tables))
}

/// Runs the K traversals of one iteration for both players, in parallel
/// when `workers > 1`. Records merge in traversal order, so the memory
/// contents do not depend on the worker count.
fn run_traversals<G: Game>(
    game: &G,
    nets: &NeuralNets,
    config: &SolverConfig,
    t: u64,
) -> Vec<RecordingSink> {
    let probe_config = ProbeConfig {
        probe_count: config.probe_count,
        max_candidates: Some(config.probe_threshold),
    };
    let run_one = |k: usize| -> RecordingSink {
        let mut sink = RecordingSink::default();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(t.wrapping_mul(config.traversals as u64).wrapping_add(k as u64));
        let policy = nets.current_policy(game);
        let mut stats = TraversalStats::default();
        probe_traverse(
            &game.initial_state(),
            PlayerId::Adversary,
            &policy,
            &mut sink,
            t,
            &mut rng,
            &probe_config,
            &mut stats,
        );
        probe_traverse(
            &game.initial_state(),
            PlayerId::Team,
            &policy,
            &mut sink,
            t,
            &mut rng,
            &probe_config,
            &mut stats,
        );
        sink
    };
    if config.workers <= 1 {
        (0..config.traversals).map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers.min(config.traversals))
            .build()
            .expect("failed to build traversal pool");
        pool.install(|| {
            use rayon::prelude::*;
            (0..config.traversals).into_par_iter().map(run_one).collect()
        })
    }
}

fn solve_neural<G: Game>(
    game: &G,
    config: &SolverConfig,
) -> Result<(SolveReport, SolveArtifacts), SolveError> {
    let mut nets = NeuralNets::initialize(game, config.mode, &config.net, config.seed);
    let mut team_regret_memory = SampleMemory::new(config.memory_capacity);
    let mut adversary_regret_memory = SampleMemory::new(config.memory_capacity);
    let mut team_strategy_memory = SampleMemory::new(config.memory_capacity);
    let mut adversary_strategy_memory = SampleMemory::new(config.memory_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xe7a1);
    let mut report = SolveReport::new();
    let start = Instant::now();
    let exact = exact_eval_possible(game, config.size_cap);

    for t in 1..=config.iterations {
        // Sampling phase: networks are read-only, traversals are independent.
        let sinks = run_traversals(game, &nets, config, t);
        {
            let mut sink = MemorySink {
                team_regrets: &mut team_regret_memory,
                adversary_regrets: &mut adversary_regret_memory,
                team_strategies: &mut team_strategy_memory,
                adversary_strategies: &mut adversary_strategy_memory,
                rng: &mut rng,
            };
            for recorded in sinks {
                for (key, rt, regrets) in &recorded.adversary_regrets {
                    sink.record_adversary_regrets(key, *rt, regrets);
                }
                for (key, rt, entries) in &recorded.team_regrets {
                    sink.record_team_regrets(key, *rt, entries);
                }
                for (key, rt, probs) in &recorded.adversary_strategies {
                    sink.record_adversary_strategy(key, *rt, probs);
                }
                for (key, rt, strategy, counts) in &recorded.team_strategies {
                    sink.record_team_strategy(key, *rt, strategy, counts);
                }
            }
        }

        // Training phase: exclusive ownership of the networks.
        let mut regret_loss = f64::NAN;
        if !adversary_regret_memory.is_empty() {
            let trace = train_adversary_regret(
                game,
                &mut nets.adversary_regret,
                &adversary_regret_memory,
                &config.train,
                &mut rng,
            )?;
            regret_loss = *trace.last().unwrap();
        }
        if !team_regret_memory.is_empty() {
            let trace = match config.mode {
                SolveMode::Mix => train_team_regret(
                    game,
                    nets.team_mix.as_mut().unwrap(),
                    &team_regret_memory,
                    &config.train,
                    &mut rng,
                )?,
                SolveMode::Joint => train_joint_regret(
                    game,
                    nets.team_joint.as_mut().unwrap(),
                    &team_regret_memory,
                    &config.train,
                    &mut rng,
                )?,
                SolveMode::Tabular => unreachable!(),
            };
            regret_loss = *trace.last().unwrap();
        }
        let mut strategy_loss = f64::NAN;
        if !adversary_strategy_memory.is_empty() {
            let trace = train_strategy(
                game,
                &mut nets.adversary_strategy,
                &adversary_strategy_memory,
                &config.train,
                &mut rng,
            )?;
            strategy_loss = *trace.last().unwrap();
        }
        if !team_strategy_memory.is_empty() {
            let trace = match config.mode {
                SolveMode::Mix => train_strategy(
                    game,
                    nets.team_strategy.as_mut().unwrap(),
                    &team_strategy_memory,
                    &config.train,
                    &mut rng,
                )?,
                SolveMode::Joint => train_joint_strategy(
                    game,
                    nets.team_strategy_joint.as_mut().unwrap(),
                    &team_strategy_memory,
                    &config.train,
                    &mut rng,
                )?,
                SolveMode::Tabular => unreachable!(),
            };
            strategy_loss = *trace.last().unwrap();
        }

        let seconds = start.elapsed().as_secs_f64();
        if regret_loss.is_finite() {
            report.push(t, seconds, METRIC_LOSS_REGRET, regret_loss);
        }
        if strategy_loss.is_finite() {
            report.push(t, seconds, METRIC_LOSS_STRATEGY, strategy_loss);
        }
        if t % config.eval_every == 0 || t == config.iterations {
            let avg = nets.average_policy(game);
            record_eval(
                game, config, &mut report, t, seconds, exact, &avg, &avg, &mut eval_rng,
            );
        }
        report.iterations_completed = t;
        if let Some(budget) = config.time_budget_secs {
            if start.elapsed().as_secs_f64() > budget {
                report.budget_exceeded = true;
                break;
            }
        }
    }
    Ok((report, SolveArtifacts::Neural(nets)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameState;
    use crate::games::{TinyMatrix, TinyMatrixSpec};

    #[test]
    fn tabular_mode_delegates_to_cfr_iteration_exactly() {
        let game = TinyMatrix::new(TinyMatrixSpec::matching_pennies()).unwrap();
        let config = SolverConfig {
            mode: SolveMode::Tabular,
            iterations: 200,
            eval_every: 50,
            ..SolverConfig::default()
        };
        let (report, artifacts) = solve(&game, &config).unwrap();
        let solved = artifacts.tabular().unwrap();

        let mut manual = CfrTables::new(TeamMode::Joint, 1);
        for t in 1..=200 {
            cfr_iteration(&game, &mut manual, t);
        }
        let key = game.initial_state().infoset_key();
        let a = solved.team_avg.average(&key, 2);
        let b = manual.team_avg.average(&key, 2);
        assert_eq!(a, b);
        assert!(report.last_value(METRIC_EXPLOITABILITY).unwrap() < 0.05);
    }
}
