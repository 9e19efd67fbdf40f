//! Exact baselines and oracles: full-traversal CFR over tabular regrets,
//! probe-sampling Monte Carlo traversal, exact best response and
//! exploitability. Exact routines refuse games above a configured history
//! cap; the sampling routines work on games of any size.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::game::{Game, GameState, InfoSetKey, JointAction, Move, PlayerId};
use crate::regret::{AverageStrategyAccumulator, RegretTable, StrategyTable};

/// Default history cap for the exact routines.
pub const DEFAULT_SIZE_CAP: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("game too large for exact traversal: {estimate} histories exceed the cap of {cap}")]
    TooLarge { estimate: u64, cap: u64 },
}

/// How the team side is represented in tabular CFR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeamMode {
    /// One player over enumerated joint actions (the exact baseline).
    Joint,
    /// Per-agent regret tables; the team plays the product of per-agent
    /// regret-matching distributions and each agent accumulates regrets
    /// against its own marginal action values.
    PerAgent,
}

/// A behavior-strategy provider for both sides, consumed by traversals,
/// best response and match play.
pub trait Policy: Sync {
    fn adversary_strategy(&self, key: &InfoSetKey, num_actions: usize) -> Vec<f64>;
    fn team_strategy(&self, key: &InfoSetKey, counts: &[usize]) -> TeamStrategy;
}

/// A team strategy at one infoset: factored per-agent distributions or a
/// dense distribution over the row-major enumerated joint space.
#[derive(Debug, Clone)]
pub enum TeamStrategy {
    PerAgent(Vec<Vec<f64>>),
    Joint(Vec<f64>),
}

impl TeamStrategy {
    /// Probability of the joint action with the given per-agent ids.
    pub fn prob(&self, ids: &[usize], counts: &[usize]) -> f64 {
        match self {
            TeamStrategy::PerAgent(per) => ids
                .iter()
                .enumerate()
                .map(|(agent, &a)| per[agent][a])
                .product(),
            TeamStrategy::Joint(probs) => {
                probs[JointAction::from_ids(ids).flat_index(counts)]
            }
        }
    }

    /// Samples per-agent action ids.
    pub fn sample<R: Rng>(&self, counts: &[usize], rng: &mut R) -> Vec<usize> {
        match self {
            TeamStrategy::PerAgent(per) => {
                per.iter().map(|probs| sample_index(probs, rng)).collect()
            }
            TeamStrategy::Joint(probs) => {
                let flat = sample_index(probs, rng);
                JointAction::from_flat_index(flat, counts).ids()
            }
        }
    }

    /// Dense distribution over the row-major joint space.
    pub fn to_joint_vec(&self, counts: &[usize]) -> Vec<f64> {
        match self {
            TeamStrategy::Joint(probs) => probs.clone(),
            TeamStrategy::PerAgent(_) => {
                let cells: usize = counts.iter().product();
                (0..cells)
                    .map(|flat| {
                        self.prob(&JointAction::from_flat_index(flat, counts).ids(), counts)
                    })
                    .collect()
            }
        }
    }
}

/// Samples an index from a non-negative weight vector. Falls back to the
/// last positive entry on rounding shortfall and to uniform on a zero vector.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return rng.gen_range(0..probs.len());
    }
    let mut target = rng.gen::<f64>() * total;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            if target < p {
                return i;
            }
            target -= p;
        }
    }
    last_positive
}

/// All tabular CFR state for one game.
#[derive(Debug, Clone)]
pub struct CfrTables {
    pub team_mode: TeamMode,
    pub adversary_regrets: RegretTable,
    pub adversary_avg: AverageStrategyAccumulator,
    /// Joint-mode team tables (regrets over the enumerated joint space).
    pub team_regrets: RegretTable,
    pub team_avg: AverageStrategyAccumulator,
    /// Per-agent team tables (MIX-tabular mode), indexed by agent.
    pub agent_regrets: Vec<RegretTable>,
    pub agent_avg: Vec<AverageStrategyAccumulator>,
}

impl CfrTables {
    pub fn new(team_mode: TeamMode, num_agents: usize) -> Self {
        CfrTables {
            team_mode,
            adversary_regrets: RegretTable::new(),
            adversary_avg: AverageStrategyAccumulator::new(),
            team_regrets: RegretTable::new(),
            team_avg: AverageStrategyAccumulator::new(),
            agent_regrets: vec![RegretTable::new(); num_agents],
            agent_avg: vec![AverageStrategyAccumulator::new(); num_agents],
        }
    }

    fn team_current(&self, key: &InfoSetKey, counts: &[usize]) -> TeamStrategy {
        match self.team_mode {
            TeamMode::Joint => {
                let cells: usize = counts.iter().product();
                TeamStrategy::Joint(self.team_regrets.strategy(key, cells))
            }
            TeamMode::PerAgent => TeamStrategy::PerAgent(
                counts
                    .iter()
                    .enumerate()
                    .map(|(agent, &n)| self.agent_regrets[agent].strategy(key, n))
                    .collect(),
            ),
        }
    }

    fn team_average(&self, key: &InfoSetKey, counts: &[usize]) -> TeamStrategy {
        match self.team_mode {
            TeamMode::Joint => {
                let cells: usize = counts.iter().product();
                TeamStrategy::Joint(self.team_avg.average(key, cells))
            }
            TeamMode::PerAgent => TeamStrategy::PerAgent(
                counts
                    .iter()
                    .enumerate()
                    .map(|(agent, &n)| self.agent_avg[agent].average(key, n))
                    .collect(),
            ),
        }
    }
}

/// Current (regret-matching) strategies of a table set.
pub struct CurrentPolicy<'a>(pub &'a CfrTables);

impl Policy for CurrentPolicy<'_> {
    fn adversary_strategy(&self, key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        self.0.adversary_regrets.strategy(key, num_actions)
    }

    fn team_strategy(&self, key: &InfoSetKey, counts: &[usize]) -> TeamStrategy {
        self.0.team_current(key, counts)
    }
}

/// Average strategies of a table set.
pub struct AveragePolicy<'a>(pub &'a CfrTables);

impl Policy for AveragePolicy<'_> {
    fn adversary_strategy(&self, key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        self.0.adversary_avg.average(key, num_actions)
    }

    fn team_strategy(&self, key: &InfoSetKey, counts: &[usize]) -> TeamStrategy {
        self.0.team_average(key, counts)
    }
}

/// Uniform play on both sides.
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn adversary_strategy(&self, _key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        vec![1.0 / num_actions as f64; num_actions]
    }

    fn team_strategy(&self, _key: &InfoSetKey, counts: &[usize]) -> TeamStrategy {
        TeamStrategy::PerAgent(
            counts.iter().map(|&n| vec![1.0 / n as f64; n]).collect(),
        )
    }
}

/// Fixed behavior strategies from explicit tables (joint team form).
pub struct FixedPolicy {
    pub adversary: StrategyTable,
    pub team_joint: StrategyTable,
}

impl Policy for FixedPolicy {
    fn adversary_strategy(&self, key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        self.adversary.get(key, num_actions)
    }

    fn team_strategy(&self, key: &InfoSetKey, counts: &[usize]) -> TeamStrategy {
        let cells: usize = counts.iter().product();
        TeamStrategy::Joint(self.team_joint.get(key, cells))
    }
}

/// Counts histories by exhaustive walk, aborting once `cap` is exceeded.
pub fn estimate_histories<G: Game>(game: &G, cap: u64) -> Result<u64, TabularError> {
    fn walk<S: GameState>(state: &S, count: &mut u64, cap: u64) -> bool {
        *count += 1;
        if *count > cap {
            return false;
        }
        if state.is_terminal() {
            return true;
        }
        for mv in state.legal_actions().enumerate_joint() {
            if !walk(&state.apply(&mv), count, cap) {
                return false;
            }
        }
        true
    }
    let mut count = 0;
    if walk(&game.initial_state(), &mut count, cap) {
        Ok(count)
    } else {
        Err(TabularError::TooLarge {
            estimate: count,
            cap,
        })
    }
}

/// One full alternating-update CFR sweep: an exact traversal updating the
/// adversary, then one updating the team. Counterfactual regrets use
/// regret-matching+ accumulation; averages are reach-weighted with uniform
/// iteration weights.
pub fn cfr_iteration<G: Game>(game: &G, tables: &mut CfrTables, _t: u64) {
    for updater in [PlayerId::Adversary, PlayerId::Team] {
        let root = game.initial_state();
        cfr_walk(&root, updater, tables, 1.0, 1.0);
    }
    tables.adversary_avg.bump_iteration();
    tables.team_avg.bump_iteration();
    for acc in &mut tables.agent_avg {
        acc.bump_iteration();
    }
}

/// Returns the team-perspective expected value of `state` under the current
/// strategies while accumulating the updater's regrets and average strategy.
fn cfr_walk<S: GameState>(
    state: &S,
    updater: PlayerId,
    tables: &mut CfrTables,
    reach_updater: f64,
    reach_others: f64,
) -> f64 {
    if state.is_terminal() {
        return state.team_utility();
    }
    let player = state.player();
    if player == PlayerId::Chance {
        let mut value = 0.0;
        for (outcome, prob) in state.chance_outcomes() {
            let child = state.apply(&Move::Single(outcome));
            value += prob * cfr_walk(&child, updater, tables, reach_updater, reach_others * prob);
        }
        return value;
    }

    let key = state.infoset_key();
    let legal = state.legal_actions();
    let moves = legal.enumerate_joint();
    let counts = legal.per_agent_counts();

    // Current strategy over the enumerated move list.
    let (probs, team_strategy) = match player {
        PlayerId::Adversary => (
            tables.adversary_regrets.strategy(&key, moves.len()),
            None,
        ),
        PlayerId::Team => {
            let strategy = tables.team_current(&key, &counts);
            (strategy.to_joint_vec(&counts), Some(strategy))
        }
        PlayerId::Chance => unreachable!(),
    };

    let mut values = Vec::with_capacity(moves.len());
    let mut node_value = 0.0;
    for (mv, &p) in moves.iter().zip(&probs) {
        let child = state.apply(mv);
        let (r_me, r_others) = if player == updater {
            (reach_updater * p, reach_others)
        } else {
            (reach_updater, reach_others * p)
        };
        let v = cfr_walk(&child, updater, tables, r_me, r_others);
        values.push(v);
        node_value += p * v;
    }

    if player == updater {
        // Updater-perspective sign: team values are stored as-is.
        let sign = if player == PlayerId::Team { 1.0 } else { -1.0 };
        match (player, team_strategy) {
            (PlayerId::Adversary, _) => {
                let regrets: Vec<f64> = values
                    .iter()
                    .map(|&v| sign * (v - node_value) * reach_others)
                    .collect();
                tables.adversary_regrets.accumulate_plus(&key, &regrets);
                tables
                    .adversary_avg
                    .accumulate(&key, &probs, reach_updater);
            }
            (PlayerId::Team, Some(TeamStrategy::Joint(_))) => {
                let regrets: Vec<f64> = values
                    .iter()
                    .map(|&v| (v - node_value) * reach_others)
                    .collect();
                tables.team_regrets.accumulate_plus(&key, &regrets);
                tables.team_avg.accumulate(&key, &probs, reach_updater);
            }
            (PlayerId::Team, Some(TeamStrategy::PerAgent(per))) => {
                // Marginal action values per agent under the other agents'
                // current strategies.
                for agent in 0..counts.len() {
                    let mut marginal = vec![0.0f64; counts[agent]];
                    for (flat, &v) in values.iter().enumerate() {
                        let ids = JointAction::from_flat_index(flat, &counts).ids();
                        let mut other_prob = 1.0;
                        for (j, &a) in ids.iter().enumerate() {
                            if j != agent {
                                other_prob *= per[j][a];
                            }
                        }
                        marginal[ids[agent]] += other_prob * v;
                    }
                    let regrets: Vec<f64> = marginal
                        .iter()
                        .map(|&v| (v - node_value) * reach_others)
                        .collect();
                    tables.agent_regrets[agent].accumulate_plus(&key, &regrets);
                    tables.agent_avg[agent].accumulate(&key, &per[agent], reach_updater);
                }
            }
            _ => unreachable!(),
        }
    }
    node_value
}

/// Exact instantaneous counterfactual regrets of every infoset under a fixed
/// profile: `r(I, a) = sum_h pi_{-P(I)}(h) (u_{P(I)}(h.a) - u_{P(I)}(h))`.
/// Team regrets are over the enumerated joint space. This is the
/// full-enumeration oracle the sampled traversal is checked against.
pub fn exact_instantaneous_regrets<G: Game>(
    game: &G,
    policy: &dyn Policy,
) -> HashMap<InfoSetKey, Vec<f64>> {
    fn expected_value<S: GameState>(state: &S, policy: &dyn Policy) -> f64 {
        if state.is_terminal() {
            return state.team_utility();
        }
        if state.player() == PlayerId::Chance {
            return state
                .chance_outcomes()
                .into_iter()
                .map(|(o, p)| p * expected_value(&state.apply(&Move::Single(o)), policy))
                .sum();
        }
        let key = state.infoset_key();
        let legal = state.legal_actions();
        let moves = legal.enumerate_joint();
        let probs = match state.player() {
            PlayerId::Adversary => policy.adversary_strategy(&key, moves.len()),
            PlayerId::Team => policy
                .team_strategy(&key, &legal.per_agent_counts())
                .to_joint_vec(&legal.per_agent_counts()),
            PlayerId::Chance => unreachable!(),
        };
        moves
            .iter()
            .zip(&probs)
            .map(|(mv, &p)| p * expected_value(&state.apply(mv), policy))
            .sum()
    }

    fn walk<S: GameState>(
        state: &S,
        policy: &dyn Policy,
        reach_wo_adv: f64,
        reach_wo_team: f64,
        out: &mut HashMap<InfoSetKey, Vec<f64>>,
    ) {
        if state.is_terminal() {
            return;
        }
        if state.player() == PlayerId::Chance {
            for (o, p) in state.chance_outcomes() {
                walk(
                    &state.apply(&Move::Single(o)),
                    policy,
                    reach_wo_adv * p,
                    reach_wo_team * p,
                    out,
                );
            }
            return;
        }
        let key = state.infoset_key();
        let legal = state.legal_actions();
        let moves = legal.enumerate_joint();
        let counts = legal.per_agent_counts();
        let (probs, sign, excluded_reach) = match state.player() {
            PlayerId::Adversary => (
                policy.adversary_strategy(&key, moves.len()),
                -1.0,
                reach_wo_adv,
            ),
            PlayerId::Team => (
                policy.team_strategy(&key, &counts).to_joint_vec(&counts),
                1.0,
                reach_wo_team,
            ),
            PlayerId::Chance => unreachable!(),
        };
        let values: Vec<f64> = moves
            .iter()
            .map(|mv| expected_value(&state.apply(mv), policy))
            .collect();
        let node_value: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        let entry = out.entry(key).or_insert_with(|| vec![0.0; moves.len()]);
        for (a, &v) in values.iter().enumerate() {
            entry[a] += excluded_reach * sign * (v - node_value);
        }
        for (mv, &p) in moves.iter().zip(&probs) {
            let (ra, rt) = match state.player() {
                PlayerId::Adversary => (reach_wo_adv, reach_wo_team * p),
                PlayerId::Team => (reach_wo_adv * p, reach_wo_team),
                PlayerId::Chance => unreachable!(),
            };
            walk(&state.apply(mv), policy, ra, rt, out);
        }
    }

    let mut out = HashMap::new();
    walk(&game.initial_state(), policy, 1.0, 1.0, &mut out);
    out
}

/// Counters exposed by the sampled traversal for instrumentation tests.
#[derive(Debug, Default, Clone, Copy)]
pub struct TraversalStats {
    /// PROBE rollouts started.
    pub probe_calls: u64,
    /// Candidate actions evaluated at updating-player nodes.
    pub candidates_evaluated: u64,
    /// Decision and chance nodes visited by the traversal walk.
    pub nodes_visited: u64,
}

/// Receives the samples produced by [`probe_traverse`]: the updating
/// player's instantaneous regrets and the opponent's visited strategies.
pub trait RegretSink {
    fn record_adversary_regrets(&mut self, key: &InfoSetKey, t: u64, regrets: &[f64]);
    /// Team regrets for the evaluated candidate joint actions.
    fn record_team_regrets(&mut self, key: &InfoSetKey, t: u64, entries: &[(JointAction, f64)]);
    fn record_adversary_strategy(&mut self, key: &InfoSetKey, t: u64, probs: &[f64]);
    fn record_team_strategy(
        &mut self,
        key: &InfoSetKey,
        t: u64,
        strategy: &TeamStrategy,
        counts: &[usize],
    );
}

/// Sink that accumulates regrets straight into tabular tables (tabular
/// MCCFR) and ignores strategy records beyond average accumulation.
pub struct TableSink<'a> {
    pub tables: &'a mut CfrTables,
}

impl RegretSink for TableSink<'_> {
    fn record_adversary_regrets(&mut self, key: &InfoSetKey, _t: u64, regrets: &[f64]) {
        self.tables.adversary_regrets.accumulate_plus(key, regrets);
    }

    fn record_team_regrets(&mut self, key: &InfoSetKey, _t: u64, entries: &[(JointAction, f64)]) {
        match self.tables.team_mode {
            TeamMode::Joint => {
                // Tabular probe traversal enumerates the full joint space in
                // row-major order, so the entries form the dense vector.
                let dense: Vec<f64> = entries.iter().map(|(_, r)| *r).collect();
                self.tables.team_regrets.accumulate_plus(key, &dense);
            }
            TeamMode::PerAgent => {
                panic!("tabular probe sink requires joint team mode");
            }
        }
    }

    fn record_adversary_strategy(&mut self, key: &InfoSetKey, _t: u64, probs: &[f64]) {
        self.tables.adversary_avg.accumulate(key, probs, 1.0);
    }

    fn record_team_strategy(
        &mut self,
        key: &InfoSetKey,
        _t: u64,
        strategy: &TeamStrategy,
        _counts: &[usize],
    ) {
        match strategy {
            TeamStrategy::Joint(probs) => {
                self.tables.team_avg.accumulate(key, probs, 1.0);
            }
            TeamStrategy::PerAgent(per) => {
                for (agent, probs) in per.iter().enumerate() {
                    self.tables.agent_avg[agent].accumulate(key, probs, 1.0);
                }
            }
        }
    }
}

/// Sink that just collects raw records (tests and unbiasedness checks).
#[derive(Debug, Default)]
pub struct RecordingSink {
    pub adversary_regrets: Vec<(InfoSetKey, u64, Vec<f64>)>,
    pub team_regrets: Vec<(InfoSetKey, u64, Vec<(JointAction, f64)>)>,
    pub adversary_strategies: Vec<(InfoSetKey, u64, Vec<f64>)>,
    pub team_strategies: Vec<(InfoSetKey, u64, TeamStrategy, Vec<usize>)>,
}

impl RegretSink for RecordingSink {
    fn record_adversary_regrets(&mut self, key: &InfoSetKey, t: u64, regrets: &[f64]) {
        self.adversary_regrets.push((key.clone(), t, regrets.to_vec()));
    }

    fn record_team_regrets(&mut self, key: &InfoSetKey, t: u64, entries: &[(JointAction, f64)]) {
        self.team_regrets.push((key.clone(), t, entries.to_vec()));
    }

    fn record_adversary_strategy(&mut self, key: &InfoSetKey, t: u64, probs: &[f64]) {
        self.adversary_strategies.push((key.clone(), t, probs.to_vec()));
    }

    fn record_team_strategy(
        &mut self,
        key: &InfoSetKey,
        t: u64,
        strategy: &TeamStrategy,
        counts: &[usize],
    ) {
        self.team_strategies
            .push((key.clone(), t, strategy.clone(), counts.to_vec()));
    }
}

/// Sampling controls for [`probe_traverse`].
#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    /// Rollouts per non-sampled action (averaged). The probe-sampling
    /// algorithm uses a single rollout.
    pub probe_count: usize,
    /// Max candidate joint actions evaluated per team infoset visit. `None`
    /// enumerates the whole joint space.
    pub max_candidates: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            probe_count: 1,
            max_candidates: None,
        }
    }
}

/// Single on-policy rollout to a terminal; every player samples from its
/// current strategy. Returns the team-perspective terminal utility. This
/// estimates the counterfactual value of a non-sampled action in place of
/// zeroing it out.
pub fn probe<S: GameState, R: Rng>(
    state: &S,
    policy: &dyn Policy,
    rng: &mut R,
    stats: &mut TraversalStats,
) -> f64 {
    stats.probe_calls += 1;
    let mut current = state.clone();
    loop {
        if current.is_terminal() {
            return current.team_utility();
        }
        stats.nodes_visited += 1;
        let mv = match current.player() {
            PlayerId::Chance => {
                let outcomes = current.chance_outcomes();
                let probs: Vec<f64> = outcomes.iter().map(|&(_, p)| p).collect();
                Move::Single(outcomes[sample_index(&probs, rng)].0)
            }
            PlayerId::Adversary => {
                let key = current.infoset_key();
                let legal = current.legal_actions();
                let n = legal.joint_count() as usize;
                Move::Single(sample_index(&policy.adversary_strategy(&key, n), rng))
            }
            PlayerId::Team => {
                let key = current.infoset_key();
                let counts = current.legal_actions().per_agent_counts();
                let strategy = policy.team_strategy(&key, &counts);
                Move::joint(&strategy.sample(&counts, rng))
            }
        };
        current = current.apply(&mv);
    }
}

fn probe_estimate<S: GameState, R: Rng>(
    state: &S,
    policy: &dyn Policy,
    rng: &mut R,
    stats: &mut TraversalStats,
    count: usize,
) -> f64 {
    let total: f64 = (0..count).map(|_| probe(state, policy, rng, stats)).sum();
    total / count as f64
}

/// Probe-sampling traversal for updating player `p`.
///
/// At `p`'s nodes one uniformly sampled action is traversed recursively and
/// every other candidate is estimated by a probe rollout; the instantaneous
/// regrets of the candidates are recorded with iteration tag `t`. At
/// opponent nodes the current strategy is recorded and one action is sampled
/// from it; at chance nodes an outcome is sampled. Returns the sampled
/// estimate of the node value (team perspective).
pub fn probe_traverse<S: GameState, R: Rng>(
    state: &S,
    p: PlayerId,
    policy: &dyn Policy,
    sink: &mut dyn RegretSink,
    t: u64,
    rng: &mut R,
    config: &ProbeConfig,
    stats: &mut TraversalStats,
) -> f64 {
    if state.is_terminal() {
        return state.team_utility();
    }
    stats.nodes_visited += 1;
    let player = state.player();

    if player == PlayerId::Chance {
        let outcomes = state.chance_outcomes();
        let probs: Vec<f64> = outcomes.iter().map(|&(_, p)| p).collect();
        let outcome = outcomes[sample_index(&probs, rng)].0;
        let child = state.apply(&Move::Single(outcome));
        return probe_traverse(&child, p, policy, sink, t, rng, config, stats);
    }

    let key = state.infoset_key();
    let legal = state.legal_actions();

    if player != p {
        // Opponent node: record the strategy, sample from it.
        let mv = match player {
            PlayerId::Adversary => {
                let n = legal.joint_count() as usize;
                let probs = policy.adversary_strategy(&key, n);
                sink.record_adversary_strategy(&key, t, &probs);
                Move::Single(sample_index(&probs, rng))
            }
            PlayerId::Team => {
                let counts = legal.per_agent_counts();
                let strategy = policy.team_strategy(&key, &counts);
                sink.record_team_strategy(&key, t, &strategy, &counts);
                Move::joint(&strategy.sample(&counts, rng))
            }
            PlayerId::Chance => unreachable!(),
        };
        let child = state.apply(&mv);
        return probe_traverse(&child, p, policy, sink, t, rng, config, stats);
    }

    match player {
        PlayerId::Adversary => {
            let moves = legal.enumerate_joint();
            let probs = policy.adversary_strategy(&key, moves.len());
            let star = rng.gen_range(0..moves.len());
            let mut values = Vec::with_capacity(moves.len());
            for (a, mv) in moves.iter().enumerate() {
                stats.candidates_evaluated += 1;
                let child = state.apply(mv);
                let v = if a == star {
                    probe_traverse(&child, p, policy, sink, t, rng, config, stats)
                } else {
                    probe_estimate(&child, policy, rng, stats, config.probe_count)
                };
                values.push(v);
            }
            let node_value: f64 = values.iter().zip(&probs).map(|(v, q)| v * q).sum();
            // Adversary-perspective regrets.
            let regrets: Vec<f64> = values.iter().map(|&v| node_value - v).collect();
            sink.record_adversary_regrets(&key, t, &regrets);
            node_value
        }
        PlayerId::Team => {
            let counts = legal.per_agent_counts();
            let strategy = policy.team_strategy(&key, &counts);
            let joint_count = legal.joint_count();

            // a*: product-uniform sampling equals uniform over joint actions.
            let star_ids: Vec<usize> =
                counts.iter().map(|&n| rng.gen_range(0..n)).collect();

            // Candidate set S: everything when enumerable within the
            // threshold, else a* plus uniformly sampled distinct others.
            let full = match config.max_candidates {
                None => true,
                Some(m) => joint_count <= m as u128,
            };
            let candidates: Vec<Vec<usize>> = if full {
                assert!(
                    joint_count <= u32::MAX as u128,
                    "joint space too large to enumerate; set a candidate threshold"
                );
                (0..joint_count as usize)
                    .map(|flat| JointAction::from_flat_index(flat, &counts).ids())
                    .collect()
            } else {
                let m = config.max_candidates.unwrap();
                let mut set = std::collections::HashSet::new();
                let mut list = vec![star_ids.clone()];
                set.insert(star_ids.clone());
                while list.len() < m {
                    let ids: Vec<usize> =
                        counts.iter().map(|&n| rng.gen_range(0..n)).collect();
                    if set.insert(ids.clone()) {
                        list.push(ids);
                    }
                }
                list
            };

            let mut values = Vec::with_capacity(candidates.len());
            let mut weights = Vec::with_capacity(candidates.len());
            for ids in &candidates {
                stats.candidates_evaluated += 1;
                let child = state.apply(&Move::joint(ids));
                let v = if *ids == star_ids {
                    probe_traverse(&child, p, policy, sink, t, rng, config, stats)
                } else {
                    probe_estimate(&child, policy, rng, stats, config.probe_count)
                };
                values.push(v);
                weights.push(strategy.prob(ids, &counts));
            }
            // Node value against the strategy restricted to S, renormalized.
            let total: f64 = weights.iter().sum();
            let node_value: f64 = if total > 0.0 {
                values
                    .iter()
                    .zip(&weights)
                    .map(|(v, w)| v * w / total)
                    .sum()
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            };
            let entries: Vec<(JointAction, f64)> = candidates
                .iter()
                .zip(&values)
                .map(|(ids, &v)| (JointAction::from_ids(ids), v - node_value))
                .collect();
            sink.record_team_regrets(&key, t, &entries);
            node_value
        }
        PlayerId::Chance => unreachable!(),
    }
}

/// Exact best response against a fixed opponent profile.
pub struct BestResponse {
    /// Pure best-response distribution per responder infoset, over the
    /// row-major enumerated move list.
    pub strategy: StrategyTable,
    /// Best-response value from the responder's perspective.
    pub value: f64,
}

struct Arena {
    nodes: Vec<ArenaNode>,
}

enum ArenaNode {
    Terminal {
        team_utility: f64,
    },
    Chance {
        children: Vec<(usize, f64)>,
    },
    Decision {
        player: PlayerId,
        key: InfoSetKey,
        counts: Vec<usize>,
        children: Vec<usize>,
    },
}

fn build_arena<G: Game>(game: &G, cap: u64) -> Result<Arena, TabularError> {
    fn rec<S: GameState>(
        state: &S,
        nodes: &mut Vec<ArenaNode>,
        cap: u64,
    ) -> Result<usize, TabularError> {
        if nodes.len() as u64 >= cap {
            return Err(TabularError::TooLarge {
                estimate: nodes.len() as u64,
                cap,
            });
        }
        let id = nodes.len();
        if state.is_terminal() {
            nodes.push(ArenaNode::Terminal {
                team_utility: state.team_utility(),
            });
            return Ok(id);
        }
        if state.player() == PlayerId::Chance {
            nodes.push(ArenaNode::Chance { children: vec![] });
            let mut children = Vec::new();
            for (o, p) in state.chance_outcomes() {
                let child = rec(&state.apply(&Move::Single(o)), nodes, cap)?;
                children.push((child, p));
            }
            if let ArenaNode::Chance { children: c } = &mut nodes[id] {
                *c = children;
            }
            return Ok(id);
        }
        let legal = state.legal_actions();
        nodes.push(ArenaNode::Decision {
            player: state.player(),
            key: state.infoset_key(),
            counts: legal.per_agent_counts(),
            children: vec![],
        });
        let mut children = Vec::new();
        for mv in legal.enumerate_joint() {
            children.push(rec(&state.apply(&mv), nodes, cap)?);
        }
        if let ArenaNode::Decision { children: c, .. } = &mut nodes[id] {
            *c = children;
        }
        Ok(id)
    }
    let mut nodes = Vec::new();
    rec(&game.initial_state(), &mut nodes, cap)?;
    Ok(Arena { nodes })
}

/// Exact best-response value and pure strategy for `responder` against the
/// opponent side of `policy`, by backward induction over responder infosets.
/// For a team responder the maximization runs over the full joint space.
pub fn best_response<G: Game>(
    game: &G,
    policy: &dyn Policy,
    responder: PlayerId,
    cap: u64,
) -> Result<BestResponse, TabularError> {
    assert_ne!(responder, PlayerId::Chance);
    let arena = build_arena(game, cap)?;
    let n = arena.nodes.len();

    // Pass 1: opponent/chance reach per node (responder's reach excluded),
    // responder infoset membership and responder depth per node.
    let mut weight = vec![0.0f64; n];
    let mut depth = vec![0u32; n];
    weight[0] = 1.0;
    let mut infosets: HashMap<InfoSetKey, Vec<usize>> = HashMap::new();
    // Arena ids are preorder, so parents precede children.
    for id in 0..n {
        match &arena.nodes[id] {
            ArenaNode::Terminal { .. } => {}
            ArenaNode::Chance { children } => {
                for &(c, p) in children {
                    weight[c] += weight[id] * p;
                    depth[c] = depth[id];
                }
            }
            ArenaNode::Decision {
                player,
                key,
                counts,
                children,
            } => {
                if *player == responder {
                    infosets.entry(key.clone()).or_default().push(id);
                    for &c in children {
                        weight[c] += weight[id];
                        depth[c] = depth[id] + 1;
                    }
                } else {
                    let probs = opponent_probs(policy, *player, key, counts);
                    for (&c, &p) in children.iter().zip(&probs) {
                        weight[c] += weight[id] * p;
                        depth[c] = depth[id];
                    }
                }
            }
        }
    }

    // Pass 2: decide infosets from the deepest up; evaluate with memoization.
    let mut infoset_depth: Vec<(InfoSetKey, u32)> = infosets
        .iter()
        .map(|(k, members)| (k.clone(), depth[members[0]]))
        .collect();
    infoset_depth.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut decisions: HashMap<InfoSetKey, usize> = HashMap::new();
    let mut memo: Vec<Option<f64>> = vec![None; n];

    fn eval(
        arena: &Arena,
        id: usize,
        responder: PlayerId,
        policy: &dyn Policy,
        decisions: &HashMap<InfoSetKey, usize>,
        memo: &mut Vec<Option<f64>>,
    ) -> f64 {
        if let Some(v) = memo[id] {
            return v;
        }
        let v = match &arena.nodes[id] {
            ArenaNode::Terminal { team_utility } => {
                if responder == PlayerId::Team {
                    *team_utility
                } else {
                    -*team_utility
                }
            }
            ArenaNode::Chance { children } => children
                .iter()
                .map(|&(c, p)| p * eval(arena, c, responder, policy, decisions, memo))
                .sum(),
            ArenaNode::Decision {
                player,
                key,
                counts,
                children,
            } => {
                if *player == responder {
                    let a = *decisions
                        .get(key)
                        .expect("deeper responder infoset not yet decided");
                    eval(arena, children[a], responder, policy, decisions, memo)
                } else {
                    let probs = opponent_probs(policy, *player, key, counts);
                    children
                        .iter()
                        .zip(&probs)
                        .map(|(&c, &p)| {
                            p * eval(arena, c, responder, policy, decisions, memo)
                        })
                        .sum()
                }
            }
        };
        memo[id] = Some(v);
        v
    }

    for (key, _) in &infoset_depth {
        let members = &infosets[key];
        let num_moves = match &arena.nodes[members[0]] {
            ArenaNode::Decision { children, .. } => children.len(),
            _ => unreachable!(),
        };
        let mut q = vec![0.0f64; num_moves];
        for &h in members {
            if let ArenaNode::Decision { children, .. } = &arena.nodes[h] {
                for (a, &c) in children.iter().enumerate() {
                    q[a] += weight[h]
                        * eval(&arena, c, responder, policy, &decisions, &mut memo);
                }
            }
        }
        let best = q
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        decisions.insert(key.clone(), best);
    }

    let value = eval(&arena, 0, responder, policy, &decisions, &mut memo);
    let mut strategy = StrategyTable::new();
    for (key, members) in &infosets {
        let num_moves = match &arena.nodes[members[0]] {
            ArenaNode::Decision { children, .. } => children.len(),
            _ => unreachable!(),
        };
        let mut probs = vec![0.0; num_moves];
        probs[decisions[key]] = 1.0;
        strategy.insert(key.clone(), probs);
    }
    Ok(BestResponse { strategy, value })
}

fn opponent_probs(
    policy: &dyn Policy,
    player: PlayerId,
    key: &InfoSetKey,
    counts: &[usize],
) -> Vec<f64> {
    match player {
        PlayerId::Adversary => policy.adversary_strategy(key, counts[0]),
        PlayerId::Team => policy.team_strategy(key, counts).to_joint_vec(counts),
        PlayerId::Chance => unreachable!(),
    }
}

/// Average of both best-response gains: zero exactly at an equilibrium.
pub fn exploitability<G: Game>(
    game: &G,
    policy: &dyn Policy,
    cap: u64,
) -> Result<f64, TabularError> {
    let br_adv = best_response(game, policy, PlayerId::Adversary, cap)?;
    let br_team = best_response(game, policy, PlayerId::Team, cap)?;
    Ok((br_adv.value + br_team.value) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{Goofspiel, GoofspielSpec, PrizeOrder, TinyMatrix, TinyMatrixSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pennies() -> TinyMatrix {
        TinyMatrix::new(TinyMatrixSpec::matching_pennies()).unwrap()
    }

    #[test]
    fn first_iteration_strategies_are_uniform() {
        let game = pennies();
        let tables = CfrTables::new(TeamMode::Joint, 1);
        let root = game.initial_state();
        let key = root.infoset_key();
        let strategy = tables.team_current(&key, &[2]);
        assert_eq!(strategy.to_joint_vec(&[2]), vec![0.5, 0.5]);
    }

    #[test]
    fn matching_pennies_converges_to_low_exploitability() {
        let game = pennies();
        let mut tables = CfrTables::new(TeamMode::Joint, 1);
        for t in 1..=2000 {
            cfr_iteration(&game, &mut tables, t);
        }
        let e = exploitability(&game, &AveragePolicy(&tables), DEFAULT_SIZE_CAP).unwrap();
        assert!(e >= -1e-9, "exploitability must be non-negative, got {e}");
        assert!(e <= 0.02, "exploitability {e} too high");
    }

    #[test]
    fn per_agent_mode_matches_joint_on_single_agent_games() {
        // With one team agent the marginal update is the joint update.
        let game = pennies();
        let mut joint = CfrTables::new(TeamMode::Joint, 1);
        let mut split = CfrTables::new(TeamMode::PerAgent, 1);
        for t in 1..=50 {
            cfr_iteration(&game, &mut joint, t);
            cfr_iteration(&game, &mut split, t);
        }
        let key = game.initial_state().infoset_key();
        let a = joint.team_average(&key, &[2]).to_joint_vec(&[2]);
        let b = split.team_average(&key, &[2]).to_joint_vec(&[2]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn best_response_vs_uniform_in_pennies_is_zero() {
        let game = pennies();
        let br = best_response(&game, &UniformPolicy, PlayerId::Adversary, 1000).unwrap();
        assert!(br.value.abs() < 1e-12);
        let br = best_response(&game, &UniformPolicy, PlayerId::Team, 1000).unwrap();
        assert!(br.value.abs() < 1e-12);
    }

    #[test]
    fn adversary_best_response_matches_pure_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let payoff: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let game = TinyMatrix::new(
                TinyMatrixSpec::new(vec![2, 2], 3, payoff).unwrap(),
            )
            .unwrap();
            // Oracle: against the uniform team, the adversary's best response
            // value is the max over pure actions of its expected utility.
            let oracle = (0..3)
                .map(|b| {
                    let mut total = 0.0;
                    for a0 in 0..2 {
                        for a1 in 0..2 {
                            total += 0.25 * -game.payoff(&[a0, a1], b);
                        }
                    }
                    total
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let br = best_response(&game, &UniformPolicy, PlayerId::Adversary, 1000).unwrap();
            assert!((br.value - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn best_response_never_loses_to_the_game_value() {
        // In symmetric zero-sum games the value is 0; a best responder always
        // gets at least that against any profile.
        let game = pennies();
        let mut tables = CfrTables::new(TeamMode::Joint, 1);
        for t in 1..=37 {
            cfr_iteration(&game, &mut tables, t);
        }
        for policy in [&AveragePolicy(&tables) as &dyn Policy, &UniformPolicy] {
            let team = best_response(&game, policy, PlayerId::Team, 1000).unwrap();
            let adv = best_response(&game, policy, PlayerId::Adversary, 1000).unwrap();
            assert!(team.value >= -1e-9);
            assert!(adv.value >= -1e-9);
        }
    }

    #[test]
    fn symmetric_goofspiel_value_is_zero() {
        let game = Goofspiel::new(
            GoofspielSpec::new(3, 1, 3, PrizeOrder::FixedDescending).unwrap(),
        )
        .unwrap();
        let mut tables = CfrTables::new(TeamMode::Joint, 1);
        for t in 1..=2000 {
            cfr_iteration(&game, &mut tables, t);
        }
        let avg = AveragePolicy(&tables);
        let e = exploitability(&game, &avg, DEFAULT_SIZE_CAP).unwrap();
        assert!(e <= 0.02, "exploitability {e}");
        // Average strategy game value ~ 0 by symmetry.
        let br_team = best_response(&game, &avg, PlayerId::Team, DEFAULT_SIZE_CAP).unwrap();
        let br_adv = best_response(&game, &avg, PlayerId::Adversary, DEFAULT_SIZE_CAP).unwrap();
        assert!(br_team.value.abs() <= 0.03);
        assert!(br_adv.value.abs() <= 0.03);
    }

    #[test]
    fn size_estimation_refuses_large_games() {
        let game = Goofspiel::new(
            GoofspielSpec::new(6, 4, 6, PrizeOrder::ChanceShuffled).unwrap(),
        )
        .unwrap();
        match estimate_histories(&game, 10_000) {
            Err(TabularError::TooLarge { estimate, cap }) => {
                assert!(estimate > 10_000);
                assert_eq!(cap, 10_000);
            }
            other => panic!("expected TooLarge, got {other:?}"),
        }
        let tiny = pennies();
        assert_eq!(estimate_histories(&tiny, 1000).unwrap(), 1 + 2 + 4);
    }

    #[test]
    fn probe_traverse_terminal_returns_utility() {
        let game = pennies();
        let terminal = game
            .initial_state()
            .apply(&Move::joint(&[0]))
            .apply(&Move::Single(0));
        let mut sink = RecordingSink::default();
        let mut stats = TraversalStats::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = probe_traverse(
            &terminal,
            PlayerId::Team,
            &UniformPolicy,
            &mut sink,
            1,
            &mut rng,
            &ProbeConfig::default(),
            &mut stats,
        );
        assert_eq!(v, 1.0);
        assert!(sink.team_regrets.is_empty());
        assert_eq!(stats.probe_calls, 0);
    }

    #[test]
    fn single_action_node_records_zero_regret_without_probes() {
        let spec = TinyMatrixSpec::new(vec![1], 2, vec![0.5, -0.5]).unwrap();
        let game = TinyMatrix::new(spec).unwrap();
        let mut sink = RecordingSink::default();
        let mut stats = TraversalStats::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        probe_traverse(
            &game.initial_state(),
            PlayerId::Team,
            &UniformPolicy,
            &mut sink,
            1,
            &mut rng,
            &ProbeConfig::default(),
            &mut stats,
        );
        assert_eq!(stats.probe_calls, 0, "single action needs no probes");
        assert_eq!(sink.team_regrets.len(), 1);
        let entries = &sink.team_regrets[0].2;
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].1, 0.0);
    }

    #[test]
    fn probe_returns_a_terminal_utility() {
        let game = pennies();
        let mut stats = TraversalStats::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let v = probe(&game.initial_state(), &UniformPolicy, &mut rng, &mut stats);
            assert!(v == 1.0 || v == -1.0);
        }
        assert_eq!(stats.probe_calls, 20);
    }

    #[test]
    fn sampled_regrets_match_exact_oracle_in_expectation() {
        // Fixed non-uniform profile on a random tiny game; the mean recorded
        // instantaneous regret must approach the exact full-traversal regret.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let payoff: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let game =
            TinyMatrix::new(TinyMatrixSpec::new(vec![2], 4, payoff).unwrap()).unwrap();

        let mut team_table = StrategyTable::new();
        let mut adv_table = StrategyTable::new();
        let team_key = game.initial_state().infoset_key();
        let adv_key = game
            .initial_state()
            .apply(&Move::joint(&[0]))
            .infoset_key();
        team_table.insert(team_key.clone(), vec![0.7, 0.3]);
        adv_table.insert(adv_key.clone(), vec![0.4, 0.3, 0.2, 0.1]);
        let policy = FixedPolicy {
            adversary: adv_table,
            team_joint: team_table,
        };

        let exact = exact_instantaneous_regrets(&game, &policy);

        let traversals = 40_000;
        let mut sums: HashMap<InfoSetKey, Vec<f64>> = HashMap::new();
        let mut sq: HashMap<InfoSetKey, Vec<f64>> = HashMap::new();
        let mut counts: HashMap<InfoSetKey, u64> = HashMap::new();
        for p in [PlayerId::Team, PlayerId::Adversary] {
            for _ in 0..traversals {
                let mut sink = RecordingSink::default();
                let mut stats = TraversalStats::default();
                probe_traverse(
                    &game.initial_state(),
                    p,
                    &policy,
                    &mut sink,
                    1,
                    &mut rng,
                    &ProbeConfig::default(),
                    &mut stats,
                );
                for (key, _, regrets) in &sink.adversary_regrets {
                    let s = sums.entry(key.clone()).or_insert_with(|| vec![0.0; regrets.len()]);
                    let q = sq.entry(key.clone()).or_insert_with(|| vec![0.0; regrets.len()]);
                    for (i, &r) in regrets.iter().enumerate() {
                        s[i] += r;
                        q[i] += r * r;
                    }
                    *counts.entry(key.clone()).or_default() += 1;
                }
                for (key, _, entries) in &sink.team_regrets {
                    let s = sums.entry(key.clone()).or_insert_with(|| vec![0.0; entries.len()]);
                    let q = sq.entry(key.clone()).or_insert_with(|| vec![0.0; entries.len()]);
                    for (i, (_, r)) in entries.iter().enumerate() {
                        s[i] += r;
                        q[i] += r * r;
                    }
                    *counts.entry(key.clone()).or_default() += 1;
                }
            }
        }

        for (key, exact_regrets) in &exact {
            let n = counts[key] as f64;
            let s = &sums[key];
            let q = &sq[key];
            for (i, &e) in exact_regrets.iter().enumerate() {
                let mean = s[i] / n;
                let var = (q[i] / n - mean * mean).max(0.0);
                let se = (var / n).sqrt().max(1e-9);
                assert!(
                    (mean - e).abs() <= 3.0 * se + 1e-9,
                    "{key}: action {i} mean {mean} vs exact {e} (se {se})"
                );
            }
        }
    }

    #[test]
    fn tabular_probe_mccfr_converges_on_pennies() {
        let game = pennies();
        let mut tables = CfrTables::new(TeamMode::Joint, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let config = ProbeConfig::default();
        for t in 1..=4000u64 {
            for p in [PlayerId::Adversary, PlayerId::Team] {
                let policy_tables = tables.clone();
                let policy = CurrentPolicy(&policy_tables);
                let mut sink = TableSink {
                    tables: &mut tables,
                };
                let mut stats = TraversalStats::default();
                probe_traverse(
                    &game.initial_state(),
                    p,
                    &policy,
                    &mut sink,
                    t,
                    &mut rng,
                    &config,
                    &mut stats,
                );
            }
            tables.adversary_avg.bump_iteration();
            tables.team_avg.bump_iteration();
        }
        let e = exploitability(&game, &AveragePolicy(&tables), 1000).unwrap();
        assert!(e <= 0.08, "sampled CFR exploitability {e}");
    }
}
