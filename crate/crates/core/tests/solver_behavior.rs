//! Integration tests for the solve loop and its traversal steps: candidate
//! truncation, single-agent degeneracy, mode equivalence of node-visit
//! distributions, and product sampling.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use teamcfr::game::{Game, GameState, InfoSetKey, LegalActions, Move, PlayerId};
use teamcfr::games::{Goofspiel, GoofspielSpec, PrizeOrder, TinyMatrix, TinyMatrixSpec};
use teamcfr::report::METRIC_EXPLOITABILITY;
use teamcfr::solver::{
    adversary_traverse_step, solve, team_traverse_step, NetConfig, NeuralNets, SolveMode,
    SolverConfig,
};
use teamcfr::tabular::{Policy, ProbeConfig, RecordingSink, TeamStrategy};

/// Wraps a game and counts terminal utility queries per terminal identity,
/// which is exactly the set of leaves a traversal (or its probes) touches.
#[derive(Clone)]
struct CountingGame {
    inner: TinyMatrix,
    hits: Arc<Mutex<HashMap<String, u64>>>,
    terminals: Arc<AtomicU64>,
}

#[derive(Clone)]
struct CountingState {
    inner: <TinyMatrix as Game>::State,
    trace: Vec<String>,
    hits: Arc<Mutex<HashMap<String, u64>>>,
    terminals: Arc<AtomicU64>,
}

impl GameState for CountingState {
    fn player(&self) -> PlayerId {
        self.inner.player()
    }
    fn is_terminal(&self) -> bool {
        self.inner.is_terminal()
    }
    fn team_utility(&self) -> f64 {
        let key = self.trace.join("/");
        *self.hits.lock().unwrap().entry(key).or_default() += 1;
        self.terminals.fetch_add(1, Ordering::Relaxed);
        self.inner.team_utility()
    }
    fn legal_actions(&self) -> LegalActions {
        self.inner.legal_actions()
    }
    fn chance_outcomes(&self) -> Vec<(usize, f64)> {
        self.inner.chance_outcomes()
    }
    fn apply(&self, mv: &Move) -> Self {
        let mut next = self.clone();
        next.inner = self.inner.apply(mv);
        next.trace.push(format!("{mv:?}"));
        next
    }
    fn infoset_key(&self) -> InfoSetKey {
        self.inner.infoset_key()
    }
}

impl Game for CountingGame {
    type State = CountingState;
    fn initial_state(&self) -> CountingState {
        CountingState {
            inner: self.inner.initial_state(),
            trace: Vec::new(),
            hits: Arc::clone(&self.hits),
            terminals: Arc::clone(&self.terminals),
        }
    }
    fn num_agents(&self) -> usize {
        self.inner.num_agents()
    }
    fn utility_range(&self) -> f64 {
        self.inner.utility_range()
    }
    fn encoding_len(&self) -> usize {
        self.inner.encoding_len()
    }
    fn encode(&self, key: &InfoSetKey, agent: usize, action: usize, out: &mut [f64]) {
        self.inner.encode(key, agent, action, out)
    }
}

fn counting_game() -> CountingGame {
    let payoff: Vec<f64> = vec![0.4, -0.2, 0.1, -0.6, -0.3, 0.9, 0.2, -0.8];
    CountingGame {
        inner: TinyMatrix::new(TinyMatrixSpec::new(vec![2, 2], 2, payoff).unwrap()).unwrap(),
        hits: Arc::new(Mutex::new(HashMap::new())),
        terminals: Arc::new(AtomicU64::new(0)),
    }
}

fn small_net() -> NetConfig {
    NetConfig {
        hidden: vec![16, 16],
    }
}

#[test]
fn truncated_candidate_set_is_exactly_the_threshold() {
    // 6 agents x 10 cards each, one round: 10^6 joint actions. With M = 64
    // the traversal evaluates exactly 64 candidates per team infoset visit,
    // one traversed recursively and 63 estimated by probe rollouts.
    let game = Goofspiel::new(
        GoofspielSpec::new(10, 6, 1, PrizeOrder::FixedDescending).unwrap(),
    )
    .unwrap();
    assert_eq!(
        game.initial_state().legal_actions().joint_count(),
        1_000_000
    );
    let nets = NeuralNets::initialize(&game, SolveMode::Mix, &small_net(), 3);
    let policy = nets.current_policy(&game);
    let mut sink = RecordingSink::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = ProbeConfig {
        probe_count: 1,
        max_candidates: Some(64),
    };
    let (_, stats) = team_traverse_step(&game, &policy, &mut sink, 1, &mut rng, &config);
    assert_eq!(stats.candidates_evaluated, 64);
    assert_eq!(stats.probe_calls, 63);
    // regrets recorded only for the candidate set
    assert_eq!(sink.team_regrets.len(), 1);
    assert_eq!(sink.team_regrets[0].2.len(), 64);
}

#[test]
fn single_agent_team_degenerates_to_flat_probe_sampling() {
    // With one team agent the mix traversal consumes randomness and records
    // regrets exactly like the joint baseline (up to float normalization).
    let game = TinyMatrix::new(
        TinyMatrixSpec::new(vec![3], 3, vec![0.3, -0.1, 0.2, 0.5, -0.4, 0.0, 0.1, 0.6, -0.2])
            .unwrap(),
    )
    .unwrap();
    let mix = NeuralNets::initialize(&game, SolveMode::Mix, &small_net(), 11);
    let joint = NeuralNets::initialize(&game, SolveMode::Joint, &small_net(), 11);
    let config = ProbeConfig::default();
    for seed in 0..20 {
        let mut sink_mix = RecordingSink::default();
        let mut sink_joint = RecordingSink::default();
        let mut rng_mix = ChaCha8Rng::seed_from_u64(seed);
        let mut rng_joint = ChaCha8Rng::seed_from_u64(seed);
        team_traverse_step(
            &game,
            &mix.current_policy(&game),
            &mut sink_mix,
            1,
            &mut rng_mix,
            &config,
        );
        team_traverse_step(
            &game,
            &joint.current_policy(&game),
            &mut sink_joint,
            1,
            &mut rng_joint,
            &config,
        );
        assert_eq!(sink_mix.team_regrets.len(), sink_joint.team_regrets.len());
        for (a, b) in sink_mix.team_regrets.iter().zip(&sink_joint.team_regrets) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.2.len(), b.2.len());
            for ((ja_a, ra), (ja_b, rb)) in a.2.iter().zip(&b.2) {
                assert_eq!(ja_a, ja_b);
                assert!((ra - rb).abs() < 1e-12, "{ra} vs {rb}");
            }
        }
    }
}

#[test]
fn mix_and_joint_traversals_visit_identically_distributed_nodes() {
    // Fresh nets on both sides produce uniform strategies in both modes, so
    // the leaf-visit distributions must match. Two-sample chi-squared
    // homogeneity test over terminal identities.
    let trials = 4000u64;
    let mut tallies: Vec<HashMap<String, u64>> = Vec::new();
    for mode in [SolveMode::Mix, SolveMode::Joint] {
        let game = counting_game();
        let nets = NeuralNets::initialize(&game, mode, &small_net(), 17);
        let policy = nets.current_policy(&game);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let config = ProbeConfig::default();
        for t in 0..trials {
            let mut sink = RecordingSink::default();
            team_traverse_step(&game, &policy, &mut sink, t, &mut rng, &config);
            let mut sink = RecordingSink::default();
            adversary_traverse_step(&game, &policy, &mut sink, t, &mut rng, &config);
        }
        tallies.push(Arc::try_unwrap(game.hits).unwrap().into_inner().unwrap());
    }
    let mut cells: Vec<String> = tallies
        .iter()
        .flat_map(|t| t.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    cells.sort();
    let totals: Vec<f64> = tallies
        .iter()
        .map(|t| t.values().sum::<u64>() as f64)
        .collect();
    let grand: f64 = totals.iter().sum();
    let mut chi2 = 0.0;
    for cell in &cells {
        let row: f64 = tallies
            .iter()
            .map(|t| *t.get(cell).unwrap_or(&0) as f64)
            .sum();
        for (tally, &total) in tallies.iter().zip(&totals) {
            let observed = *tally.get(cell).unwrap_or(&0) as f64;
            let expected = row * total / grand;
            if expected > 0.0 {
                chi2 += (observed - expected) * (observed - expected) / expected;
            }
        }
    }
    let df = (cells.len() - 1) as f64;
    let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
    assert!(
        chi2 < critical,
        "chi2 {chi2} >= {critical} over {} cells",
        cells.len()
    );
}

#[test]
fn independent_agent_sampling_matches_product_distribution() {
    let strategy = TeamStrategy::PerAgent(vec![vec![0.3, 0.7], vec![0.6, 0.1, 0.3]]);
    let counts = [2usize, 3];
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 100_000usize;
    let mut freq = vec![0u64; 6];
    for _ in 0..n {
        let ids = strategy.sample(&counts, &mut rng);
        freq[ids[0] * 3 + ids[1]] += 1;
    }
    let joint = strategy.to_joint_vec(&counts);
    for (flat, &p) in joint.iter().enumerate() {
        let observed = freq[flat] as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (observed - p).abs() <= 3.0 * se + 1e-9,
            "cell {flat}: {observed} vs {p} (se {se})"
        );
    }
}

#[test]
fn tabular_solve_exploitability_trend_is_non_increasing_smoothed() {
    let game = TinyMatrix::new(TinyMatrixSpec::matching_pennies()).unwrap();
    let config = SolverConfig {
        mode: SolveMode::Tabular,
        iterations: 400,
        eval_every: 1,
        ..SolverConfig::default()
    };
    let (report, _) = solve(&game, &config).unwrap();
    let series: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.metric == METRIC_EXPLOITABILITY)
        .map(|r| r.value)
        .collect();
    assert!(series.len() >= 300);
    let window = 50;
    let smooth = |lo: usize| -> f64 { series[lo..lo + window].iter().sum::<f64>() / window as f64 };
    let first = smooth(0);
    let mid = smooth(series.len() / 2 - window / 2);
    let last = smooth(series.len() - window);
    assert!(last <= mid + 1e-9, "smoothed trend rose: mid {mid} last {last}");
    assert!(mid <= first + 1e-9, "smoothed trend rose: first {first} mid {mid}");
    assert!(*series.last().unwrap() <= series[0]);
    // c/sqrt(T) envelope: calibrate c on the first iterations, check the tail.
    let c = series
        .iter()
        .take(50)
        .enumerate()
        .map(|(i, &e)| e * ((i + 1) as f64).sqrt())
        .fold(0.0f64, f64::max);
    for (i, &e) in series.iter().enumerate().skip(series.len() / 2) {
        let bound = 2.0 * c / ((i + 1) as f64).sqrt();
        assert!(e <= bound, "iteration {}: {e} above envelope {bound}", i + 1);
    }
}

#[test]
fn mix_mode_solve_runs_and_reports_metrics() {
    let game = TinyMatrix::new(
        TinyMatrixSpec::new(vec![2, 2], 2, vec![0.5, -0.5, -0.25, 0.25, -0.5, 0.5, 0.0, 0.0])
            .unwrap(),
    )
    .unwrap();
    let config = SolverConfig {
        mode: SolveMode::Mix,
        iterations: 4,
        traversals: 16,
        eval_every: 2,
        net: small_net(),
        train: teamcfr::neural::TrainConfig {
            steps: 100,
            batch_size: 16,
            epochs: 5,
            ..Default::default()
        },
        ..SolverConfig::default()
    };
    let (report, artifacts) = solve(&game, &config).unwrap();
    assert_eq!(report.iterations_completed, 4);
    assert!(report.last_value(METRIC_EXPLOITABILITY).is_some());
    assert!(report.last_value(teamcfr::report::METRIC_LOSS_REGRET).is_some());
    let nets = artifacts.neural().unwrap();
    // average policy produces valid distributions
    let key = game.initial_state().infoset_key();
    match nets
        .average_policy(&game)
        .team_strategy(&key, &[2, 2])
    {
        TeamStrategy::PerAgent(per) => {
            for probs in per {
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        _ => panic!("mix mode is factored"),
    }
}
