//! The `verify` command: runs the cross-module property suites with frozen
//! seeds, prints one line per check with the measured deviation and its
//! tolerance, and reports overall success.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposition::{
    check_strategy_consistency, compose_joint_regret, IndividualRegretProfile,
};
use crate::game::{Game, GameState, JointAction, Move, PlayerId};
use crate::games::{TinyMatrix, TinyMatrixSpec};
use crate::neural::{
    gradient_check, NetSpec, Network, OutputHead, RegretEntries, RegretRecord, RegretNet,
    SampleMemory,
};
use crate::regret::{regret_matching, StrategyTable};
use crate::tabular::{
    exact_instantaneous_regrets, probe_traverse, FixedPolicy, ProbeConfig, RecordingSink,
    TraversalStats,
};
use crate::testutil::EncodingStub;

/// One property-suite check: measured value vs. tolerance.
#[derive(Debug, Clone)]
pub struct VerifyCheck {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, measured: f64, tolerance: f64) {
        let passed = measured <= tolerance;
        println!(
            "{} {name}: {measured:.3e} (tolerance {tolerance:.1e})",
            if passed { "PASS" } else { "FAIL" },
        );
        self.checks.push(VerifyCheck {
            name: name.to_string(),
            measured,
            tolerance,
            passed,
        });
    }
}

/// Runs every suite; deterministic given the frozen seeds inside.
pub fn run_verify() -> VerifyReport {
    let mut report = VerifyReport::default();
    consistency_suite(&mut report);
    mixing_equivalence_suite(&mut report);
    gradient_suite(&mut report);
    unbiasedness_suite(&mut report);
    reservoir_suite(&mut report);
    report
}

/// Product-form strategy consistency over random non-negative profiles.
fn consistency_suite(report: &mut VerifyReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e0);
    let mut max_dev: f64 = 0.0;
    let mut sum_identity_dev: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=4);
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=5);
                (0..k).map(|_| rng.gen_range(0.0..10.0)).collect()
            })
            .collect();
        let profile = IndividualRegretProfile::new(vectors);
        max_dev = max_dev.max(check_strategy_consistency(&profile));
        let tensor = compose_joint_regret(&profile);
        let product_of_sums: f64 = profile
            .vectors()
            .iter()
            .map(|v| v.iter().sum::<f64>())
            .product();
        let scale = product_of_sums.abs().max(1.0);
        sum_identity_dev = sum_identity_dev.max((tensor.sum() - product_of_sums).abs() / scale);
    }
    report.push("strategy-consistency max deviation", max_dev, 1e-12);
    report.push(
        "tensor-sum identity relative deviation",
        sum_identity_dev,
        1e-12,
    );
}

/// Regret matching over the mixing product equals the composition of
/// per-agent regret matching, for random networks.
fn mixing_equivalence_suite(report: &mut VerifyReport) {
    let stub = EncodingStub::new(3, 4, 8);
    let counts = [4usize, 3, 2];
    let mut max_dev: f64 = 0.0;
    for seed in 0..100 {
        let net = RegretNet::new(Network::new(NetSpec::new(
            stub.encoding_len(),
            vec![16, 16],
            OutputHead::Softplus,
            seed,
        )));
        let key = stub.team_key(seed);
        let factored: Vec<Vec<f64>> = counts
            .iter()
            .enumerate()
            .map(|(agent, &k)| {
                regret_matching(
                    &(0..k)
                        .map(|a| net.forward_agent(&stub, &key, agent, a))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let cells: usize = counts.iter().product();
        let joint_scores: Vec<f64> = (0..cells)
            .map(|flat| {
                net.forward_joint(&stub, &key, &JointAction::from_flat_index(flat, &counts))
            })
            .collect();
        let joint = regret_matching(&joint_scores);
        for (flat, &jp) in joint.iter().enumerate() {
            let ids = JointAction::from_flat_index(flat, &counts).ids();
            let prod: f64 = ids
                .iter()
                .enumerate()
                .map(|(agent, &a)| factored[agent][a])
                .product();
            max_dev = max_dev.max((jp - prod).abs());
        }
    }
    report.push("mixing-net strategy equivalence", max_dev, 1e-9);
}

/// Analytic vs finite-difference gradients through the mixing product.
fn gradient_suite(report: &mut VerifyReport) {
    let stub = EncodingStub::new(2, 3, 8);
    let counts = [3usize, 3];
    let mut rng = ChaCha8Rng::seed_from_u64(0x97ad);
    let net = RegretNet::new(Network::new(NetSpec::new(
        stub.encoding_len(),
        vec![32, 32],
        OutputHead::Softplus,
        5,
    )));
    let mut memory = SampleMemory::new(8);
    for i in 0..4u64 {
        let key = stub.team_key(i);
        let entries: Vec<(JointAction, f64)> = (0..9)
            .map(|flat| {
                (
                    JointAction::from_flat_index(flat, &counts),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        memory.insert(
            RegretRecord {
                key,
                t: 1,
                entries: RegretEntries::Joint(entries),
            },
            &mut rng,
        );
    }
    let err = gradient_check(&stub, &net, memory.records(), 100, &mut rng);
    report.push("gradient max relative error", err, 1e-4);
}

/// Mean recorded instantaneous regrets against the exact full-traversal
/// oracle, in standard-error units.
fn unbiasedness_suite(report: &mut VerifyReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb1a5);
    let payoff: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let game = TinyMatrix::new(TinyMatrixSpec::new(vec![2], 4, payoff).unwrap()).unwrap();
    let team_key = game.initial_state().infoset_key();
    let adv_key = game
        .initial_state()
        .apply(&Move::joint(&[0]))
        .infoset_key();
    let mut team_table = StrategyTable::new();
    team_table.insert(team_key, vec![0.7, 0.3]);
    let mut adv_table = StrategyTable::new();
    adv_table.insert(adv_key, vec![0.4, 0.3, 0.2, 0.1]);
    let policy = FixedPolicy {
        adversary: adv_table,
        team_joint: team_table,
    };
    let exact = exact_instantaneous_regrets(&game, &policy);

    let traversals = 20_000;
    let mut sums: std::collections::HashMap<crate::game::InfoSetKey, Vec<f64>> =
        Default::default();
    let mut sqs: std::collections::HashMap<crate::game::InfoSetKey, Vec<f64>> =
        Default::default();
    let mut counts: std::collections::HashMap<crate::game::InfoSetKey, u64> = Default::default();
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
                let q = sqs.entry(key.clone()).or_insert_with(|| vec![0.0; regrets.len()]);
                for (i, &r) in regrets.iter().enumerate() {
                    s[i] += r;
                    q[i] += r * r;
                }
                *counts.entry(key.clone()).or_default() += 1;
            }
            for (key, _, entries) in &sink.team_regrets {
                let s = sums.entry(key.clone()).or_insert_with(|| vec![0.0; entries.len()]);
                let q = sqs.entry(key.clone()).or_insert_with(|| vec![0.0; entries.len()]);
                for (i, (_, r)) in entries.iter().enumerate() {
                    s[i] += r;
                    q[i] += r * r;
                }
                *counts.entry(key.clone()).or_default() += 1;
            }
        }
    }
    let mut worst_sigma: f64 = 0.0;
    for (key, exact_regrets) in &exact {
        let n = counts[key] as f64;
        for (i, &e) in exact_regrets.iter().enumerate() {
            let mean = sums[key][i] / n;
            let var = (sqs[key][i] / n - mean * mean).max(0.0);
            let se = (var / n).sqrt().max(1e-12);
            worst_sigma = worst_sigma.max((mean - e).abs() / se);
        }
    }
    report.push("probe-sampling bias (standard errors)", worst_sigma, 3.0);
}

/// Reservoir retention uniformity: chi-squared over insertion-index buckets.
fn reservoir_suite(report: &mut VerifyReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e5);
    let inserts = 100_000u32;
    let capacity = 1000usize;
    let buckets = 100usize;
    let mut memory = SampleMemory::new(capacity);
    for i in 0..inserts {
        memory.insert(i, &mut rng);
    }
    let per_bucket = inserts as usize / buckets;
    let expected = capacity as f64 / buckets as f64;
    let mut chi2 = 0.0;
    for b in 0..buckets {
        let lo = (b * per_bucket) as u32;
        let hi = ((b + 1) * per_bucket) as u32;
        let observed = memory
            .records()
            .iter()
            .filter(|&&i| i >= lo && i < hi)
            .count() as f64;
        chi2 += (observed - expected) * (observed - expected) / expected;
    }
    // 99th percentile of chi-squared with 99 degrees of freedom.
    report.push("reservoir uniformity chi-squared (df=99)", chi2, 134.642);
}
