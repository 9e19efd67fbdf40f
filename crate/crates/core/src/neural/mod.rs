//! From-scratch function approximation for CFR-MIX: a shared-parameter
//! agent network whose outputs a multiplicative mixing layer combines into
//! joint cumulative regrets, plus average-strategy networks, reservoir
//! sample memories and mini-batch gradient-descent training.

mod memory;
mod net;
mod nets;
mod train;

pub use memory::{RecordedStrategy, RegretEntries, RegretRecord, SampleMemory, StrategyRecord};
pub use net::{ForwardCache, Gradients, NetSpec, Network, OutputHead};
pub use nets::{encode_joint, AdversaryRegretNet, JointNet, MixForward, RegretNet, StrategyNet};
pub use train::{
    gradient_check, train_adversary_regret, train_joint_regret, train_joint_strategy,
    train_strategy, train_team_regret, TrainConfig, TrainError,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{compose_joint_regret, IndividualRegretProfile};
    use crate::game::{Game, GameState, JointAction};
    use crate::games::{TinyMatrix, TinyMatrixSpec};
    use crate::regret::regret_matching;
    use crate::tabular::TeamStrategy;
    use crate::testutil::EncodingStub;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn game(actions: Vec<usize>) -> TinyMatrix {
        let cells: usize = actions.iter().product::<usize>() * 2;
        TinyMatrix::new(TinyMatrixSpec::new(actions, 2, vec![0.0; cells]).unwrap()).unwrap()
    }

    fn mix_net<G: Game>(game: &G, seed: u64) -> RegretNet {
        RegretNet::new(Network::new(NetSpec::new(
            game.encoding_len(),
            vec![48, 48],
            OutputHead::Softplus,
            seed,
        )))
    }

    /// One joint regret record per synthetic infoset, built so the
    /// warm-start target `(old + r_tilde)+` equals a random decomposable
    /// tensor exactly: the sampled regret stores the increment between the
    /// oracle tensor and the old net's estimate.
    fn decomposable_records(
        stub: &EncodingStub,
        counts: &[usize],
        old: &RegretNet,
        rng: &mut ChaCha8Rng,
        n_records: usize,
    ) -> SampleMemory<RegretRecord> {
        let mut memory = SampleMemory::new(n_records.max(1) * 2);
        for i in 0..n_records {
            let key = stub.team_key(i as u64);
            let profile = IndividualRegretProfile::new(
                counts
                    .iter()
                    .map(|&k| (0..k).map(|_| rng.gen_range(0.2..2.0)).collect())
                    .collect(),
            );
            let tensor = compose_joint_regret(&profile);
            let entries: Vec<(JointAction, f64)> = tensor
                .data()
                .iter()
                .enumerate()
                .map(|(flat, &v)| {
                    let ja = JointAction::from_flat_index(flat, counts);
                    let increment = v - old.forward_joint(stub, &key, &ja);
                    (ja, increment)
                })
                .collect();
            memory.insert(
                RegretRecord {
                    key,
                    t: 1,
                    entries: RegretEntries::Joint(entries),
                },
                rng,
            );
        }
        memory
    }

    /// MSE of the trained net against the oracle tensors the records encode.
    fn mse_against_targets(
        stub: &EncodingStub,
        old: &RegretNet,
        new: &RegretNet,
        memory: &SampleMemory<RegretRecord>,
    ) -> f64 {
        let mut total = 0.0;
        for record in memory.records() {
            let RegretEntries::Joint(entries) = &record.entries else {
                unreachable!()
            };
            for (ja, inc) in entries {
                let target = (old.forward_joint(stub, &record.key, ja) + inc).max(0.0);
                let d = new.forward_joint(stub, &record.key, ja) - target;
                total += d * d;
            }
        }
        total / memory.len() as f64
    }

    #[test]
    fn strategy_extraction_is_consistent_between_joint_and_factored_views() {
        // Regret matching over forward_joint outputs equals the product of
        // per-agent regret-matching distributions, for random trained and
        // untrained nets.
        let game = game(vec![2, 3]);
        let counts = [2usize, 3];
        let key = game.initial_state().infoset_key();
        for seed in 0..20 {
            let net = mix_net(&game, seed);
            let factored = match net.team_strategy(&game, &key, &counts) {
                TeamStrategy::PerAgent(per) => per,
                _ => unreachable!(),
            };
            let joint_scores: Vec<f64> = (0..6)
                .map(|flat| {
                    net.forward_joint(&game, &key, &JointAction::from_flat_index(flat, &counts))
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
                assert!(
                    (jp - prod).abs() <= 1e-9,
                    "seed {seed}: joint {jp} vs product {prod}"
                );
            }
        }
    }

    #[test]
    fn training_fits_decomposable_tensors() {
        // Mixing-net representability: regression onto oracle-decomposable
        // joint tensors across distinct infosets.
        let stub = EncodingStub::new(2, 3, 8);
        let counts = [3usize, 3];
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut net = mix_net(&stub, 7);
        let old = net.clone();
        let memory = decomposable_records(&stub, &counts, &old, &mut rng, 16);
        let config = TrainConfig {
            steps: 6000,
            step_size: 5e-3,
            epochs: 20,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let trace = train_team_regret(&stub, &mut net, &memory, &config, &mut rng).unwrap();
        let final_loss = mse_against_targets(&stub, &old, &net, &memory);
        assert!(
            final_loss <= 1e-3,
            "regression onto decomposable tensors stalled at {final_loss}"
        );
        // non-increasing epoch trace
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + pair[0].abs() * 1e-9 + 1e-15);
        }
    }

    #[test]
    fn constant_zero_targets_drive_outputs_to_zero() {
        let game = game(vec![2, 2]);
        let key = game.initial_state().infoset_key();
        let counts = [2usize, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut memory = SampleMemory::new(64);
        for _ in 0..8 {
            let entries: Vec<(JointAction, f64)> = (0..4)
                .map(|flat| (JointAction::from_flat_index(flat, &counts), 0.0))
                .collect();
            memory.insert(
                RegretRecord {
                    key: key.clone(),
                    t: 1,
                    entries: RegretEntries::Joint(entries),
                },
                &mut rng,
            );
        }
        // Start from a zero-output net: zero targets keep it at the fixed
        // point and the loss trace stays at zero.
        let mut net = RegretNet::new(Network::new(NetSpec::new(
            game.encoding_len(),
            vec![16],
            OutputHead::ZeroedSoftplus,
            3,
        )));
        let config = TrainConfig {
            steps: 200,
            epochs: 4,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let trace = train_team_regret(&game, &mut net, &memory, &config, &mut rng).unwrap();
        assert!(trace.iter().all(|&l| l <= 1e-12));
        for flat in 0..4 {
            let ja = JointAction::from_flat_index(flat, &counts);
            assert_eq!(net.forward_joint(&game, &key, &ja), 0.0);
        }
    }

    #[test]
    fn single_record_is_memorized() {
        // One representable (decomposable) record, enough epochs: the net
        // memorizes it to numerical precision.
        let stub = EncodingStub::new(2, 2, 8);
        let counts = [2usize, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut net = mix_net(&stub, 23);
        let old = net.clone();
        let memory = decomposable_records(&stub, &counts, &old, &mut rng, 1);
        let config = TrainConfig {
            steps: 8000,
            step_size: 1e-2,
            epochs: 40,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let trace = train_team_regret(&stub, &mut net, &memory, &config, &mut rng).unwrap();
        let final_loss = mse_against_targets(&stub, &old, &net, &memory);
        assert!(
            final_loss <= 1e-6,
            "memorization stalled at {final_loss} (trace tail {})",
            trace.last().unwrap()
        );
    }

    #[test]
    fn agent_outputs_fit_target_profile_directly() {
        // Fit the worked profile R1=[2,1], R2=[3,1] through its joint tensor.
        // Per-agent outputs are determined up to a scale constant, so compare
        // the induced strategies instead of raw values.
        let stub = EncodingStub::new(2, 2, 8);
        let key = stub.team_key(0);
        let counts = [2usize, 2];
        let profile =
            IndividualRegretProfile::new(vec![vec![2.0, 1.0], vec![3.0, 1.0]]);
        let tensor = compose_joint_regret(&profile);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut net = mix_net(&stub, 41);
        let old = net.clone();
        let mut memory = SampleMemory::new(4);
        memory.insert(
            RegretRecord {
                key: key.clone(),
                t: 1,
                entries: RegretEntries::Joint(
                    tensor
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(flat, &v)| {
                            let ja = JointAction::from_flat_index(flat, &counts);
                            let inc = v - old.forward_joint(&stub, &key, &ja);
                            (ja, inc)
                        })
                        .collect(),
                ),
            },
            &mut rng,
        );
        let config = TrainConfig {
            steps: 8000,
            step_size: 1e-2,
            epochs: 40,
            batch_size: 4,
            ..TrainConfig::default()
        };
        train_team_regret(&stub, &mut net, &memory, &config, &mut rng).unwrap();
        let expected = [[2.0 / 3.0, 1.0 / 3.0], [0.75, 0.25]];
        match net.team_strategy(&stub, &key, &counts) {
            TeamStrategy::PerAgent(per) => {
                for (agent, probs) in per.iter().enumerate() {
                    for (a, &p) in probs.iter().enumerate() {
                        assert!(
                            (p - expected[agent][a]).abs() <= 1e-2,
                            "agent {agent} action {a}: {p} vs {}",
                            expected[agent][a]
                        );
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn gradient_check_on_fresh_two_agent_net() {
        let stub = EncodingStub::new(2, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let net = mix_net(&stub, 13);
        let memory = decomposable_records(&stub, &[3, 3], &net, &mut rng, 4);
        let err = gradient_check(&stub, &net, memory.records(), 100, &mut rng);
        assert!(err <= 1e-4, "max relative gradient error {err}");
    }

    #[test]
    fn gradient_check_linear_net_is_nearly_exact() {
        // One agent and a linear head make the loss exactly quadratic.
        let game = game(vec![2]);
        let key = game.initial_state().infoset_key();
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let mut linear = RegretNet::new(Network::new(NetSpec::new(
            game.encoding_len(),
            vec![],
            OutputHead::Linear,
            2,
        )));
        for i in 0..linear.network().param_count() {
            linear.network_mut().set_param(i, rng.gen_range(-0.5..0.5));
        }
        let records = vec![RegretRecord {
            key,
            t: 1,
            entries: RegretEntries::Joint(vec![
                (JointAction::from_ids(&[0]), 0.4),
                (JointAction::from_ids(&[1]), 0.7),
            ]),
        }];
        let err = gradient_check(&game, &linear, &records, 50, &mut rng);
        assert!(err <= 1e-7, "linear-net gradient error {err}");
    }

    #[test]
    fn gradient_check_at_stationary_point_is_zero() {
        // Zero-output net with zero sampled regrets: targets equal outputs,
        // the loss is at its minimum and both gradient estimates vanish.
        let game = game(vec![2, 2]);
        let key = game.initial_state().infoset_key();
        let counts = [2usize, 2];
        let net = RegretNet::new(Network::new(NetSpec::new(
            game.encoding_len(),
            vec![8],
            OutputHead::ZeroedSoftplus,
            3,
        )));
        let records = vec![RegretRecord {
            key,
            t: 1,
            entries: RegretEntries::Joint(
                (0..4)
                    .map(|flat| (JointAction::from_flat_index(flat, &counts), 0.0))
                    .collect(),
            ),
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let mut grads = net.network().zero_grads();
        for record in &records {
            let RegretEntries::Joint(entries) = &record.entries else {
                unreachable!()
            };
            for (ja, _) in entries {
                let mix = MixForward::run(net.network(), &game, &record.key, ja);
                mix.backward(net.network(), 2.0 * mix.product, &mut grads);
            }
        }
        for i in 0..net.network().param_count() {
            assert!(grads.get(i).abs() <= 1e-8);
        }
        let err = gradient_check(&game, &net, &records, 40, &mut rng);
        assert!(err <= 1e-8, "stationary-point gradient error {err}");
    }

    #[test]
    fn strategy_net_training_recovers_average_strategy() {
        // Feed repeated per-agent strategy observations; the normalized
        // scores must converge to the visit-weighted average.
        let game = game(vec![2, 2]);
        let key = game.initial_state().infoset_key();
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let mut memory = SampleMemory::new(64);
        // agent 0 alternates [1,0] and [0,1] (average 0.5/0.5), agent 1
        // always plays [0.75, 0.25].
        for i in 0..16 {
            let a0 = if i % 2 == 0 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            };
            memory.insert(
                StrategyRecord {
                    key: key.clone(),
                    t: i as u64 + 1,
                    strategy: RecordedStrategy::TeamPerAgent(vec![
                        a0,
                        vec![0.75, 0.25],
                    ]),
                },
                &mut rng,
            );
        }
        // Zero-output head: accumulated scores equal the visit-weighted mean
        // of the recorded strategies with no initialization offset.
        let mut net = StrategyNet::new(Network::new(NetSpec::new(
            game.encoding_len(),
            vec![32],
            OutputHead::ZeroedSoftplus,
            11,
        )));
        let config = TrainConfig {
            steps: 4000,
            step_size: 1e-2,
            epochs: 20,
            batch_size: 16,
            ..TrainConfig::default()
        };
        train_strategy(&game, &mut net, &memory, &config, &mut rng).unwrap();
        let d0 = net.distribution(&game, &key, 0, 2);
        let d1 = net.distribution(&game, &key, 1, 2);
        assert!((d0[0] - 0.5).abs() < 0.05, "agent 0 strategy {d0:?}");
        assert!((d1[0] - 0.75).abs() < 0.05, "agent 1 strategy {d1:?}");
    }

    #[test]
    fn empty_memory_is_rejected() {
        let game = game(vec![2]);
        let memory: SampleMemory<RegretRecord> = SampleMemory::new(8);
        let mut net = mix_net(&game, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            train_team_regret(&game, &mut net, &memory, &TrainConfig::default(), &mut rng),
            Err(TrainError::EmptyMemory)
        ));
    }
}
