//! Mini-batch gradient-descent training of the regret and strategy networks
//! on reservoir memories, with warm-start cumulative targets: each record's
//! target is the previous network's estimate plus the sampled value, clipped
//! at zero. Epoch losses are kept non-increasing by halving the step size
//! and restoring the previous parameters whenever an epoch regresses.

use rand::Rng;
use thiserror::Error;

use crate::game::{Game, JointAction};
use crate::neural::memory::{
    RecordedStrategy, RegretEntries, RegretRecord, SampleMemory, StrategyRecord,
};
use crate::neural::net::{ForwardCache, Gradients, Network};
use crate::neural::nets::{AdversaryRegretNet, JointNet, MixForward, RegretNet, StrategyNet};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("cannot train on an empty memory")]
    EmptyMemory,
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub step_size: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Total gradient steps per training call.
    pub steps: usize,
    /// Number of epoch checkpoints at which the eval loss is measured.
    pub epochs: usize,
    /// Records sampled for the eval loss (capped by the memory size).
    pub eval_subsample: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step_size: 1e-3,
            momentum: 0.9,
            batch_size: 256,
            steps: 1000,
            epochs: 10,
            eval_subsample: 2048,
        }
    }
}

const MAX_HALVINGS: u32 = 24;

/// Epoch/step driver shared by every net kind. `batch_step` accumulates
/// batch gradients into `grads` and returns the batch loss; `eval_loss`
/// measures the frozen-target loss of the current parameters.
fn run_training<R: Rng>(
    net: &mut Network,
    memory_len: usize,
    config: &TrainConfig,
    rng: &mut R,
    mut batch_step: impl FnMut(&Network, &[usize], &mut Gradients) -> f64,
    mut eval_loss: impl FnMut(&Network) -> f64,
) -> Result<Vec<f64>, TrainError> {
    if memory_len == 0 {
        return Err(TrainError::EmptyMemory);
    }
    let mut trace = vec![eval_loss(net)];
    let steps_per_epoch = (config.steps / config.epochs.max(1)).max(1);
    let mut lr = config.step_size;
    let mut velocity = net.zero_grads();
    let mut grads = net.zero_grads();
    let mut halvings = 0u32;
    let mut epoch = 0usize;
    let mut batch = vec![0usize; config.batch_size];
    while epoch < config.epochs {
        let snapshot = net.clone();
        for _ in 0..steps_per_epoch {
            for slot in batch.iter_mut() {
                *slot = rng.gen_range(0..memory_len);
            }
            grads.zero();
            let loss = batch_step(net, &batch, &mut grads);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, loss });
            }
            net.sgd_step(&grads, &mut velocity, lr, config.momentum);
        }
        let loss = eval_loss(net);
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss });
        }
        let prev = *trace.last().unwrap();
        if loss > prev + prev.abs() * 1e-12 + 1e-15 {
            // Regression: restore, halve the step and retry this epoch.
            *net = snapshot;
            velocity.zero();
            halvings += 1;
            if halvings > MAX_HALVINGS {
                trace.push(prev);
                break;
            }
            lr /= 2.0;
            continue;
        }
        trace.push(loss);
        epoch += 1;
        halvings = 0; // the step size stays halved, the retry budget refills
    }
    Ok(trace)
}

fn eval_indices<R: Rng>(memory_len: usize, config: &TrainConfig, rng: &mut R) -> Vec<usize> {
    if memory_len <= config.eval_subsample {
        (0..memory_len).collect()
    } else {
        (0..config.eval_subsample)
            .map(|_| rng.gen_range(0..memory_len))
            .collect()
    }
}

/// Warm-start targets for one team regret record: the old net's joint
/// estimate plus the sampled regret, clipped at zero.
fn mix_targets<G: Game>(game: &G, old: &RegretNet, record: &RegretRecord) -> Vec<f64> {
    match &record.entries {
        RegretEntries::Joint(entries) => entries
            .iter()
            .map(|(ja, r)| (old.forward_joint(game, &record.key, ja) + r).max(0.0))
            .collect(),
        RegretEntries::Flat(_) => panic!("team regret record must hold joint entries"),
    }
}

/// Lazily computed warm-start targets, cached per record index.
struct TargetCache<'a, F: Fn(usize) -> Vec<f64>> {
    cache: Vec<Option<Vec<f64>>>,
    compute: F,
    _marker: std::marker::PhantomData<&'a ()>,
}

impl<'a, F: Fn(usize) -> Vec<f64>> TargetCache<'a, F> {
    fn new(len: usize, compute: F) -> Self {
        TargetCache {
            cache: vec![None; len],
            compute,
            _marker: std::marker::PhantomData,
        }
    }

    fn get(&mut self, idx: usize) -> &[f64] {
        if self.cache[idx].is_none() {
            self.cache[idx] = Some((self.compute)(idx));
        }
        self.cache[idx].as_deref().unwrap()
    }
}

/// Trains the team mixing regret net. Gradients flow through the product
/// mixing layer into the shared agent parameters. Returns the per-epoch
/// loss trace (non-increasing).
pub fn train_team_regret<G: Game, R: Rng>(
    game: &G,
    net: &mut RegretNet,
    memory: &SampleMemory<RegretRecord>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>, TrainError> {
    let old = net.clone();
    let records = memory.records();
    let eval_idx = eval_indices(records.len(), config, rng);
    let mut batch_targets = TargetCache::new(records.len(), |idx| mix_targets(game, &old, &records[idx]));
    let mut eval_targets = TargetCache::new(records.len(), |idx| mix_targets(game, &old, &records[idx]));

    run_training(
        net.network_mut(),
        records.len(),
        config,
        rng,
        |network, batch, grads| {
            let mut mix = MixForward::new();
            let mut total = 0.0;
            for &idx in batch {
                let record = &records[idx];
                let RegretEntries::Joint(entries) = &record.entries else {
                    unreachable!()
                };
                let targets = batch_targets.get(idx);
                for ((ja, _), &target) in entries.iter().zip(targets) {
                    let pred = mix.compute(network, game, &record.key, ja);
                    let diff = pred - target;
                    total += diff * diff;
                    mix.backward(network, 2.0 * diff / batch.len() as f64, grads);
                }
            }
            total / batch.len() as f64
        },
        |network| {
            let mut mix = MixForward::new();
            let mut total = 0.0;
            for &idx in &eval_idx {
                let record = &records[idx];
                let RegretEntries::Joint(entries) = &record.entries else {
                    unreachable!()
                };
                let targets = eval_targets.get(idx);
                for ((ja, _), &target) in entries.iter().zip(targets) {
                    let d = mix.compute(network, game, &record.key, ja) - target;
                    total += d * d;
                }
            }
            total / eval_idx.len() as f64
        },
    )
}

/// Trains the adversary regret net on flat action vectors.
pub fn train_adversary_regret<G: Game, R: Rng>(
    game: &G,
    net: &mut AdversaryRegretNet,
    memory: &SampleMemory<RegretRecord>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>, TrainError> {
    let old = net.clone();
    let records = memory.records();
    let eval_idx = eval_indices(records.len(), config, rng);
    let flat_targets = |record: &RegretRecord| -> Vec<f64> {
        let RegretEntries::Flat(regrets) = &record.entries else {
            panic!("adversary regret record must hold a flat vector")
        };
        regrets
            .iter()
            .enumerate()
            .map(|(a, r)| (old.forward(game, &record.key, a) + r).max(0.0))
            .collect()
    };
    let mut batch_targets = TargetCache::new(records.len(), |idx| flat_targets(&records[idx]));
    let mut eval_targets = TargetCache::new(records.len(), |idx| flat_targets(&records[idx]));
    let width = game.encoding_len();

    run_training(
        net.network_mut(),
        records.len(),
        config,
        rng,
        |network, batch, grads| {
            let mut x = vec![0.0; width];
            let mut cache = ForwardCache::default();
            let mut total = 0.0;
            for &idx in batch {
                let record = &records[idx];
                let targets = batch_targets.get(idx);
                for (a, &target) in targets.iter().enumerate() {
                    game.encode(&record.key, 0, a, &mut x);
                    let y = network.forward_cached(&x, &mut cache);
                    let diff = y - target;
                    total += diff * diff;
                    network.backward(&cache, 2.0 * diff / batch.len() as f64, grads);
                }
            }
            total / batch.len() as f64
        },
        |network| {
            let mut x = vec![0.0; width];
            let mut cache = ForwardCache::default();
            let mut total = 0.0;
            for &idx in &eval_idx {
                let record = &records[idx];
                let targets = eval_targets.get(idx);
                for (a, &target) in targets.iter().enumerate() {
                    game.encode(&record.key, 0, a, &mut x);
                    let d = network.forward_cached(&x, &mut cache) - target;
                    total += d * d;
                }
            }
            total / eval_idx.len() as f64
        },
    )
}

/// Trains the joint-action baseline regret net.
pub fn train_joint_regret<G: Game, R: Rng>(
    game: &G,
    net: &mut JointNet,
    memory: &SampleMemory<RegretRecord>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>, TrainError> {
    let old = net.clone();
    let records = memory.records();
    let eval_idx = eval_indices(records.len(), config, rng);
    let width = net.num_agents() * game.encoding_len();
    let joint_targets = |record: &RegretRecord| -> Vec<f64> {
        let RegretEntries::Joint(entries) = &record.entries else {
            panic!("joint regret record must hold joint entries")
        };
        entries
            .iter()
            .map(|(ja, r)| (old.forward(game, &record.key, ja) + r).max(0.0))
            .collect()
    };
    let mut batch_targets = TargetCache::new(records.len(), |idx| joint_targets(&records[idx]));
    let mut eval_targets = TargetCache::new(records.len(), |idx| joint_targets(&records[idx]));

    run_training(
        net.network_mut(),
        records.len(),
        config,
        rng,
        |network, batch, grads| {
            let mut x = vec![0.0; width];
            let mut cache = ForwardCache::default();
            let mut total = 0.0;
            for &idx in batch {
                let record = &records[idx];
                let RegretEntries::Joint(entries) = &record.entries else {
                    unreachable!()
                };
                let targets = batch_targets.get(idx);
                for ((ja, _), &target) in entries.iter().zip(targets) {
                    crate::neural::nets::encode_joint(game, &record.key, ja, &mut x);
                    let y = network.forward_cached(&x, &mut cache);
                    let diff = y - target;
                    total += diff * diff;
                    network.backward(&cache, 2.0 * diff / batch.len() as f64, grads);
                }
            }
            total / batch.len() as f64
        },
        |network| {
            let mut x = vec![0.0; width];
            let mut cache = ForwardCache::default();
            let mut total = 0.0;
            for &idx in &eval_idx {
                let record = &records[idx];
                let RegretEntries::Joint(entries) = &record.entries else {
                    unreachable!()
                };
                let targets = eval_targets.get(idx);
                for ((ja, _), &target) in entries.iter().zip(targets) {
                    crate::neural::nets::encode_joint(game, &record.key, ja, &mut x);
                    let d = network.forward_cached(&x, &mut cache) - target;
                    total += d * d;
                }
            }
            total / eval_idx.len() as f64
        },
    )
}

/// Per-record (agent, action, observed probability) triples for the shared
/// strategy nets: adversary records map to agent 0.
fn strategy_triples(record: &StrategyRecord) -> Vec<(usize, usize, f64)> {
    match &record.strategy {
        RecordedStrategy::Flat(probs) => probs
            .iter()
            .enumerate()
            .map(|(a, &p)| (0, a, p))
            .collect(),
        RecordedStrategy::TeamPerAgent(per) => per
            .iter()
            .enumerate()
            .flat_map(|(agent, probs)| {
                probs
                    .iter()
                    .enumerate()
                    .map(move |(a, &p)| (agent, a, p))
            })
            .collect(),
        RecordedStrategy::TeamJoint { .. } => {
            panic!("joint strategy records train the joint net")
        }
    }
}

/// Trains a shared average-strategy net on accumulated strategy scores:
/// targets are the old score plus the recorded probability, clipped at zero.
pub fn train_strategy<G: Game, R: Rng>(
    game: &G,
    net: &mut StrategyNet,
    memory: &SampleMemory<StrategyRecord>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>, TrainError> {
    let old = net.clone();
    let records = memory.records();
    let eval_idx = eval_indices(records.len(), config, rng);
    let score_targets = |record: &StrategyRecord| -> Vec<(usize, usize, f64)> {
        strategy_triples(record)
            .into_iter()
            .map(|(agent, action, p)| {
                let target = (old.score(game, &record.key, agent, action) + p).max(0.0);
                (agent, action, target)
            })
            .collect()
    };
    let mut batch_targets: Vec<Option<Vec<(usize, usize, f64)>>> = vec![None; records.len()];
    let width = game.encoding_len();

    run_training(
        net.network_mut(),
        records.len(),
        config,
        rng,
        |network, batch, grads| {
            let mut x = vec![0.0; width];
            let mut cache = ForwardCache::default();
            let mut total = 0.0;
            for &idx in batch {
                let record = &records[idx];
                if batch_targets[idx].is_none() {
                    batch_targets[idx] = Some(score_targets(record));
                }
                for &(agent, action, target) in batch_targets[idx].as_ref().unwrap() {
                    game.encode(&record.key, agent, action, &mut x);
                    let y = network.forward_cached(&x, &mut cache);
                    let diff = y - target;
                    total += diff * diff;
                    network.backward(&cache, 2.0 * diff / batch.len() as f64, grads);
                }
            }
            total / batch.len() as f64
        },
        |network| {
            let mut x = vec![0.0; width];
            let mut cache = ForwardCache::default();
            let mut total = 0.0;
            for &idx in &eval_idx {
                let record = &records[idx];
                for (agent, action, target) in score_targets(record) {
                    game.encode(&record.key, agent, action, &mut x);
                    let d = network.forward_cached(&x, &mut cache) - target;
                    total += d * d;
                }
            }
            total / eval_idx.len() as f64
        },
    )
}

/// Trains the joint-action baseline strategy net on dense joint strategies.
pub fn train_joint_strategy<G: Game, R: Rng>(
    game: &G,
    net: &mut JointNet,
    memory: &SampleMemory<StrategyRecord>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>, TrainError> {
    let old = net.clone();
    let records = memory.records();
    let eval_idx = eval_indices(records.len(), config, rng);
    let width = net.num_agents() * game.encoding_len();

    let joints_of = |record: &StrategyRecord| -> Vec<(JointAction, f64)> {
        match &record.strategy {
            RecordedStrategy::TeamJoint { probs, counts } => probs
                .iter()
                .enumerate()
                .map(|(flat, &p)| {
                    let ja = JointAction::from_flat_index(flat, counts);
                    let target = (old.forward(game, &record.key, &ja) + p).max(0.0);
                    (ja, target)
                })
                .collect(),
            _ => panic!("joint strategy trainer needs dense joint records"),
        }
    };
    let mut batch_targets: Vec<Option<Vec<(JointAction, f64)>>> = vec![None; records.len()];

    run_training(
        net.network_mut(),
        records.len(),
        config,
        rng,
        |network, batch, grads| {
            let mut x = vec![0.0; width];
            let mut cache = ForwardCache::default();
            let mut total = 0.0;
            for &idx in batch {
                let record = &records[idx];
                if batch_targets[idx].is_none() {
                    batch_targets[idx] = Some(joints_of(record));
                }
                for (ja, target) in batch_targets[idx].as_ref().unwrap() {
                    crate::neural::nets::encode_joint(game, &record.key, ja, &mut x);
                    let y = network.forward_cached(&x, &mut cache);
                    let diff = y - target;
                    total += diff * diff;
                    network.backward(&cache, 2.0 * diff / batch.len() as f64, grads);
                }
            }
            total / batch.len() as f64
        },
        |network| {
            let mut x = vec![0.0; width];
            let mut cache = ForwardCache::default();
            let mut total = 0.0;
            for &idx in &eval_idx {
                let record = &records[idx];
                for (ja, target) in joints_of(record) {
                    crate::neural::nets::encode_joint(game, &record.key, &ja, &mut x);
                    let d = network.forward_cached(&x, &mut cache) - target;
                    total += d * d;
                }
            }
            total / eval_idx.len() as f64
        },
    )
}

/// Compares analytic gradients of the team regret loss (through the mixing
/// product) against central finite differences on `probes` randomly chosen
/// parameters. Returns the max relative error, with a small denominator
/// floor so near-zero gradient pairs compare absolutely.
pub fn gradient_check<G: Game, R: Rng>(
    game: &G,
    net: &RegretNet,
    records: &[RegretRecord],
    probes: usize,
    rng: &mut R,
) -> f64 {
    assert!(!records.is_empty());
    // Freeze targets from the current parameters.
    let targets: Vec<Vec<f64>> = records
        .iter()
        .map(|record| mix_targets(game, net, record))
        .collect();

    let loss_of = |net: &RegretNet| -> f64 {
        let mut total = 0.0;
        for (record, targets) in records.iter().zip(&targets) {
            let RegretEntries::Joint(entries) = &record.entries else {
                unreachable!()
            };
            for ((ja, _), &target) in entries.iter().zip(targets) {
                let d = net.forward_joint(game, &record.key, ja) - target;
                total += d * d;
            }
        }
        total / records.len() as f64
    };

    // Analytic gradient of the mean loss.
    let mut grads = net.network().zero_grads();
    let mut mix = MixForward::new();
    for (record, targets) in records.iter().zip(&targets) {
        let RegretEntries::Joint(entries) = &record.entries else {
            unreachable!()
        };
        for ((ja, _), &target) in entries.iter().zip(targets) {
            let pred = mix.compute(net.network(), game, &record.key, ja);
            let diff = pred - target;
            mix.backward(
                net.network(),
                2.0 * diff / records.len() as f64,
                &mut grads,
            );
        }
    }

    let mut probe_net = net.clone();
    let count = probe_net.network().param_count();
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.gen_range(0..count);
        let orig = probe_net.network().get_param(i);
        probe_net.network_mut().set_param(i, orig + h);
        let up = loss_of(&probe_net);
        probe_net.network_mut().set_param(i, orig - h);
        let down = loss_of(&probe_net);
        probe_net.network_mut().set_param(i, orig);
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(i);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    max_rel
}
