//! Product-form decomposition of team cumulative regrets.
//!
//! Under regret-matching+ all cumulative regrets are non-negative, and the
//! joint-action regret tensor is defined as the product of per-agent regret
//! vectors: `R_tot(I, a) = prod_i R_i(I, a_i)`. The central property (checked
//! exhaustively by [`check_strategy_consistency`]) is that regret matching
//! over the composed tensor equals the product of per-agent regret-matching
//! distributions, so a team can act by sampling each agent independently
//! without materializing the joint action space.

use crate::game::JointAction;
use crate::games::TinyMatrix;
use crate::regret::regret_matching;

/// Per-agent non-negative cumulative regret vectors at one team infoset.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualRegretProfile {
    vectors: Vec<Vec<f64>>,
}

impl IndividualRegretProfile {
    /// Panics when a vector is empty or an entry is negative: the
    /// decomposition is defined in the regret-matching+ regime only.
    pub fn new(vectors: Vec<Vec<f64>>) -> Self {
        assert!(!vectors.is_empty(), "profile needs at least one agent");
        for (i, v) in vectors.iter().enumerate() {
            assert!(!v.is_empty(), "agent {i} has no actions");
            assert!(
                v.iter().all(|&r| r >= 0.0 && r.is_finite()),
                "agent {i} has a negative or non-finite regret"
            );
        }
        IndividualRegretProfile { vectors }
    }

    pub fn num_agents(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.vectors.iter().map(|v| v.len()).collect()
    }
}

/// Dense non-negative tensor over joint actions, row-major in agent order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointRegretTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl JointRegretTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Self {
        let cells: usize = dims.iter().product();
        assert_eq!(data.len(), cells, "tensor shape mismatch");
        assert!(data.iter().all(|&v| v >= 0.0), "tensor entries must be >= 0");
        JointRegretTensor { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Entry at a joint action given by per-agent action ids.
    pub fn value(&self, ids: &[usize]) -> f64 {
        self.data[JointAction::from_ids(ids).flat_index(&self.dims)]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Composes the joint regret tensor from per-agent vectors:
/// `tensor[a_1, ..., a_n] = prod_i R_i[a_i]`.
pub fn compose_joint_regret(profile: &IndividualRegretProfile) -> JointRegretTensor {
    let dims = profile.action_counts();
    let cells: usize = dims.iter().product();
    let mut data = Vec::with_capacity(cells);
    let mut ids = vec![0usize; dims.len()];
    loop {
        let mut prod = 1.0;
        for (agent, &a) in ids.iter().enumerate() {
            prod *= profile.vectors[agent][a];
        }
        data.push(prod);
        let mut pos = dims.len();
        loop {
            if pos == 0 {
                return JointRegretTensor { dims, data };
            }
            pos -= 1;
            ids[pos] += 1;
            if ids[pos] < dims[pos] {
                break;
            }
            ids[pos] = 0;
        }
    }
}

/// Regret matching over the flattened tensor: the joint strategy, uniform
/// over all joint actions when the tensor sums to zero.
pub fn joint_strategy(tensor: &JointRegretTensor) -> Vec<f64> {
    regret_matching(&tensor.data)
}

/// Per-agent strategies by independent regret matching.
pub fn individual_strategies(profile: &IndividualRegretProfile) -> Vec<Vec<f64>> {
    profile.vectors.iter().map(|v| regret_matching(v)).collect()
}

/// Max deviation over joint actions between the joint strategy of the
/// composed tensor and the product of per-agent strategies. The product-form
/// decomposition makes this zero up to float rounding whenever every agent
/// vector has a positive sum, or all of them are zero (uniform on both
/// sides). The mixed case - some agent all-zero while others are positive -
/// sits outside the regret-consistency side condition: both sides fall back
/// to regret matching's uniform convention and the reported deviation can be
/// positive.
pub fn check_strategy_consistency(profile: &IndividualRegretProfile) -> f64 {
    let tensor = compose_joint_regret(profile);
    let joint = joint_strategy(&tensor);
    let individual = individual_strategies(profile);
    let dims = profile.action_counts();
    let mut max_dev: f64 = 0.0;
    for (flat, &joint_prob) in joint.iter().enumerate() {
        let ids = JointAction::from_flat_index(flat, &dims).ids();
        let mut prod = 1.0;
        for (agent, &a) in ids.iter().enumerate() {
            prod *= individual[agent][a];
        }
        max_dev = max_dev.max((joint_prob - prod).abs());
    }
    max_dev
}

/// Result of the decomposable team-maxmin grid search.
#[derive(Debug, Clone)]
pub struct DecomposableMaxmin {
    /// Best product strategy found (per-agent probability vectors).
    pub strategy: Vec<Vec<f64>>,
    /// Its exact value against a best-responding adversary.
    pub value: f64,
}

/// Upper/lower bounds on the unrestricted (joint-strategy) team maxmin value.
#[derive(Debug, Clone, Copy)]
pub struct JointMaxminBounds {
    /// Exact value of the best team average strategy found: a lower bound.
    pub lower: f64,
    /// Exact team best-response value against the adversary average
    /// strategy: an upper bound.
    pub upper: f64,
}

impl JointMaxminBounds {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Enumerates all probability vectors over `arity` actions whose entries are
/// multiples of `1/steps`.
fn simplex_grid(arity: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(arity: usize, remaining: usize, steps: usize, prefix: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if arity == 1 {
            prefix.push(remaining as f64 / steps as f64);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k as f64 / steps as f64);
            rec(arity - 1, remaining - k, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(arity, steps, steps, &mut Vec::new(), &mut out);
    out
}

const GRID_BUDGET: u128 = 40_000_000;

/// Grid search over product team strategies at the given simplex resolution,
/// with exact adversary best response per candidate and one local refinement
/// pass around the best point. Errors when the grid exceeds the budget.
pub fn decomposable_maxmin_oracle(
    game: &TinyMatrix,
    resolution: f64,
) -> Result<DecomposableMaxmin, String> {
    assert!(resolution > 0.0 && resolution <= 1.0);
    let steps = (1.0 / resolution).round() as usize;
    let grids: Vec<Vec<Vec<f64>>> = game
        .spec()
        .actions_per_agent
        .iter()
        .map(|&a| simplex_grid(a, steps))
        .collect();
    let combos: u128 = grids.iter().map(|g| g.len() as u128).product();
    if combos > GRID_BUDGET {
        return Err(format!(
            "grid search needs {combos} candidates, budget is {GRID_BUDGET}; coarsen the resolution"
        ));
    }

    let mut best_value = f64::NEG_INFINITY;
    let mut best: Vec<Vec<f64>> = Vec::new();
    let mut ids = vec![0usize; grids.len()];
    let mut candidate: Vec<Vec<f64>> = ids
        .iter()
        .enumerate()
        .map(|(i, &k)| grids[i][k].clone())
        .collect();
    loop {
        let value = game.team_value_vs_best_response(&candidate);
        if value > best_value {
            best_value = value;
            best = candidate.clone();
        }
        let mut pos = grids.len();
        let advanced = loop {
            if pos == 0 {
                break false;
            }
            pos -= 1;
            ids[pos] += 1;
            if ids[pos] < grids[pos].len() {
                candidate[pos] = grids[pos][ids[pos]].clone();
                break true;
            }
            ids[pos] = 0;
            candidate[pos] = grids[pos][0].clone();
        };
        if !advanced {
            break;
        }
    }

    // Local refinement: coordinate-wise probability shifts at a finer step.
    let mut strategy = best;
    let mut value = best_value;
    let mut step = resolution / 2.0;
    while step > resolution / 64.0 {
        let mut improved = false;
        for agent in 0..strategy.len() {
            let arity = strategy[agent].len();
            for from in 0..arity {
                for to in 0..arity {
                    if from == to || strategy[agent][from] < step {
                        continue;
                    }
                    let mut probe = strategy.clone();
                    probe[agent][from] -= step;
                    probe[agent][to] += step;
                    let v = game.team_value_vs_best_response(&probe);
                    if v > value {
                        value = v;
                        strategy = probe;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }

    Ok(DecomposableMaxmin { strategy, value })
}

/// Bounds the unrestricted team maxmin value of the one-shot game by running
/// regret-matching+ self-play over the enumerated joint action space and
/// keeping exact best-response bounds around the average strategies.
pub fn joint_maxmin_bounds(game: &TinyMatrix, iterations: usize) -> JointMaxminBounds {
    let spec = game.spec();
    let counts = spec.actions_per_agent.clone();
    let num_joint: usize = counts.iter().product();
    let num_adv = spec.adversary_actions;

    // payoff[joint][adv] for the team
    let payoff: Vec<Vec<f64>> = (0..num_joint)
        .map(|j| {
            let ids = JointAction::from_flat_index(j, &counts).ids();
            (0..num_adv).map(|b| game.payoff(&ids, b)).collect()
        })
        .collect();

    let mut team_regret = vec![0.0f64; num_joint];
    let mut adv_regret = vec![0.0f64; num_adv];
    let mut team_avg = vec![0.0f64; num_joint];
    let mut adv_avg = vec![0.0f64; num_adv];

    // Alternating regret-matching+ with linear averaging converges fast on
    // matrix games; the bounds below stay exact regardless.
    for t in 1..=iterations {
        let w = t as f64;
        let adv_strategy = regret_matching(&adv_regret);
        let team_values: Vec<f64> = (0..num_joint)
            .map(|j| (0..num_adv).map(|b| adv_strategy[b] * payoff[j][b]).sum())
            .collect();
        let team_strategy = regret_matching(&team_regret);
        let team_ev: f64 = team_values.iter().zip(&team_strategy).map(|(v, p)| v * p).sum();
        for (r, v) in team_regret.iter_mut().zip(&team_values) {
            *r = (*r + (v - team_ev)).max(0.0);
        }

        let team_strategy = regret_matching(&team_regret);
        let adv_values: Vec<f64> = (0..num_adv)
            .map(|b| (0..num_joint).map(|j| team_strategy[j] * payoff[j][b]).sum())
            .collect();
        let adv_ev: f64 = adv_values.iter().zip(&adv_strategy).map(|(v, p)| v * p).sum();
        for (r, v) in adv_regret.iter_mut().zip(&adv_values) {
            *r = (*r + (adv_ev - v)).max(0.0);
        }

        for (avg, p) in team_avg.iter_mut().zip(&team_strategy) {
            *avg += w * p;
        }
        for (avg, p) in adv_avg.iter_mut().zip(&regret_matching(&adv_regret)) {
            *avg += w * p;
        }
    }

    let team_total: f64 = team_avg.iter().sum();
    let adv_total: f64 = adv_avg.iter().sum();
    let team_mixed: Vec<f64> = team_avg.iter().map(|v| v / team_total).collect();
    let adv_mixed: Vec<f64> = adv_avg.iter().map(|v| v / adv_total).collect();

    // Exact bounds: any team strategy's guaranteed value lower-bounds the
    // maxmin; the best reply value against any adversary strategy upper-bounds it.
    let lower = (0..num_adv)
        .map(|b| (0..num_joint).map(|j| team_mixed[j] * payoff[j][b]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let upper = (0..num_joint)
        .map(|j| (0..num_adv).map(|b| adv_mixed[b] * payoff[j][b]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    JointMaxminBounds { lower, upper }
}
