//! One-shot calibration game: the team picks a joint action in secret, the
//! adversary picks an action without observing it, and the game ends. The
//! joint strategy space is small enough for exhaustive best-response and
//! equilibrium oracles.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::game::{Game, GameState, InfoSetKey, LegalActions, Move, PlayerId};
use crate::games::SpecError;

/// Spec for the calibration game. The payoff tensor holds team utilities in
/// row-major order over (agent 0 action, .., agent n-1 action, adversary
/// action); the adversary receives the negation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TinyMatrixSpec {
    pub actions_per_agent: Vec<usize>,
    pub adversary_actions: usize,
    pub payoff: Vec<f64>,
}

impl TinyMatrixSpec {
    pub fn new(
        actions_per_agent: Vec<usize>,
        adversary_actions: usize,
        payoff: Vec<f64>,
    ) -> Result<Self, SpecError> {
        let spec = TinyMatrixSpec {
            actions_per_agent,
            adversary_actions,
            payoff,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Matching pennies: one team agent, two actions each side.
    pub fn matching_pennies() -> Self {
        TinyMatrixSpec {
            actions_per_agent: vec![2],
            adversary_actions: 2,
            payoff: vec![1.0, -1.0, -1.0, 1.0],
        }
    }

    fn validate(&self) -> Result<(), SpecError> {
        let n = self.actions_per_agent.len();
        if n == 0 || n > 3 {
            return Err(SpecError::invalid(format!(
                "team size must be 1..=3, got {n}"
            )));
        }
        if self.actions_per_agent.iter().any(|&a| a == 0 || a > 3) {
            return Err(SpecError::invalid(
                "per-agent action counts must be 1..=3",
            ));
        }
        if self.adversary_actions == 0 || self.adversary_actions > 4 {
            return Err(SpecError::invalid(
                "adversary action count must be 1..=4",
            ));
        }
        let cells: usize =
            self.actions_per_agent.iter().product::<usize>() * self.adversary_actions;
        if self.payoff.len() != cells {
            return Err(SpecError::invalid(format!(
                "payoff tensor has {} entries, expected {cells}",
                self.payoff.len()
            )));
        }
        if self.payoff.iter().any(|v| !v.is_finite()) {
            return Err(SpecError::invalid("payoff tensor has non-finite entries"));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Inner {
    spec: TinyMatrixSpec,
    utility_range: f64,
    max_actions: usize,
}

/// The calibration game. See [`TinyMatrixSpec`].
#[derive(Debug, Clone)]
pub struct TinyMatrix {
    inner: Arc<Inner>,
}

impl TinyMatrix {
    pub fn new(spec: TinyMatrixSpec) -> Result<Self, SpecError> {
        spec.validate()?;
        let lo = spec.payoff.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = spec.payoff.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let max_actions = spec
            .actions_per_agent
            .iter()
            .copied()
            .chain([spec.adversary_actions])
            .max()
            .unwrap();
        Ok(TinyMatrix {
            inner: Arc::new(Inner {
                utility_range: (hi - lo).max(f64::MIN_POSITIVE),
                max_actions,
                spec,
            }),
        })
    }

    pub fn spec(&self) -> &TinyMatrixSpec {
        &self.inner.spec
    }

    /// Team payoff for a pure profile (per-agent action ids, adversary action).
    pub fn payoff(&self, team: &[usize], adversary: usize) -> f64 {
        let spec = &self.inner.spec;
        debug_assert_eq!(team.len(), spec.actions_per_agent.len());
        let mut idx = 0;
        for (a, &n) in team.iter().zip(&spec.actions_per_agent) {
            debug_assert!(*a < n);
            idx = idx * n + a;
        }
        spec.payoff[idx * spec.adversary_actions + adversary]
    }

    /// Expected team payoff under a product team strategy and an adversary
    /// pure action.
    pub fn expected_payoff_vs_pure(&self, team_strategy: &[Vec<f64>], adversary: usize) -> f64 {
        let counts = &self.inner.spec.actions_per_agent;
        let mut total = 0.0;
        let mut ids = vec![0usize; counts.len()];
        loop {
            let mut prob = 1.0;
            for (i, &a) in ids.iter().enumerate() {
                prob *= team_strategy[i][a];
            }
            if prob > 0.0 {
                total += prob * self.payoff(&ids, adversary);
            }
            let mut pos = counts.len();
            loop {
                if pos == 0 {
                    return total;
                }
                pos -= 1;
                ids[pos] += 1;
                if ids[pos] < counts[pos] {
                    break;
                }
                ids[pos] = 0;
            }
        }
    }

    /// Exact value of a product team strategy: its expected payoff against a
    /// best-responding adversary.
    pub fn team_value_vs_best_response(&self, team_strategy: &[Vec<f64>]) -> f64 {
        (0..self.inner.spec.adversary_actions)
            .map(|b| self.expected_payoff_vs_pure(team_strategy, b))
            .fold(f64::INFINITY, f64::min)
    }
}

/// State of the calibration game: pending team move, then adversary move.
#[derive(Debug, Clone)]
pub struct TinyMatrixState {
    inner: Arc<Inner>,
    team_move: Option<Vec<usize>>,
    adversary_move: Option<usize>,
}

impl GameState for TinyMatrixState {
    fn player(&self) -> PlayerId {
        match (&self.team_move, self.adversary_move) {
            (None, _) => PlayerId::Team,
            (Some(_), None) => PlayerId::Adversary,
            _ => panic!("player() on terminal state"),
        }
    }

    fn is_terminal(&self) -> bool {
        self.team_move.is_some() && self.adversary_move.is_some()
    }

    fn team_utility(&self) -> f64 {
        assert!(self.is_terminal(), "utility on non-terminal state");
        let team = self.team_move.as_ref().unwrap();
        let spec = &self.inner.spec;
        let mut idx = 0;
        for (a, &n) in team.iter().zip(&spec.actions_per_agent) {
            idx = idx * n + a;
        }
        spec.payoff[idx * spec.adversary_actions + self.adversary_move.unwrap()]
    }

    fn legal_actions(&self) -> LegalActions {
        match self.player() {
            PlayerId::Team => LegalActions::PerAgent(
                self.inner
                    .spec
                    .actions_per_agent
                    .iter()
                    .map(|&n| (0..n).collect())
                    .collect(),
            ),
            PlayerId::Adversary => {
                LegalActions::Single((0..self.inner.spec.adversary_actions).collect())
            }
            PlayerId::Chance => unreachable!(),
        }
    }

    fn chance_outcomes(&self) -> Vec<(usize, f64)> {
        panic!("tiny matrix game has no chance nodes");
    }

    fn apply(&self, mv: &Move) -> Self {
        let mut next = self.clone();
        match (self.player(), mv) {
            (PlayerId::Team, Move::Joint(joint)) => {
                let counts = &self.inner.spec.actions_per_agent;
                assert_eq!(
                    joint.num_agents(),
                    counts.len(),
                    "joint action has wrong agent count"
                );
                for c in joint.components() {
                    assert!(
                        c.action < counts[c.agent],
                        "illegal action {} for agent {}",
                        c.action,
                        c.agent
                    );
                }
                next.team_move = Some(joint.ids());
            }
            (PlayerId::Adversary, Move::Single(a)) => {
                assert!(
                    *a < self.inner.spec.adversary_actions,
                    "illegal adversary action {a}"
                );
                next.adversary_move = Some(*a);
            }
            (p, m) => panic!("move {m:?} does not match acting player {p}"),
        }
        next
    }

    fn infoset_key(&self) -> InfoSetKey {
        // One infoset per side: the adversary never observes the team move.
        InfoSetKey::new(self.player(), Vec::new())
    }
}

impl Game for TinyMatrix {
    type State = TinyMatrixState;

    fn initial_state(&self) -> TinyMatrixState {
        TinyMatrixState {
            inner: Arc::clone(&self.inner),
            team_move: None,
            adversary_move: None,
        }
    }

    fn num_agents(&self) -> usize {
        self.inner.spec.actions_per_agent.len()
    }

    fn utility_range(&self) -> f64 {
        self.inner.utility_range
    }

    fn encoding_len(&self) -> usize {
        1 + self.num_agents() + self.inner.max_actions
    }

    fn encode(&self, key: &InfoSetKey, agent: usize, action: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.encoding_len());
        out.fill(0.0);
        out[0] = 1.0;
        if key.player == PlayerId::Team {
            out[1 + agent] = 1.0;
        }
        out[1 + self.num_agents() + action] = 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_is_team_decision_node() {
        let game = TinyMatrix::new(TinyMatrixSpec::matching_pennies()).unwrap();
        let root = game.initial_state();
        assert!(!root.is_terminal());
        assert_eq!(root.player(), PlayerId::Team);
    }

    #[test]
    fn play_through_is_zero_sum_and_immutable() {
        let game = TinyMatrix::new(TinyMatrixSpec::matching_pennies()).unwrap();
        let root = game.initial_state();
        let after_team = root.apply(&Move::joint(&[0]));
        assert_eq!(root.player(), PlayerId::Team, "parent unchanged");
        assert_eq!(after_team.player(), PlayerId::Adversary);
        let terminal = after_team.apply(&Move::Single(1));
        assert!(terminal.is_terminal());
        assert_eq!(terminal.utility(PlayerId::Team), -1.0);
        assert_eq!(terminal.utility(PlayerId::Adversary), 1.0);
    }

    #[test]
    fn identity_payoff_has_dominant_joint_action() {
        // 1 agent x 2 actions vs 2 adversary actions; action 0 dominates for
        // the team only when it pays more under both adversary replies.
        let spec =
            TinyMatrixSpec::new(vec![2], 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let game = TinyMatrix::new(spec).unwrap();
        assert!(game.team_value_vs_best_response(&[vec![1.0, 0.0]]) > 0.99);
        assert!(game.team_value_vs_best_response(&[vec![0.0, 1.0]]) < 0.01);
    }

    #[test]
    fn payoff_indexing_matches_tensor_layout() {
        // 2 agents x 2 actions, 2 adversary actions, distinct entries.
        let payoff: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let game = TinyMatrix::new(TinyMatrixSpec::new(vec![2, 2], 2, payoff).unwrap()).unwrap();
        // index = ((a0*2 + a1)*2 + b)
        assert_eq!(game.payoff(&[0, 0], 0), 0.0);
        assert_eq!(game.payoff(&[0, 1], 1), 3.0);
        assert_eq!(game.payoff(&[1, 0], 0), 4.0);
        assert_eq!(game.payoff(&[1, 1], 1), 7.0);
    }

    #[test]
    fn spec_validation_rejects_bad_tensor() {
        assert!(TinyMatrixSpec::new(vec![2], 2, vec![0.0; 3]).is_err());
        assert!(TinyMatrixSpec::new(vec![], 2, vec![]).is_err());
        assert!(TinyMatrixSpec::new(vec![5], 2, vec![0.0; 10]).is_err());
    }

    #[test]
    fn adversary_has_single_hidden_infoset() {
        let game = TinyMatrix::new(TinyMatrixSpec::matching_pennies()).unwrap();
        let root = game.initial_state();
        let k0 = root.apply(&Move::joint(&[0])).infoset_key();
        let k1 = root.apply(&Move::joint(&[1])).infoset_key();
        assert_eq!(k0, k1, "adversary must not observe the team move");
    }
}
