//! Abstract extensive-form game interface for team-adversary games.
//!
//! A game tree contains chance nodes, adversary decision nodes and team
//! decision nodes. The team is a set of agents acting simultaneously: a team
//! move is a joint action composed of one action per agent. Joint actions are
//! kept in factored form (one small-integer id per agent) and only enumerated
//! on demand, since their count is exponential in the number of agents.

use std::fmt;

/// The actor at a history: the single adversary, the whole team, or chance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlayerId {
    Adversary,
    Team,
    Chance,
}

impl PlayerId {
    /// The opposing decision player. Chance has no opponent.
    pub fn opponent(self) -> PlayerId {
        match self {
            PlayerId::Adversary => PlayerId::Team,
            PlayerId::Team => PlayerId::Adversary,
            PlayerId::Chance => panic!("chance has no opponent"),
        }
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlayerId::Adversary => write!(f, "adversary"),
            PlayerId::Team => write!(f, "team"),
            PlayerId::Chance => write!(f, "chance"),
        }
    }
}

/// One agent's component of a team move: the agent index and a small-integer
/// action id into that agent's legal action list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentAction {
    pub agent: usize,
    pub action: usize,
}

/// A team joint action: one [`AgentAction`] per agent, in fixed agent order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction {
    components: Vec<AgentAction>,
}

impl JointAction {
    /// Builds a joint action from per-agent action ids (index = agent).
    pub fn from_ids(ids: &[usize]) -> Self {
        JointAction {
            components: ids
                .iter()
                .enumerate()
                .map(|(agent, &action)| AgentAction { agent, action })
                .collect(),
        }
    }

    pub fn components(&self) -> &[AgentAction] {
        &self.components
    }

    pub fn num_agents(&self) -> usize {
        self.components.len()
    }

    /// Action id of a single agent.
    pub fn action_of(&self, agent: usize) -> usize {
        self.components[agent].action
    }

    /// Per-agent action ids in agent order.
    pub fn ids(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.action).collect()
    }

    /// Row-major flat index of this joint action given per-agent action counts.
    pub fn flat_index(&self, counts: &[usize]) -> usize {
        debug_assert_eq!(self.components.len(), counts.len());
        let mut idx = 0;
        for (c, &n) in self.components.iter().zip(counts) {
            debug_assert!(c.action < n, "component out of range");
            idx = idx * n + c.action;
        }
        idx
    }

    /// Inverse of [`JointAction::flat_index`].
    pub fn from_flat_index(mut idx: usize, counts: &[usize]) -> Self {
        let mut ids = vec![0usize; counts.len()];
        for agent in (0..counts.len()).rev() {
            ids[agent] = idx % counts[agent];
            idx /= counts[agent];
        }
        JointAction::from_ids(&ids)
    }
}

/// A move at a decision node: a flat action for the adversary (or a sampled
/// chance outcome), or a joint action for the team.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Move {
    Single(usize),
    Joint(JointAction),
}

impl Move {
    pub fn joint(ids: &[usize]) -> Move {
        Move::Joint(JointAction::from_ids(ids))
    }
}

/// Legal actions at a non-terminal history. Team actions stay factored: the
/// joint space is the cartesian product of the per-agent lists and is never
/// materialized unless [`LegalActions::enumerate_joint`] is called.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LegalActions {
    /// Flat action ids for the adversary or chance.
    Single(Vec<usize>),
    /// Per-agent action id lists for the team, in agent order.
    PerAgent(Vec<Vec<usize>>),
}

impl LegalActions {
    /// Number of moves at this node, computed without enumeration.
    pub fn joint_count(&self) -> u128 {
        match self {
            LegalActions::Single(v) => v.len() as u128,
            LegalActions::PerAgent(per) => {
                per.iter().map(|v| v.len() as u128).product()
            }
        }
    }

    /// Per-agent action counts (team nodes only).
    pub fn per_agent_counts(&self) -> Vec<usize> {
        match self {
            LegalActions::Single(v) => vec![v.len()],
            LegalActions::PerAgent(per) => per.iter().map(|v| v.len()).collect(),
        }
    }

    /// Materializes every joint action in row-major (odometer) order.
    /// Panics if the count does not fit in memory-sized `usize`.
    pub fn enumerate_joint(&self) -> Vec<Move> {
        match self {
            LegalActions::Single(v) => v.iter().map(|&a| Move::Single(a)).collect(),
            LegalActions::PerAgent(per) => {
                let count = self.joint_count();
                assert!(
                    count <= usize::MAX as u128,
                    "joint action space too large to enumerate: {count}"
                );
                let mut out = Vec::with_capacity(count as usize);
                let mut ids = vec![0usize; per.len()];
                loop {
                    out.push(Move::Joint(JointAction::from_ids(
                        &ids.iter()
                            .enumerate()
                            .map(|(i, &k)| per[i][k])
                            .collect::<Vec<_>>(),
                    )));
                    // odometer increment
                    let mut pos = per.len();
                    loop {
                        if pos == 0 {
                            return out;
                        }
                        pos -= 1;
                        ids[pos] += 1;
                        if ids[pos] < per[pos].len() {
                            break;
                        }
                        ids[pos] = 0;
                    }
                }
            }
        }
    }
}

/// Identity of an information set: the acting player plus a canonical byte
/// encoding of that player's observation history. All team agents share one
/// key per team decision point. Equal keys must imply equal legal-action
/// sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InfoSetKey {
    pub player: PlayerId,
    pub bytes: Vec<u8>,
}

impl InfoSetKey {
    pub fn new(player: PlayerId, bytes: Vec<u8>) -> Self {
        InfoSetKey { player, bytes }
    }
}

impl fmt::Display for InfoSetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.player)?;
        for b in &self.bytes {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// An immutable state of an extensive-form game.
///
/// States are cheap to clone and safe to share across traversal workers.
/// Applying a legal move yields a child state and leaves the parent
/// untouched.
pub trait GameState: Clone + Send + Sync {
    /// The acting player. Panics at terminal states.
    fn player(&self) -> PlayerId;

    fn is_terminal(&self) -> bool;

    /// Terminal utility from the team's perspective. Panics when called on a
    /// non-terminal state. The adversary's utility is the negation.
    fn team_utility(&self) -> f64;

    /// Legal actions at a non-terminal state. Panics at terminal states.
    fn legal_actions(&self) -> LegalActions;

    /// Outcome ids and probabilities at a chance node. Probabilities sum
    /// to 1. Panics at non-chance states.
    fn chance_outcomes(&self) -> Vec<(usize, f64)>;

    /// Child state after a legal move. Panics (naming the offending
    /// component) when the move is illegal.
    fn apply(&self, mv: &Move) -> Self;

    /// Information-set identity at a decision node (adversary or team).
    fn infoset_key(&self) -> InfoSetKey;

    /// Utility for a decision player at a terminal state.
    fn utility(&self, player: PlayerId) -> f64 {
        match player {
            PlayerId::Team => self.team_utility(),
            PlayerId::Adversary => -self.team_utility(),
            PlayerId::Chance => panic!("chance player has no utility"),
        }
    }
}

/// A team-adversary extensive-form game.
pub trait Game: Send + Sync {
    type State: GameState;

    /// Root history. Not terminal unless the game is trivial.
    fn initial_state(&self) -> Self::State;

    /// Number of team agents.
    fn num_agents(&self) -> usize;

    /// Width of the utility range Delta (max minus min team utility).
    fn utility_range(&self) -> f64 {
        2.0
    }

    /// Length of the fixed feature vector produced by [`Game::encode`].
    fn encoding_len(&self) -> usize;

    /// Writes the feature encoding of (infoset, agent, candidate action) into
    /// `out` (length [`Game::encoding_len`]). Deterministic: equal inputs
    /// produce identical vectors. For adversary keys the agent index is
    /// ignored.
    fn encode(&self, key: &InfoSetKey, agent: usize, action: usize, out: &mut [f64]);

    /// Convenience wrapper allocating the feature vector.
    fn encode_vec(&self, key: &InfoSetKey, agent: usize, action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.encoding_len()];
        self.encode(key, agent, action, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_action_flat_index_round_trip() {
        let counts = [3usize, 2, 4];
        for idx in 0..24 {
            let ja = JointAction::from_flat_index(idx, &counts);
            assert_eq!(ja.flat_index(&counts), idx);
        }
    }

    #[test]
    fn joint_count_without_enumeration() {
        // 4 agents with 10 cards each: 10^4 joint actions, never materialized.
        let legal = LegalActions::PerAgent(vec![(0..10).collect::<Vec<_>>(); 4]);
        assert_eq!(legal.joint_count(), 10_000);
        // 6 agents with 13 actions each.
        let legal = LegalActions::PerAgent(vec![(0..13).collect::<Vec<_>>(); 6]);
        assert_eq!(legal.joint_count(), 13u128.pow(6));
    }

    #[test]
    fn enumerate_joint_is_row_major() {
        let legal = LegalActions::PerAgent(vec![vec![0, 1], vec![5, 7]]);
        let moves = legal.enumerate_joint();
        assert_eq!(moves.len(), 4);
        assert_eq!(moves[0], Move::joint(&[0, 5]));
        assert_eq!(moves[1], Move::joint(&[0, 7]));
        assert_eq!(moves[2], Move::joint(&[1, 5]));
        assert_eq!(moves[3], Move::joint(&[1, 7]));
    }

    #[test]
    fn infoset_key_ordering_is_stable() {
        let a = InfoSetKey::new(PlayerId::Team, vec![1, 2]);
        let b = InfoSetKey::new(PlayerId::Team, vec![1, 3]);
        assert!(a < b);
        assert_eq!(a, a.clone());
    }
}
