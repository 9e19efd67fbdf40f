//! NEST grid pursuit-evasion: a team of pursuers with a tracking device
//! chases an evader on a graph. Per step the evader commits a move, then all
//! pursuers commit theirs, and both resolve simultaneously. Capture happens
//! when the evader shares a node with a pursuer after resolution or swaps an
//! edge with one. The team wins (+1) on capture or when the evader fails to
//! reach an exit within the step limit; it loses (-1) when the evader exits.
//!
//! Observation rule: pursuers observe everything including the evader's
//! current location; the evader observes only its own position and the
//! elapsed steps.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::game::{Game, GameState, InfoSetKey, LegalActions, Move, PlayerId};
use crate::games::SpecError;

/// Node layout of the pursuit network.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NestTopology {
    /// Grid where each node connects to its 4-neighbors.
    Grid { width: usize, height: usize },
    /// Explicit undirected edge list over nodes 0..n.
    Graph { edges: Vec<(usize, usize)> },
}

impl NestTopology {
    /// Parses a plain-text adjacency file: one `u v` edge per line; blank
    /// lines and `#` comments allowed.
    pub fn from_edge_list(text: &str) -> Result<Self, SpecError> {
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize, SpecError> {
                tok.ok_or_else(|| SpecError::GraphParse {
                    line: i + 1,
                    reason: "expected `u v`".into(),
                })?
                .parse()
                .map_err(|e| SpecError::GraphParse {
                    line: i + 1,
                    reason: format!("bad node id: {e}"),
                })
            };
            let u = parse(parts.next())?;
            let v = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(SpecError::GraphParse {
                    line: i + 1,
                    reason: "trailing tokens".into(),
                });
            }
            edges.push((u, v));
        }
        Ok(NestTopology::Graph { edges })
    }

    pub fn from_edge_list_file(path: &Path) -> Result<Self, SpecError> {
        Self::from_edge_list(&std::fs::read_to_string(path)?)
    }

    fn build_adjacency(&self) -> Result<Vec<Vec<usize>>, SpecError> {
        match self {
            NestTopology::Grid { width, height } => {
                if *width == 0 || *height == 0 {
                    return Err(SpecError::invalid("grid dimensions must be positive"));
                }
                let n = width * height;
                let mut adj = vec![Vec::new(); n];
                for y in 0..*height {
                    for x in 0..*width {
                        let u = y * width + x;
                        if x + 1 < *width {
                            adj[u].push(u + 1);
                            adj[u + 1].push(u);
                        }
                        if y + 1 < *height {
                            adj[u].push(u + width);
                            adj[u + width].push(u);
                        }
                    }
                }
                for list in &mut adj {
                    list.sort_unstable();
                }
                Ok(adj)
            }
            NestTopology::Graph { edges } => {
                if edges.is_empty() {
                    return Err(SpecError::invalid("graph has no edges"));
                }
                let n = edges.iter().map(|&(u, v)| u.max(v)).max().unwrap() + 1;
                let mut adj = vec![Vec::new(); n];
                for &(u, v) in edges {
                    if u == v {
                        return Err(SpecError::invalid(format!("self loop at node {u}")));
                    }
                    adj[u].push(v);
                    adj[v].push(u);
                }
                for list in &mut adj {
                    list.sort_unstable();
                    list.dedup();
                }
                Ok(adj)
            }
        }
    }
}

/// Spec for a NEST game.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NestSpec {
    pub topology: NestTopology,
    pub pursuers: usize,
    pub exits: Vec<usize>,
    pub step_limit: usize,
}

impl NestSpec {
    pub fn grid(
        width: usize,
        height: usize,
        pursuers: usize,
        exits: Vec<usize>,
        step_limit: usize,
    ) -> Self {
        NestSpec {
            topology: NestTopology::Grid { width, height },
            pursuers,
            exits,
            step_limit,
        }
    }
}

#[derive(Debug)]
struct Inner {
    spec: NestSpec,
    adjacency: Vec<Vec<usize>>,
    exit_mask: Vec<bool>,
    num_nodes: usize,
}

/// The NEST pursuit game. See [`NestSpec`].
#[derive(Debug, Clone)]
pub struct Nest {
    inner: Arc<Inner>,
}

impl Nest {
    pub fn new(spec: NestSpec) -> Result<Self, SpecError> {
        let adjacency = spec.topology.build_adjacency()?;
        let num_nodes = adjacency.len();
        if num_nodes > 256 {
            return Err(SpecError::invalid("at most 256 nodes supported"));
        }
        if spec.pursuers == 0 {
            return Err(SpecError::invalid("need at least one pursuer"));
        }
        if spec.step_limit == 0 {
            return Err(SpecError::invalid("step limit must be >= 1"));
        }
        if spec.exits.is_empty() {
            return Err(SpecError::invalid("need at least one exit"));
        }
        let mut exit_mask = vec![false; num_nodes];
        for &e in &spec.exits {
            if e >= num_nodes {
                return Err(SpecError::invalid(format!("exit {e} out of range")));
            }
            if let NestTopology::Grid { width, height } = spec.topology {
                let (x, y) = (e % width, e / width);
                let boundary = x == 0 || y == 0 || x == width - 1 || y == height - 1;
                if !boundary {
                    return Err(SpecError::invalid(format!(
                        "exit {e} is not a boundary node"
                    )));
                }
            }
            exit_mask[e] = true;
        }
        Ok(Nest {
            inner: Arc::new(Inner {
                spec,
                adjacency,
                exit_mask,
                num_nodes,
            }),
        })
    }

    pub fn spec(&self) -> &NestSpec {
        &self.inner.spec
    }

    pub fn num_nodes(&self) -> usize {
        self.inner.num_nodes
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.inner.adjacency[node]
    }
}

/// Remaining chance placements, live play, or a resolved game.
#[derive(Debug, Clone, PartialEq)]
enum Phase {
    /// Next placement: 0 places the evader, 1..=P places pursuer i-1.
    Placement(usize),
    Playing,
    Done(f64),
}

/// Immutable NEST history.
#[derive(Debug, Clone)]
pub struct NestState {
    inner: Arc<Inner>,
    phase: Phase,
    evader: usize,
    pursuers: Vec<usize>,
    /// Evader's committed target node, hidden until the team resolves.
    pending_evader: Option<usize>,
    step: usize,
}

impl NestState {
    pub fn evader(&self) -> usize {
        self.evader
    }

    pub fn pursuers(&self) -> &[usize] {
        &self.pursuers
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Move target for an action id at `node`: 0 stays, k moves to the k-th
    /// sorted neighbor.
    fn move_target(&self, node: usize, action: usize) -> usize {
        if action == 0 {
            node
        } else {
            self.inner.adjacency[node][action - 1]
        }
    }

    fn move_count(&self, node: usize) -> usize {
        1 + self.inner.adjacency[node].len()
    }

    /// Capture/exit/timeout resolution shared by placement and live steps.
    fn resolve_position(&mut self, captured: bool) {
        if captured {
            self.phase = Phase::Done(1.0);
        } else if self.inner.exit_mask[self.evader] {
            self.phase = Phase::Done(-1.0);
        } else if self.step >= self.inner.spec.step_limit {
            self.phase = Phase::Done(1.0);
        }
    }
}

impl GameState for NestState {
    fn player(&self) -> PlayerId {
        match self.phase {
            Phase::Placement(_) => PlayerId::Chance,
            Phase::Playing => {
                if self.pending_evader.is_none() {
                    PlayerId::Adversary
                } else {
                    PlayerId::Team
                }
            }
            Phase::Done(_) => panic!("player() on terminal state"),
        }
    }

    fn is_terminal(&self) -> bool {
        matches!(self.phase, Phase::Done(_))
    }

    fn team_utility(&self) -> f64 {
        match self.phase {
            Phase::Done(u) => u,
            _ => panic!("utility on non-terminal state"),
        }
    }

    fn legal_actions(&self) -> LegalActions {
        match self.player() {
            PlayerId::Chance => LegalActions::Single((0..self.inner.num_nodes).collect()),
            PlayerId::Adversary => {
                LegalActions::Single((0..self.move_count(self.evader)).collect())
            }
            PlayerId::Team => LegalActions::PerAgent(
                self.pursuers
                    .iter()
                    .map(|&p| (0..self.move_count(p)).collect())
                    .collect(),
            ),
        }
    }

    fn chance_outcomes(&self) -> Vec<(usize, f64)> {
        assert_eq!(self.player(), PlayerId::Chance);
        let n = self.inner.num_nodes;
        (0..n).map(|i| (i, 1.0 / n as f64)).collect()
    }

    fn apply(&self, mv: &Move) -> Self {
        let mut next = self.clone();
        match (&self.phase, mv) {
            (Phase::Placement(k), Move::Single(node)) => {
                assert!(*node < self.inner.num_nodes, "illegal placement {node}");
                if *k == 0 {
                    next.evader = *node;
                } else {
                    next.pursuers[*k - 1] = *node;
                }
                if *k + 1 <= self.inner.spec.pursuers {
                    next.phase = Phase::Placement(*k + 1);
                } else {
                    next.phase = Phase::Playing;
                    let captured = next.pursuers.iter().any(|&p| p == next.evader);
                    next.resolve_position(captured);
                }
            }
            (Phase::Playing, Move::Single(action)) => {
                assert!(self.pending_evader.is_none(), "evader already committed");
                assert!(
                    *action < self.move_count(self.evader),
                    "illegal evader action {action}"
                );
                next.pending_evader = Some(self.move_target(self.evader, *action));
            }
            (Phase::Playing, Move::Joint(joint)) => {
                let old_evader = self.evader;
                let new_evader = self
                    .pending_evader
                    .expect("team cannot act before the evader commits");
                assert_eq!(
                    joint.num_agents(),
                    self.pursuers.len(),
                    "joint action has wrong agent count"
                );
                let mut captured = false;
                for c in joint.components() {
                    let from = self.pursuers[c.agent];
                    assert!(
                        c.action < self.move_count(from),
                        "illegal action {} for pursuer {}",
                        c.action,
                        c.agent
                    );
                    let to = self.move_target(from, c.action);
                    // co-location or edge swap
                    captured |= to == new_evader || (to == old_evader && from == new_evader);
                    next.pursuers[c.agent] = to;
                }
                next.evader = new_evader;
                next.pending_evader = None;
                next.step += 1;
                next.resolve_position(captured);
            }
            (phase, m) => panic!("move {m:?} invalid in phase {phase:?}"),
        }
        next
    }

    fn infoset_key(&self) -> InfoSetKey {
        let player = self.player();
        match player {
            PlayerId::Adversary => InfoSetKey::new(
                player,
                vec![self.step as u8, self.evader as u8],
            ),
            PlayerId::Team => {
                let mut bytes = Vec::with_capacity(2 + self.pursuers.len());
                bytes.push(self.step as u8);
                bytes.push(self.evader as u8);
                bytes.extend(self.pursuers.iter().map(|&p| p as u8));
                InfoSetKey::new(player, bytes)
            }
            PlayerId::Chance => panic!("chance nodes have no infoset"),
        }
    }
}

impl Game for Nest {
    type State = NestState;

    fn initial_state(&self) -> NestState {
        NestState {
            inner: Arc::clone(&self.inner),
            phase: Phase::Placement(0),
            evader: 0,
            pursuers: vec![0; self.inner.spec.pursuers],
            pending_evader: None,
            step: 0,
        }
    }

    fn num_agents(&self) -> usize {
        self.inner.spec.pursuers
    }

    fn encoding_len(&self) -> usize {
        let n = self.inner.num_nodes;
        let p = self.inner.spec.pursuers;
        2 + (p + 2) * n + p
    }

    fn encode(&self, key: &InfoSetKey, agent: usize, action: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.encoding_len());
        out.fill(0.0);
        let n = self.inner.num_nodes;
        let p = self.inner.spec.pursuers;
        let step = key.bytes[0] as usize;
        let evader = key.bytes[1] as usize;
        out[0] = 1.0;
        out[1] = step as f64 / self.inner.spec.step_limit as f64;
        out[2 + evader] = 1.0;
        let state = NestState {
            inner: Arc::clone(&self.inner),
            phase: Phase::Playing,
            evader,
            pursuers: vec![0; p],
            pending_evader: None,
            step,
        };
        let target_base = 2 + (p + 1) * n;
        match key.player {
            PlayerId::Team => {
                for (i, &b) in key.bytes[2..].iter().enumerate() {
                    out[2 + (i + 1) * n + b as usize] = 1.0;
                }
                let from = key.bytes[2 + agent] as usize;
                out[target_base + state.move_target(from, action)] = 1.0;
                out[target_base + n + agent] = 1.0;
            }
            PlayerId::Adversary => {
                out[target_base + state.move_target(evader, action)] = 1.0;
            }
            PlayerId::Chance => panic!("no encoding for chance"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn grid3x3_1v2() -> Nest {
        Nest::new(NestSpec::grid(3, 3, 2, vec![0, 2, 6, 8], 4)).unwrap()
    }

    #[test]
    fn root_is_chance_placement() {
        let game = grid3x3_1v2();
        let root = game.initial_state();
        assert_eq!(root.player(), PlayerId::Chance);
        let outcomes = root.chance_outcomes();
        assert_eq!(outcomes.len(), 9);
        let total: f64 = outcomes.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_pursuer_has_three_moves() {
        let game = grid3x3_1v2();
        // place evader at 4, pursuers at corners 0 and 8
        let s = game
            .initial_state()
            .apply(&Move::Single(4))
            .apply(&Move::Single(0))
            .apply(&Move::Single(8));
        assert_eq!(s.player(), PlayerId::Adversary);
        let s = s.apply(&Move::Single(0)); // evader stays
        match s.legal_actions() {
            LegalActions::PerAgent(per) => {
                assert_eq!(per[0].len(), 3); // corner: stay + 2 neighbors
                assert_eq!(per[1].len(), 3);
            }
            _ => panic!("team node expected"),
        }
    }

    #[test]
    fn co_located_placement_is_immediate_capture() {
        // 1x2 grid, 1 vs 1, pursuer lands on the evader's node.
        let game = Nest::new(NestSpec::grid(2, 1, 1, vec![1], 3)).unwrap();
        let s = game
            .initial_state()
            .apply(&Move::Single(0))
            .apply(&Move::Single(0));
        assert!(s.is_terminal());
        assert_eq!(s.team_utility(), 1.0);
        assert_eq!(s.utility(PlayerId::Adversary), -1.0);
    }

    #[test]
    fn evader_exit_scores_minus_one_for_team() {
        // 3x1 path, exit at node 2, evader starts adjacent to it.
        let game = Nest::new(NestSpec::grid(3, 1, 1, vec![2], 3)).unwrap();
        let s = game
            .initial_state()
            .apply(&Move::Single(1)) // evader at 1
            .apply(&Move::Single(0)); // pursuer at 0
        let s = s.apply(&Move::Single(2)); // evader commits move to node 2
        let s = s.apply(&Move::joint(&[0])); // pursuer stays
        assert!(s.is_terminal());
        assert_eq!(s.team_utility(), -1.0);
    }

    #[test]
    fn edge_swap_counts_as_capture() {
        let game = Nest::new(NestSpec::grid(4, 1, 1, vec![3], 5)).unwrap();
        // evader at 1, pursuer at 2; they swap along edge 1-2.
        let s = game
            .initial_state()
            .apply(&Move::Single(1))
            .apply(&Move::Single(2));
        let s = s.apply(&Move::Single(2)); // evader 1 -> 2 (neighbors of 1: [0,2], action 2)
        let s = s.apply(&Move::joint(&[1])); // pursuer 2 -> 1 (neighbors of 2: [1,3])
        assert!(s.is_terminal());
        assert_eq!(s.team_utility(), 1.0);
    }

    #[test]
    fn timeout_without_escape_is_team_win() {
        let game = Nest::new(NestSpec::grid(3, 1, 1, vec![0], 1)).unwrap();
        // evader at 2, pursuer at 0; one step passes without exit or capture.
        let s = game
            .initial_state()
            .apply(&Move::Single(2))
            .apply(&Move::Single(0));
        let s = s.apply(&Move::Single(0)); // evader stays
        let s = s.apply(&Move::joint(&[0])); // pursuer stays
        assert!(s.is_terminal());
        assert_eq!(s.team_utility(), 1.0);
    }

    #[test]
    fn paper_scale_instances_construct() {
        let g = grid3x3_1v2();
        assert_eq!(g.num_nodes(), 9);
        let big = Nest::new(NestSpec::grid(15, 15, 8, vec![0, 14, 210, 224], 20)).unwrap();
        assert_eq!(big.num_nodes(), 225);
        assert_eq!(big.num_agents(), 8);
        // 8 pursuers in the open: joint move count 5^8, reported not enumerated
        let s = big
            .initial_state()
            .apply(&Move::Single(112)) // evader center
            .apply(&Move::Single(16))
            .apply(&Move::Single(18))
            .apply(&Move::Single(46))
            .apply(&Move::Single(48))
            .apply(&Move::Single(76))
            .apply(&Move::Single(78))
            .apply(&Move::Single(106))
            .apply(&Move::Single(108))
            .apply(&Move::Single(0)); // evader commits stay
        assert_eq!(s.legal_actions().joint_count(), 5u128.pow(8));
    }

    #[test]
    fn evader_key_hides_pursuers_and_team_key_sees_all() {
        let game = grid3x3_1v2();
        let a = game
            .initial_state()
            .apply(&Move::Single(4))
            .apply(&Move::Single(0))
            .apply(&Move::Single(8));
        let b = game
            .initial_state()
            .apply(&Move::Single(4))
            .apply(&Move::Single(1))
            .apply(&Move::Single(7));
        assert_eq!(a.infoset_key(), b.infoset_key(), "evader ignores pursuers");
        let a_team = a.apply(&Move::Single(0)).infoset_key();
        let b_team = b.apply(&Move::Single(0)).infoset_key();
        assert_ne!(a_team, b_team, "pursuers observe their own positions");
        // pursuers do not observe the evader's pending commit
        let c1 = a.apply(&Move::Single(0)).infoset_key();
        let c2 = a.apply(&Move::Single(1)).infoset_key();
        assert_eq!(c1, c2);
    }

    #[test]
    fn exhaustive_reachable_states_stay_valid_and_bounded() {
        // Dedup BFS over distinct reachable states on 3x3 1v2 with limit 4.
        let game = grid3x3_1v2();
        let mut queue = vec![game.initial_state()];
        let mut seen: HashSet<Vec<u8>> = HashSet::new();
        let mut terminals = 0usize;
        while let Some(s) = queue.pop() {
            if s.is_terminal() {
                terminals += 1;
                continue;
            }
            assert!(s.step() <= 4, "game exceeded step limit");
            let sig = {
                let mut v = vec![s.step() as u8, s.evader as u8];
                v.extend(s.pursuers.iter().map(|&p| p as u8));
                v.push(match s.pending_evader {
                    None => 255,
                    Some(t) => t as u8,
                });
                v.push(match s.phase {
                    Phase::Placement(k) => k as u8,
                    Phase::Playing => 200,
                    Phase::Done(_) => 201,
                });
                v
            };
            if !seen.insert(sig) {
                continue;
            }
            assert!(s.evader < 9 && s.pursuers.iter().all(|&p| p < 9));
            for mv in s.legal_actions().enumerate_joint() {
                queue.push(s.apply(&mv));
            }
        }
        assert!(terminals > 0);
        assert!(seen.len() > 100);
    }

    #[test]
    fn edge_list_parsing_and_validation() {
        let topo = NestTopology::from_edge_list("0 1\n1 2\n# comment\n\n2 3\n").unwrap();
        let game = Nest::new(NestSpec {
            topology: topo,
            pursuers: 1,
            exits: vec![3],
            step_limit: 2,
        })
        .unwrap();
        assert_eq!(game.num_nodes(), 4);
        assert_eq!(game.neighbors(1), &[0, 2]);
        assert!(NestTopology::from_edge_list("0 x").is_err());
        assert!(NestTopology::from_edge_list("0 1 2").is_err());
        // center exit rejected on grids
        assert!(Nest::new(NestSpec::grid(3, 3, 1, vec![4], 2)).is_err());
    }
}
