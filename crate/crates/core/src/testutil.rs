//! Test support: a stub game whose encodings distinguish synthetic infoset
//! keys, for exercising networks and training on controlled targets without
//! a full game tree. Not part of the solver API.
#![doc(hidden)]

use crate::game::{Game, GameState, InfoSetKey, LegalActions, Move, PlayerId};

/// A game that only provides encodings. Feature layout: bias, `key_slots`
/// binary digits of the key id, agent one-hot, action one-hot.
#[derive(Debug, Clone)]
pub struct EncodingStub {
    pub num_agents: usize,
    pub max_actions: usize,
    pub key_slots: usize,
}

impl EncodingStub {
    pub fn new(num_agents: usize, max_actions: usize, key_slots: usize) -> Self {
        EncodingStub {
            num_agents,
            max_actions,
            key_slots,
        }
    }

    pub fn team_key(&self, id: u64) -> InfoSetKey {
        InfoSetKey::new(PlayerId::Team, id.to_le_bytes().to_vec())
    }
}

/// Placeholder state; the stub has no playable tree.
#[derive(Debug, Clone)]
pub struct StubState;

impl GameState for StubState {
    fn player(&self) -> PlayerId {
        unimplemented!("encoding stub has no game tree")
    }
    fn is_terminal(&self) -> bool {
        unimplemented!("encoding stub has no game tree")
    }
    fn team_utility(&self) -> f64 {
        unimplemented!("encoding stub has no game tree")
    }
    fn legal_actions(&self) -> LegalActions {
        unimplemented!("encoding stub has no game tree")
    }
    fn chance_outcomes(&self) -> Vec<(usize, f64)> {
        unimplemented!("encoding stub has no game tree")
    }
    fn apply(&self, _mv: &Move) -> Self {
        unimplemented!("encoding stub has no game tree")
    }
    fn infoset_key(&self) -> InfoSetKey {
        unimplemented!("encoding stub has no game tree")
    }
}

impl Game for EncodingStub {
    type State = StubState;

    fn initial_state(&self) -> StubState {
        StubState
    }

    fn num_agents(&self) -> usize {
        self.num_agents
    }

    fn encoding_len(&self) -> usize {
        1 + self.key_slots + self.num_agents + self.max_actions
    }

    fn encode(&self, key: &InfoSetKey, agent: usize, action: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.encoding_len());
        out.fill(0.0);
        out[0] = 1.0;
        let mut id = 0u64;
        for (i, &b) in key.bytes.iter().take(8).enumerate() {
            id |= (b as u64) << (8 * i);
        }
        for slot in 0..self.key_slots.min(64) {
            out[1 + slot] = ((id >> slot) & 1) as f64;
        }
        if key.player == PlayerId::Team {
            out[1 + self.key_slots + agent] = 1.0;
        }
        out[1 + self.key_slots + self.num_agents + action] = 1.0;
    }
}
