//! Team Goofspiel: a bidding card game where several team agents and one
//! adversary secretly bid cards from their own hands on a stack of prize
//! cards. Only the result of each bid is observed, never the cards used.
//!
//! Rules follow the team reading of the classic game: every round the single
//! highest bid among all P+1 bids takes the prize for its side (the team
//! pools its wins) and an exact tie for the highest bid voids the prize.
//! After R rounds the side with more prize points wins; terminal team
//! utility is +1 / -1 / 0. The adversary holds one hand of C cards, each
//! team agent holds its own hand of C cards.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::game::{Game, GameState, InfoSetKey, LegalActions, Move, PlayerId};
use crate::games::SpecError;

/// Maximum number of prize-stack permutations enumerated at the root chance
/// node. When R! exceeds this cap the permutations are picked at evenly
/// spaced Lehmer ranks, so the chance outcome set stays deterministic.
pub const MAX_PRIZE_PERMUTATIONS: u64 = 24;

/// Ordering of the prize stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrizeOrder {
    /// Prizes revealed highest-first; no chance node.
    FixedDescending,
    /// A root chance node orders the stack (see [`MAX_PRIZE_PERMUTATIONS`]).
    ChanceShuffled,
}

/// Spec for team Goofspiel: C cards per hand, P team agents, R rounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GoofspielSpec {
    pub cards: usize,
    pub team_players: usize,
    pub rounds: usize,
    pub prize_order: PrizeOrder,
}

impl GoofspielSpec {
    pub fn new(
        cards: usize,
        team_players: usize,
        rounds: usize,
        prize_order: PrizeOrder,
    ) -> Result<Self, SpecError> {
        let spec = GoofspielSpec {
            cards,
            team_players,
            rounds,
            prize_order,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), SpecError> {
        if self.rounds < 1 || self.cards < self.rounds {
            return Err(SpecError::invalid(format!(
                "need cards >= rounds >= 1, got C={} R={}",
                self.cards, self.rounds
            )));
        }
        if self.cards > 16 {
            return Err(SpecError::invalid("at most 16 cards supported"));
        }
        if self.team_players < 1 {
            return Err(SpecError::invalid("team needs at least one player"));
        }
        Ok(())
    }
}

fn factorial(n: u64) -> u64 {
    (1..=n).product::<u64>().max(1)
}

/// Lehmer unranking: the `rank`-th permutation of 0..n in lexicographic order.
fn unrank_permutation(mut rank: u64, n: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let f = factorial(i as u64);
        let idx = (rank / f) as usize;
        rank %= f;
        out.push(pool.remove(idx));
    }
    out
}

#[derive(Debug)]
struct Inner {
    spec: GoofspielSpec,
    /// Realized prize-value sequences, one per chance outcome.
    prize_orders: Vec<Vec<u8>>,
    full_hand: u16,
}

/// Team Goofspiel. See [`GoofspielSpec`].
#[derive(Debug, Clone)]
pub struct Goofspiel {
    inner: Arc<Inner>,
}

impl Goofspiel {
    pub fn new(spec: GoofspielSpec) -> Result<Self, SpecError> {
        spec.validate()?;
        // Prize deck: the R highest card values, C down to C-R+1.
        let base: Vec<u8> = (0..spec.rounds)
            .map(|i| (spec.cards - i) as u8)
            .collect();
        let prize_orders = match spec.prize_order {
            PrizeOrder::FixedDescending => vec![base.clone()],
            PrizeOrder::ChanceShuffled => {
                let total = factorial(spec.rounds as u64);
                let count = total.min(MAX_PRIZE_PERMUTATIONS);
                (0..count)
                    .map(|i| {
                        let rank = if total <= MAX_PRIZE_PERMUTATIONS {
                            i
                        } else {
                            i * (total / count) // evenly spaced ranks
                        };
                        unrank_permutation(rank, spec.rounds)
                            .into_iter()
                            .map(|p| base[p])
                            .collect()
                    })
                    .collect()
            }
        };
        let full_hand = if spec.cards == 16 {
            u16::MAX
        } else {
            (1u16 << spec.cards) - 1
        };
        Ok(Goofspiel {
            inner: Arc::new(Inner {
                spec,
                prize_orders,
                full_hand,
            }),
        })
    }

    pub fn spec(&self) -> &GoofspielSpec {
        &self.inner.spec
    }

    pub fn num_prize_orders(&self) -> usize {
        self.inner.prize_orders.len()
    }
}

fn hand_cards(mask: u16) -> Vec<u8> {
    (0..16)
        .filter(|b| mask & (1 << b) != 0)
        .map(|b| b + 1)
        .collect()
}

/// Immutable Goofspiel history.
#[derive(Debug, Clone)]
pub struct GoofspielState {
    inner: Arc<Inner>,
    /// Index into `prize_orders`; `None` while the root chance node is pending.
    order: Option<usize>,
    round: usize,
    team_hands: Vec<u16>,
    adversary_hand: u16,
    /// Team bids committed this round, before the adversary moves.
    pending_bids: Option<Vec<u8>>,
    /// Per-round outcome: 0 team took the prize, 1 adversary, 2 void.
    results: Vec<u8>,
    /// Bid values per agent per completed round; team knowledge is pooled.
    team_bid_history: Vec<Vec<u8>>,
    adversary_bid_history: Vec<u8>,
    team_points: u32,
    adversary_points: u32,
}

impl GoofspielState {
    fn spec(&self) -> &GoofspielSpec {
        &self.inner.spec
    }

    fn prizes(&self) -> &[u8] {
        &self.inner.prize_orders[self.order.expect("prize order not yet drawn")]
    }

    pub fn team_points(&self) -> u32 {
        self.team_points
    }

    pub fn adversary_points(&self) -> u32 {
        self.adversary_points
    }

    pub fn results(&self) -> &[u8] {
        &self.results
    }

    fn resolve_round(&mut self, adversary_bid: u8) {
        let prize = self.prizes()[self.round] as u32;
        let bids = self.pending_bids.take().expect("no pending team bids");
        let top_team = bids.iter().copied().max().unwrap();
        let highest = top_team.max(adversary_bid);
        let holders = bids.iter().filter(|&&b| b == highest).count()
            + usize::from(adversary_bid == highest);
        self.results.push(if holders > 1 {
            2
        } else if adversary_bid == highest {
            self.adversary_points += prize;
            1
        } else {
            self.team_points += prize;
            0
        });
        for (agent, bid) in bids.into_iter().enumerate() {
            self.team_bid_history[agent].push(bid);
        }
        self.adversary_bid_history.push(adversary_bid);
        self.round += 1;
    }
}

impl GameState for GoofspielState {
    fn player(&self) -> PlayerId {
        assert!(!self.is_terminal(), "player() on terminal state");
        if self.order.is_none() {
            PlayerId::Chance
        } else if self.pending_bids.is_none() {
            PlayerId::Team
        } else {
            PlayerId::Adversary
        }
    }

    fn is_terminal(&self) -> bool {
        self.round >= self.spec().rounds
    }

    fn team_utility(&self) -> f64 {
        assert!(self.is_terminal(), "utility on non-terminal state");
        match self.team_points.cmp(&self.adversary_points) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Less => -1.0,
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    fn legal_actions(&self) -> LegalActions {
        match self.player() {
            PlayerId::Chance => {
                LegalActions::Single((0..self.inner.prize_orders.len()).collect())
            }
            PlayerId::Team => LegalActions::PerAgent(
                self.team_hands
                    .iter()
                    .map(|&mask| (0..mask.count_ones() as usize).collect())
                    .collect(),
            ),
            PlayerId::Adversary => {
                LegalActions::Single((0..self.adversary_hand.count_ones() as usize).collect())
            }
        }
    }

    fn chance_outcomes(&self) -> Vec<(usize, f64)> {
        assert_eq!(self.player(), PlayerId::Chance);
        let n = self.inner.prize_orders.len();
        (0..n).map(|i| (i, 1.0 / n as f64)).collect()
    }

    fn apply(&self, mv: &Move) -> Self {
        let mut next = self.clone();
        match (self.player(), mv) {
            (PlayerId::Chance, Move::Single(i)) => {
                assert!(*i < self.inner.prize_orders.len(), "illegal chance outcome {i}");
                next.order = Some(*i);
            }
            (PlayerId::Team, Move::Joint(joint)) => {
                assert_eq!(
                    joint.num_agents(),
                    self.team_hands.len(),
                    "joint action has wrong agent count"
                );
                let mut bids = Vec::with_capacity(joint.num_agents());
                for c in joint.components() {
                    let cards = hand_cards(self.team_hands[c.agent]);
                    assert!(
                        c.action < cards.len(),
                        "illegal action {} for agent {}: hand has {} cards",
                        c.action,
                        c.agent,
                        cards.len()
                    );
                    let card = cards[c.action];
                    next.team_hands[c.agent] &= !(1u16 << (card - 1));
                    bids.push(card);
                }
                next.pending_bids = Some(bids);
            }
            (PlayerId::Adversary, Move::Single(a)) => {
                let cards = hand_cards(self.adversary_hand);
                assert!(
                    *a < cards.len(),
                    "illegal adversary action {a}: hand has {} cards",
                    cards.len()
                );
                let card = cards[*a];
                next.adversary_hand &= !(1u16 << (card - 1));
                next.resolve_round(card);
            }
            (p, m) => panic!("move {m:?} does not match acting player {p}"),
        }
        next
    }

    fn infoset_key(&self) -> InfoSetKey {
        let player = self.player();
        assert_ne!(player, PlayerId::Chance, "chance nodes have no infoset");
        let mut bytes = Vec::new();
        bytes.push(self.round as u8);
        // Prizes revealed so far, including the one currently auctioned.
        bytes.extend_from_slice(&self.prizes()[..=self.round]);
        bytes.extend_from_slice(&self.results);
        match player {
            PlayerId::Team => {
                // All agents share one infoset: team knowledge pools every
                // agent's own bid sequence. Adversary bids stay hidden.
                for hist in &self.team_bid_history {
                    bytes.extend_from_slice(hist);
                }
            }
            PlayerId::Adversary => {
                bytes.extend_from_slice(&self.adversary_bid_history);
            }
            PlayerId::Chance => unreachable!(),
        }
        InfoSetKey::new(player, bytes)
    }
}

impl Game for Goofspiel {
    type State = GoofspielState;

    fn initial_state(&self) -> GoofspielState {
        let spec = &self.inner.spec;
        GoofspielState {
            inner: Arc::clone(&self.inner),
            order: match spec.prize_order {
                PrizeOrder::FixedDescending => Some(0),
                PrizeOrder::ChanceShuffled => None,
            },
            round: 0,
            team_hands: vec![self.inner.full_hand; spec.team_players],
            adversary_hand: self.inner.full_hand,
            pending_bids: None,
            results: Vec::new(),
            team_bid_history: vec![Vec::new(); spec.team_players],
            adversary_bid_history: Vec::new(),
            team_points: 0,
            adversary_points: 0,
        }
    }

    fn num_agents(&self) -> usize {
        self.inner.spec.team_players
    }

    fn encoding_len(&self) -> usize {
        let s = &self.inner.spec;
        3 + 4 * s.rounds + (s.team_players + 1) * s.cards + s.team_players
    }

    fn encode(&self, key: &InfoSetKey, agent: usize, action: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.encoding_len());
        out.fill(0.0);
        let s = &self.inner.spec;
        let (c, r, p) = (s.cards, s.rounds, s.team_players);

        // Parse the canonical key: round, revealed prizes, results, bid
        // sequences (one per agent for the team, one for the adversary).
        let round = key.bytes[0] as usize;
        let prizes = &key.bytes[1..1 + round + 1];
        let results = &key.bytes[2 + round..2 + round + round];
        let hist = &key.bytes[2 + 2 * round..];

        out[0] = 1.0;
        out[1] = round as f64 / r as f64;
        out[2] = prizes[round] as f64 / c as f64;
        for (j, &prize) in prizes.iter().enumerate() {
            out[3 + j] = prize as f64 / c as f64;
        }
        for (j, &res) in results.iter().enumerate() {
            out[3 + r + 3 * j + res as usize] = 1.0;
        }
        let hands_base = 3 + 4 * r;
        let bid_card = match key.player {
            PlayerId::Team => {
                // hist holds p sequences of `round` bids each.
                let mut bid_card = 0u8;
                for a in 0..p {
                    let bids = &hist[a * round..(a + 1) * round];
                    let mut mask = self.inner.full_hand;
                    for &b in bids {
                        mask &= !(1u16 << (b - 1));
                    }
                    for card in hand_cards(mask) {
                        out[hands_base + a * c + (card - 1) as usize] = 1.0;
                    }
                    if a == agent {
                        bid_card = hand_cards(mask)[action];
                    }
                }
                out[hands_base + (p + 1) * c + agent] = 1.0;
                bid_card
            }
            PlayerId::Adversary => {
                let mut mask = self.inner.full_hand;
                for &b in &hist[..round] {
                    mask &= !(1u16 << (b - 1));
                }
                for card in hand_cards(mask) {
                    out[hands_base + (card - 1) as usize] = 1.0;
                }
                hand_cards(mask)[action]
            }
            PlayerId::Chance => panic!("no encoding for chance"),
        };
        out[hands_base + p * c + (bid_card - 1) as usize] = 1.0;
    }
}
