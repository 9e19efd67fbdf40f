//! Game-facing network wrappers: the team regret net whose mixing layer
//! multiplies shared agent-network outputs into joint regrets, the plain
//! adversary regret net, shared average-strategy nets and the joint-action
//! baseline net.

use crate::game::{Game, InfoSetKey, JointAction};
use crate::neural::net::{ForwardCache, Network};
use crate::regret::regret_matching;
use crate::tabular::TeamStrategy;

/// Runs `f` with a reusable thread-local feature buffer resized to `len`.
fn with_encode_buffer<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    thread_local! {
        static BUFFER: std::cell::Cell<Option<Vec<f64>>> = const { std::cell::Cell::new(None) };
    }
    BUFFER.with(|slot| {
        let mut buf = slot.take().unwrap_or_default();
        buf.resize(len, 0.0);
        // truncate stale capacity semantics: resize handles both directions
        let out = f(&mut buf[..len]);
        slot.set(Some(buf));
        out
    })
}

/// Team cumulative regret network: one shared agent sub-network evaluated
/// per (agent, action), combined by a parameter-free product mixing layer.
/// Outputs are non-negative by the head choice, so the whole construction
/// lives in the regret-matching+ regime.
#[derive(Debug, Clone)]
pub struct RegretNet {
    agent_net: Network,
}

impl RegretNet {
    pub fn new(agent_net: Network) -> Self {
        RegretNet { agent_net }
    }

    pub fn network(&self) -> &Network {
        &self.agent_net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.agent_net
    }

    /// Estimated cumulative regret of one agent action. Non-negative.
    pub fn forward_agent<G: Game>(
        &self,
        game: &G,
        key: &InfoSetKey,
        agent: usize,
        action: usize,
    ) -> f64 {
        with_encode_buffer(game.encoding_len(), |x| {
            game.encode(key, agent, action, x);
            self.agent_net.forward(x)
        })
    }

    /// Joint regret: the exact product of agent outputs in agent order.
    pub fn forward_joint<G: Game>(&self, game: &G, key: &InfoSetKey, joint: &JointAction) -> f64 {
        let mut product = 1.0;
        for c in joint.components() {
            product *= self.forward_agent(game, key, c.agent, c.action);
        }
        product
    }

    /// Per-agent regret-matching+ strategies; the factored team strategy.
    pub fn team_strategy<G: Game>(
        &self,
        game: &G,
        key: &InfoSetKey,
        counts: &[usize],
    ) -> TeamStrategy {
        TeamStrategy::PerAgent(
            counts
                .iter()
                .enumerate()
                .map(|(agent, &n)| {
                    let scores: Vec<f64> = (0..n)
                        .map(|a| self.forward_agent(game, key, agent, a))
                        .collect();
                    regret_matching(&scores)
                })
                .collect(),
        )
    }
}

/// Plain (non-mixing) regret network for the adversary.
#[derive(Debug, Clone)]
pub struct AdversaryRegretNet {
    net: Network,
}

impl AdversaryRegretNet {
    pub fn new(net: Network) -> Self {
        AdversaryRegretNet { net }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn forward<G: Game>(&self, game: &G, key: &InfoSetKey, action: usize) -> f64 {
        with_encode_buffer(game.encoding_len(), |x| {
            game.encode(key, 0, action, x);
            self.net.forward(x)
        })
    }

    pub fn strategy<G: Game>(&self, game: &G, key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        let scores: Vec<f64> = (0..num_actions)
            .map(|a| self.forward(game, key, a))
            .collect();
        regret_matching(&scores)
    }
}

/// Shared average-strategy network: maps (infoset, agent, action) to a
/// non-negative score; per-agent strategies normalize scores over actions.
/// The adversary variant passes agent 0.
#[derive(Debug, Clone)]
pub struct StrategyNet {
    net: Network,
}

impl StrategyNet {
    pub fn new(net: Network) -> Self {
        StrategyNet { net }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn score<G: Game>(&self, game: &G, key: &InfoSetKey, agent: usize, action: usize) -> f64 {
        with_encode_buffer(game.encoding_len(), |x| {
            game.encode(key, agent, action, x);
            self.net.forward(x)
        })
    }

    pub fn distribution<G: Game>(
        &self,
        game: &G,
        key: &InfoSetKey,
        agent: usize,
        num_actions: usize,
    ) -> Vec<f64> {
        let scores: Vec<f64> = (0..num_actions)
            .map(|a| self.score(game, key, agent, a))
            .collect();
        regret_matching(&scores)
    }

    pub fn team_strategy<G: Game>(
        &self,
        game: &G,
        key: &InfoSetKey,
        counts: &[usize],
    ) -> TeamStrategy {
        TeamStrategy::PerAgent(
            counts
                .iter()
                .enumerate()
                .map(|(agent, &n)| self.distribution(game, key, agent, n))
                .collect(),
        )
    }
}

/// Writes the joint-action encoding: per-agent encodings concatenated in
/// agent order. Input width is `num_agents * encoding_len`.
pub fn encode_joint<G: Game>(game: &G, key: &InfoSetKey, joint: &JointAction, out: &mut [f64]) {
    let w = game.encoding_len();
    assert_eq!(out.len(), joint.num_agents() * w);
    for c in joint.components() {
        game.encode(key, c.agent, c.action, &mut out[c.agent * w..(c.agent + 1) * w]);
    }
}

/// Joint-action baseline network (no decomposition): one score per whole
/// joint action over the concatenated per-agent encoding. This is the
/// ablation whose action space grows exponentially with the team size.
#[derive(Debug, Clone)]
pub struct JointNet {
    net: Network,
    num_agents: usize,
}

impl JointNet {
    pub fn new(net: Network, num_agents: usize) -> Self {
        JointNet { net, num_agents }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn forward<G: Game>(&self, game: &G, key: &InfoSetKey, joint: &JointAction) -> f64 {
        with_encode_buffer(self.num_agents * game.encoding_len(), |x| {
            encode_joint(game, key, joint, x);
            self.net.forward(x)
        })
    }

    /// Dense strategy over the row-major enumerated joint space.
    pub fn team_strategy<G: Game>(
        &self,
        game: &G,
        key: &InfoSetKey,
        counts: &[usize],
    ) -> TeamStrategy {
        let cells: usize = counts.iter().product();
        let scores: Vec<f64> = (0..cells)
            .map(|flat| {
                self.forward(game, key, &JointAction::from_flat_index(flat, counts))
            })
            .collect();
        TeamStrategy::Joint(regret_matching(&scores))
    }
}

/// Forward pass of the mixing product with cached agent activations, plus
/// the backward rule `d(prod)/d f_i = prod_{j != i} f_j`. Gradients flow
/// into the shared agent network once per component. The struct owns its
/// buffers so hot loops can reuse one instance across entries.
#[derive(Default)]
pub struct MixForward {
    pub product: f64,
    pub factors: Vec<f64>,
    caches: Vec<ForwardCache>,
    inputs: Vec<Vec<f64>>,
}

impl MixForward {
    pub fn new() -> MixForward {
        MixForward::default()
    }

    /// Allocating convenience wrapper around [`MixForward::compute`].
    pub fn run<G: Game>(
        net: &Network,
        game: &G,
        key: &InfoSetKey,
        joint: &JointAction,
    ) -> MixForward {
        let mut mix = MixForward::new();
        mix.compute(net, game, key, joint);
        mix
    }

    /// Evaluates the product for a joint action, reusing internal buffers.
    pub fn compute<G: Game>(
        &mut self,
        net: &Network,
        game: &G,
        key: &InfoSetKey,
        joint: &JointAction,
    ) -> f64 {
        let w = game.encoding_len();
        let n = joint.num_agents();
        self.factors.clear();
        self.caches.resize_with(n, ForwardCache::default);
        self.inputs.resize_with(n, Vec::new);
        let mut product = 1.0;
        for (i, c) in joint.components().iter().enumerate() {
            let x = &mut self.inputs[i];
            x.resize(w, 0.0);
            game.encode(key, c.agent, c.action, x);
            let f = net.forward_cached(x, &mut self.caches[i]);
            product *= f;
            self.factors.push(f);
        }
        self.product = product;
        product
    }

    /// Backpropagates `upstream = dL/d(product)` through the mixing layer
    /// into the shared agent parameters.
    pub fn backward(&self, net: &Network, upstream: f64, grads: &mut crate::neural::net::Gradients) {
        for i in 0..self.factors.len() {
            let mut other = 1.0;
            for (j, &f) in self.factors.iter().enumerate() {
                if j != i {
                    other *= f;
                }
            }
            net.backward(&self.caches[i], upstream * other, grads);
        }
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }
}
