//! Match-play evaluation: independent episodes sampling both sides' behavior
//! strategies, reporting the mean team utility with its standard error.

use rand::Rng;

use crate::game::{Game, GameState, Move, PlayerId};
use crate::tabular::{sample_index, Policy};

/// Outcome of a batch of evaluation episodes.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Terminal team utility per episode.
    pub utilities: Vec<f64>,
    pub mean: f64,
    pub standard_error: f64,
}

impl MatchResult {
    fn from_utilities(utilities: Vec<f64>) -> Self {
        let n = utilities.len() as f64;
        let mean = utilities.iter().sum::<f64>() / n;
        let var = utilities.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / n;
        MatchResult {
            mean,
            standard_error: (var / n).sqrt(),
            utilities,
        }
    }
}

/// Plays one episode sampling every decision from the given policies.
pub fn play_episode<G: Game, R: Rng>(
    game: &G,
    team: &dyn Policy,
    adversary: &dyn Policy,
    rng: &mut R,
) -> f64 {
    let mut state = game.initial_state();
    loop {
        if state.is_terminal() {
            return state.team_utility();
        }
        let mv = match state.player() {
            PlayerId::Chance => {
                let outcomes = state.chance_outcomes();
                let probs: Vec<f64> = outcomes.iter().map(|&(_, p)| p).collect();
                Move::Single(outcomes[sample_index(&probs, rng)].0)
            }
            PlayerId::Adversary => {
                let key = state.infoset_key();
                let n = state.legal_actions().joint_count() as usize;
                Move::Single(sample_index(&adversary.adversary_strategy(&key, n), rng))
            }
            PlayerId::Team => {
                let key = state.infoset_key();
                let counts = state.legal_actions().per_agent_counts();
                // Each agent samples independently from its own distribution;
                // the induced joint distribution is their product.
                Move::joint(&team.team_strategy(&key, &counts).sample(&counts, rng))
            }
        };
        state = state.apply(&mv);
    }
}

/// Plays `episodes` independent games and aggregates the team utilities.
pub fn match_eval<G: Game, R: Rng>(
    game: &G,
    team: &dyn Policy,
    adversary: &dyn Policy,
    episodes: usize,
    rng: &mut R,
) -> MatchResult {
    assert!(episodes >= 2, "need at least two episodes for an SE");
    let utilities: Vec<f64> = (0..episodes)
        .map(|_| play_episode(game, team, adversary, rng))
        .collect();
    MatchResult::from_utilities(utilities)
}
