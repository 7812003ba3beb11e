//! Rating mathematics: online ELO, Bradley-Terry maximum-likelihood fitting
//! with tie splitting, bootstrap confidence intervals, win rates, and
//! segmented leaderboards.
//!
//! Everything in this module is a pure, deterministic function of its inputs.
//! All maps are ordered (`BTreeMap`) so results are independent of input
//! ordering down to the bit level.

mod board;
mod bootstrap;
mod bt;
mod elo;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use board::{leaderboard, segment_leaderboard, verdict_histogram, win_rates, LeaderboardRow, VerdictHistogram};
pub use bootstrap::{bootstrap_ci, BootstrapCi};
pub use bt::{bt_fit, BtOptions};
pub use elo::{online_update, win_probability};

pub type ModelId = String;

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("battle pairs a model against itself: {0}")]
    IdenticalContestants(ModelId),
    #[error("outcome weight must be nonnegative, got {0}")]
    NegativeWeight(f64),
    #[error("Bradley-Terry fit needs at least 2 models, got {0}")]
    InsufficientModels(usize),
    #[error("comparison graph is not connected ({components} components); ratings across components are not identifiable")]
    NotConnected { components: usize },
    #[error("model {0} has no wins or no losses; enable the ridge prior or collect more battles")]
    Degenerate(ModelId),
    #[error("no outcomes carry segment tag {0:?}")]
    EmptySegment(String),
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("all {0} bootstrap resamples were discarded (disconnected or degenerate)")]
    AllResamplesDiscarded(usize),
}

/// Verdict of one judged battle, in position terms (A/B as shown to the judge).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AWins,
    BWins,
    Tie,
}

/// One completed pairwise comparison, reduced to what the rating layer needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BattleOutcome {
    pub model_a: ModelId,
    pub model_b: ModelId,
    pub verdict: Verdict,
    #[serde(default)]
    pub segment_tags: BTreeSet<String>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl BattleOutcome {
    pub fn new(model_a: impl Into<ModelId>, model_b: impl Into<ModelId>, verdict: Verdict) -> Result<Self, RatingError> {
        let model_a = model_a.into();
        let model_b = model_b.into();
        if model_a == model_b {
            return Err(RatingError::IdenticalContestants(model_a));
        }
        Ok(Self {
            model_a,
            model_b,
            verdict,
            segment_tags: BTreeSet::new(),
            weight: 1.0,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self, RatingError> {
        if !(weight >= 0.0) {
            return Err(RatingError::NegativeWeight(weight));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.segment_tags = tags.into_iter().map(Into::into).collect();
        self
    }
}

/// ELO parameters: logistic scale, update gain, and the rating every model
/// starts from (also the anchor for Bradley-Terry mean-centering).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EloParams {
    pub alpha: f64,
    pub k_factor: f64,
    pub initial_rating: f64,
}

impl Default for EloParams {
    fn default() -> Self {
        Self {
            alpha: 400.0,
            k_factor: 4.0,
            initial_rating: 1000.0,
        }
    }
}

impl EloParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0) {
            return Err(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.k_factor > 0.0) {
            return Err(format!("k_factor must be positive, got {}", self.k_factor));
        }
        if !self.initial_rating.is_finite() {
            return Err(format!("initial_rating must be finite, got {}", self.initial_rating));
        }
        Ok(())
    }
}

/// Online ELO state: one rating per model, updated battle by battle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatingTable {
    pub ratings: BTreeMap<ModelId, f64>,
    pub params: EloParams,
}

impl RatingTable {
    pub fn new(params: EloParams) -> Self {
        Self {
            ratings: BTreeMap::new(),
            params,
        }
    }

    pub fn rating(&self, model: &str) -> Option<f64> {
        self.ratings.get(model).copied()
    }

    /// Current rating, registering the model at the initial rating if absent.
    pub fn rating_or_register(&mut self, model: &str) -> f64 {
        *self
            .ratings
            .entry(model.to_string())
            .or_insert(self.params.initial_rating)
    }
}

/// Aggregated pairwise counts after tie splitting: fractional wins per
/// ordered pair. `battles(i, j)` is always `wins(i, j) + wins(j, i)`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PairCounts {
    wins: BTreeMap<(ModelId, ModelId), f64>,
}

impl PairCounts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `weight` fractional wins of `winner` over `loser`.
    pub fn add_wins(&mut self, winner: &str, loser: &str, weight: f64) {
        *self
            .wins
            .entry((winner.to_string(), loser.to_string()))
            .or_insert(0.0) += weight;
        // Materialize the mirror entry so both directions list the pair.
        self.wins
            .entry((loser.to_string(), winner.to_string()))
            .or_insert(0.0);
    }

    /// Records one tie of combined weight `weight`, split half to each side.
    pub fn add_tie(&mut self, a: &str, b: &str, weight: f64) {
        self.add_wins(a, b, weight / 2.0);
        self.add_wins(b, a, weight / 2.0);
    }

    pub fn wins(&self, i: &str, j: &str) -> f64 {
        self.wins
            .get(&(i.to_string(), j.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn battles(&self, i: &str, j: &str) -> f64 {
        self.wins(i, j) + self.wins(j, i)
    }

    pub fn models(&self) -> BTreeSet<ModelId> {
        self.wins.keys().map(|(i, _)| i.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.wins.is_empty()
    }

    /// Ordered-pair iteration in lexicographic key order.
    pub fn iter(&self) -> impl Iterator<Item = (&(ModelId, ModelId), &f64)> {
        self.wins.iter()
    }
}

/// Splits ties into half-wins for each side and aggregates decisive outcomes,
/// producing the fractional win counts the Bradley-Terry fit consumes.
pub fn split_ties(outcomes: &[BattleOutcome]) -> PairCounts {
    let mut counts = PairCounts::new();
    for o in outcomes {
        match o.verdict {
            Verdict::AWins => counts.add_wins(&o.model_a, &o.model_b, o.weight),
            Verdict::BWins => counts.add_wins(&o.model_b, &o.model_a, o.weight),
            Verdict::Tie => counts.add_tie(&o.model_a, &o.model_b, o.weight),
        }
    }
    counts
}

/// Result of a Bradley-Terry maximum-likelihood fit on the ELO scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BTFitResult {
    pub ratings: BTreeMap<ModelId, f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ci95: Option<BTreeMap<ModelId, (f64, f64)>>,
}
