//! Win rates, verdict histograms, and leaderboard assembly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{bt_fit, split_ties, BattleOutcome, BtOptions, EloParams, ModelId, RatingError, Verdict};

/// One leaderboard entry: Bradley-Terry rating, win rate, and per-segment
/// ratings for whichever segment tags were requested and had data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LeaderboardRow {
    pub model: ModelId,
    pub elo: f64,
    pub win_rate: f64,
    pub per_segment: BTreeMap<String, f64>,
}

/// Position-level verdict tally over a battle log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictHistogram {
    pub a_wins: u64,
    pub b_wins: u64,
    pub ties: u64,
}

impl VerdictHistogram {
    pub fn total(&self) -> u64 {
        self.a_wins + self.b_wins + self.ties
    }
}

pub fn verdict_histogram(outcomes: &[BattleOutcome]) -> VerdictHistogram {
    let mut h = VerdictHistogram::default();
    for o in outcomes {
        match o.verdict {
            Verdict::AWins => h.a_wins += 1,
            Verdict::BWins => h.b_wins += 1,
            Verdict::Tie => h.ties += 1,
        }
    }
    h
}

/// Win rate per model as a percentage, counting ties as half-wins:
/// `100 * (wins + ties/2) / battles`. Models with zero battles are absent.
pub fn win_rates(outcomes: &[BattleOutcome]) -> BTreeMap<ModelId, f64> {
    let mut score: BTreeMap<ModelId, f64> = BTreeMap::new();
    let mut battles: BTreeMap<ModelId, f64> = BTreeMap::new();
    for o in outcomes {
        if o.weight == 0.0 {
            continue;
        }
        let (fa, fb) = match o.verdict {
            Verdict::AWins => (1.0, 0.0),
            Verdict::BWins => (0.0, 1.0),
            Verdict::Tie => (0.5, 0.5),
        };
        *score.entry(o.model_a.clone()).or_default() += fa * o.weight;
        *score.entry(o.model_b.clone()).or_default() += fb * o.weight;
        *battles.entry(o.model_a.clone()).or_default() += o.weight;
        *battles.entry(o.model_b.clone()).or_default() += o.weight;
    }
    score
        .into_iter()
        .map(|(m, s)| {
            let n = battles[&m];
            (m, 100.0 * s / n)
        })
        .collect()
}

/// Leaderboard restricted to outcomes tagged with `segment`, sorted by rating
/// descending (model id breaks ties). Rows carry the segment's own rating in
/// `per_segment` under the tag.
pub fn segment_leaderboard(
    outcomes: &[BattleOutcome],
    segment: &str,
    params: &EloParams,
    opts: &BtOptions,
) -> Result<Vec<LeaderboardRow>, RatingError> {
    let filtered: Vec<BattleOutcome> = outcomes
        .iter()
        .filter(|o| o.segment_tags.contains(segment))
        .cloned()
        .collect();
    if filtered.is_empty() {
        return Err(RatingError::EmptySegment(segment.to_string()));
    }
    let mut rows = assemble(&filtered, params, opts)?;
    for row in &mut rows {
        row.per_segment.insert(segment.to_string(), row.elo);
    }
    Ok(rows)
}

/// Overall leaderboard plus one rating column per requested segment tag.
/// Segments with no matching outcomes, or whose restricted fit fails
/// (disconnected or degenerate without ridge), simply contribute no column
/// values.
pub fn leaderboard(
    outcomes: &[BattleOutcome],
    params: &EloParams,
    opts: &BtOptions,
    segments: &[String],
) -> Result<Vec<LeaderboardRow>, RatingError> {
    let mut rows = assemble(outcomes, params, opts)?;
    for tag in segments {
        if let Ok(seg_rows) = segment_leaderboard(outcomes, tag, params, opts) {
            let seg: BTreeMap<&str, f64> = seg_rows.iter().map(|r| (r.model.as_str(), r.elo)).collect();
            for row in &mut rows {
                if let Some(elo) = seg.get(row.model.as_str()) {
                    row.per_segment.insert(tag.clone(), *elo);
                }
            }
        }
    }
    Ok(rows)
}

fn assemble(outcomes: &[BattleOutcome], params: &EloParams, opts: &BtOptions) -> Result<Vec<LeaderboardRow>, RatingError> {
    let fit = bt_fit(&split_ties(outcomes), params, opts)?;
    let rates = win_rates(outcomes);
    let mut rows: Vec<LeaderboardRow> = fit
        .ratings
        .into_iter()
        .map(|(model, elo)| {
            let win_rate = rates.get(&model).copied().unwrap_or(0.0);
            LeaderboardRow {
                model,
                elo,
                win_rate,
                per_segment: BTreeMap::new(),
            }
        })
        .collect();
    rows.sort_by(|x, y| {
        y.elo
            .partial_cmp(&x.elo)
            .unwrap()
            .then_with(|| x.model.cmp(&y.model))
    });
    Ok(rows)
}
