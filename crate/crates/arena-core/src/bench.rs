//! Reference-answer scoring: a single model answers stored questions and a
//! judge compares each answer against a human-selected and a human-rejected
//! reference. Wins score 1 on both tracks; a tie scores 0.5 against the
//! selected answer but nothing against the rejected one.

use std::collections::BTreeMap;
use std::path::Path;

use futures::stream::{self, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, JudgeOptions, Persona, QuestionSpec, Relevance, Winner};
use crate::gateway::Backend;
use crate::media::{VideoId, VideoMeta};
use crate::rating::ModelId;
use crate::store::ReplayState;
use crate::util::hash_u64;
use crate::short_hash;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("bench needs at least one item")]
    EmptyItems,
    #[error("all {attempted} items failed for {model_id}; no score can be reported")]
    AllItemsFailed { model_id: ModelId, attempted: usize },
    #[error("item {item_id} is invalid: {detail}")]
    InvalidItem { item_id: String, detail: String },
    #[error("item {item_id} references unknown video {video_id}")]
    UnknownVideo { item_id: String, video_id: VideoId },
    #[error("verdict row {line} references unknown battle {battle_id}")]
    UnknownBattleId { battle_id: String, line: usize },
    #[error("verdict row {line} is malformed: {detail}")]
    MalformedRow { line: usize, detail: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One scoring unit: a question plus the human-preferred and human-rejected
/// answers it once received.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchItem {
    pub item_id: String,
    pub video_id: VideoId,
    pub question: String,
    pub selected_answer: String,
    pub rejected_answer: String,
    pub source_battle: String,
}

impl BenchItem {
    pub fn validate(&self) -> Result<(), BenchError> {
        let invalid = |detail: &str| BenchError::InvalidItem {
            item_id: self.item_id.clone(),
            detail: detail.to_string(),
        };
        if self.selected_answer.trim().is_empty() {
            return Err(invalid("selected answer is empty"));
        }
        if self.rejected_answer.trim().is_empty() {
            return Err(invalid("rejected answer is empty"));
        }
        if self.selected_answer == self.rejected_answer {
            return Err(invalid("selected and rejected answers are identical"));
        }
        if self.question.trim().is_empty() {
            return Err(invalid("question is empty"));
        }
        Ok(())
    }
}

/// Per-item result, with the randomized judge positions recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemScore {
    pub item_id: String,
    /// 1 for a win, 0.5 for a tie, 0 for a loss.
    pub points_vs_selected: f64,
    /// 1 for a win, 0 otherwise.
    pub points_vs_rejected: f64,
    pub candidate_first_vs_selected: bool,
    pub candidate_first_vs_rejected: bool,
}

/// A model's aggregate over one item set, all columns in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchScore {
    pub model_id: ModelId,
    pub vs_selected: f64,
    pub vs_rejected: f64,
    pub avg: f64,
    pub items_scored: usize,
    pub items_failed: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub seed: u64,
    pub parallelism: usize,
    /// When false the judge compares text only, without video frames.
    pub judge_frames: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            seed: 0,
            parallelism: 8,
            judge_frames: true,
        }
    }
}

/// Everything run_bench produces: the aggregate plus per-item detail in
/// item order, and the items that had to be excluded.
#[derive(Debug)]
pub struct BenchReport {
    pub score: BenchScore,
    pub item_scores: Vec<ItemScore>,
    /// (item_id, cause) for every excluded item.
    pub failures: Vec<(String, String)>,
}

fn reference_question(item: &BenchItem, track: &str) -> QuestionSpec {
    QuestionSpec {
        question_id: format!("bench:{}:{track}", item.item_id),
        persona_id: format!("bench:{}", item.item_id),
        video_id: item.video_id.clone(),
        text: item.question.clone(),
        generation: 0,
        parent_question: None,
        complexity: None,
    }
}

fn neutral_persona(item: &BenchItem) -> Persona {
    Persona {
        persona_id: format!("bench:{}", item.item_id),
        video_id: item.video_id.clone(),
        relevance: Relevance::High,
        description: "a careful viewer who watched the whole video and now compares two \
                      candidate answers to the same question"
            .into(),
        motivation: "pick whichever answer serves the question better, strictly by the \
                     listed standards"
            .into(),
    }
}

async fn judge_pair(
    item: &BenchItem,
    track: &str,
    candidate_answer: &str,
    reference_answer: &str,
    candidate_first: bool,
    video: &VideoMeta,
    judge: &Backend,
    judge_frames: bool,
) -> Result<Winner, agents::AgentError> {
    let question = reference_question(item, track);
    let persona = neutral_persona(item);
    let (a, b) = if candidate_first {
        (candidate_answer, reference_answer)
    } else {
        (reference_answer, candidate_answer)
    };
    let options = JudgeOptions {
        two_pass: false,
        frame_budget: if judge_frames { None } else { Some(0) },
    };
    let verdict = agents::judge(&question, &persona, a, b, video, judge, options).await?;
    let candidate_won = match verdict.winner {
        Winner::A => candidate_first,
        Winner::B => !candidate_first,
        Winner::Tie => return Ok(Winner::Tie),
    };
    Ok(if candidate_won { Winner::A } else { Winner::B })
}

/// Scores one candidate answer against both references. Positions are drawn
/// from `rng` and recorded in the result.
pub async fn score_item(
    item: &BenchItem,
    candidate_answer: &str,
    video: &VideoMeta,
    judge: &Backend,
    judge_frames: bool,
    rng: &mut ChaCha8Rng,
) -> Result<ItemScore, agents::AgentError> {
    let candidate_first_vs_selected = rng.gen_bool(0.5);
    let candidate_first_vs_rejected = rng.gen_bool(0.5);

    let vs_selected = judge_pair(
        item,
        "sel",
        candidate_answer,
        &item.selected_answer,
        candidate_first_vs_selected,
        video,
        judge,
        judge_frames,
    )
    .await?;
    let vs_rejected = judge_pair(
        item,
        "rej",
        candidate_answer,
        &item.rejected_answer,
        candidate_first_vs_rejected,
        video,
        judge,
        judge_frames,
    )
    .await?;

    Ok(ItemScore {
        item_id: item.item_id.clone(),
        points_vs_selected: match vs_selected {
            Winner::A => 1.0,
            Winner::Tie => 0.5,
            Winner::B => 0.0,
        },
        points_vs_rejected: match vs_rejected {
            Winner::A => 1.0,
            _ => 0.0,
        },
        candidate_first_vs_selected,
        candidate_first_vs_rejected,
    })
}

/// Reduces per-item points `(vs_selected, vs_rejected)` to the percentage
/// columns. Failed items stay out of the denominator.
pub fn aggregate_points(
    model_id: &str,
    points: &[(f64, f64)],
    items_failed: usize,
) -> Result<BenchScore, BenchError> {
    if points.is_empty() {
        return Err(BenchError::AllItemsFailed {
            model_id: model_id.to_string(),
            attempted: items_failed,
        });
    }
    let n = points.len() as f64;
    let vs_selected = 100.0 * points.iter().map(|(sel, _)| sel).sum::<f64>() / n;
    let vs_rejected = 100.0 * points.iter().map(|(_, rej)| rej).sum::<f64>() / n;
    Ok(BenchScore {
        model_id: model_id.to_string(),
        vs_selected,
        vs_rejected,
        avg: (vs_selected + vs_rejected) / 2.0,
        items_scored: points.len(),
        items_failed,
    })
}

fn aggregate(
    model_id: &str,
    item_scores: &[ItemScore],
    items_failed: usize,
) -> Result<BenchScore, BenchError> {
    let points: Vec<(f64, f64)> = item_scores
        .iter()
        .map(|s| (s.points_vs_selected, s.points_vs_rejected))
        .collect();
    aggregate_points(model_id, &points, items_failed)
}

/// Runs the whole bench for one candidate model. Items fan out concurrently;
/// results reduce in item order. Items whose answer generation or judging
/// fails are excluded from the denominator and reported as failures.
pub async fn run_bench(
    candidate: &Backend,
    items: &[BenchItem],
    videos: &BTreeMap<VideoId, VideoMeta>,
    judge: &Backend,
    options: BenchOptions,
) -> Result<BenchReport, BenchError> {
    if items.is_empty() {
        return Err(BenchError::EmptyItems);
    }
    for item in items {
        item.validate()?;
        if !videos.contains_key(&item.video_id) {
            return Err(BenchError::UnknownVideo {
                item_id: item.item_id.clone(),
                video_id: item.video_id.clone(),
            });
        }
    }

    let runs = items.iter().enumerate().map(|(index, item)| async move {
        let video = &videos[&item.video_id];
        let result = score_one(item, video, candidate, judge, options).await;
        (index, result)
    });
    let mut outcomes: Vec<(usize, Result<ItemScore, String>)> = stream::iter(runs)
        .buffer_unordered(options.parallelism.max(1))
        .collect()
        .await;
    outcomes.sort_by_key(|(index, _)| *index);

    let mut item_scores = Vec::new();
    let mut failures = Vec::new();
    for (index, result) in outcomes {
        match result {
            Ok(score) => item_scores.push(score),
            Err(cause) => failures.push((items[index].item_id.clone(), cause)),
        }
    }
    let score = aggregate(candidate.model_id(), &item_scores, failures.len())?;
    Ok(BenchReport {
        score,
        item_scores,
        failures,
    })
}

async fn score_one(
    item: &BenchItem,
    video: &VideoMeta,
    candidate: &Backend,
    judge: &Backend,
    options: BenchOptions,
) -> Result<ItemScore, String> {
    let question = reference_question(item, "answer");
    let request = agents::contestant_request(
        format!("bench:{}:answer", item.item_id),
        &question,
        video,
        candidate.descriptor.params.frame_budget,
    )
    .map_err(|e| format!("answer: {e}"))?;
    let answer = candidate
        .generate(&request)
        .await
        .map_err(|e| format!("answer: {e}"))?
        .text;

    let mut rng = ChaCha8Rng::seed_from_u64(hash_u64(&format!(
        "bench|{}|{}",
        options.seed, item.item_id
    )));
    score_item(item, &answer, video, judge, options.judge_frames, &mut rng)
        .await
        .map_err(|e| format!("judge: {e}"))
}

/// What a human-verdict import produced alongside the items.
#[derive(Debug)]
pub struct VerdictImport {
    pub items: Vec<BenchItem>,
    pub skipped_ties: usize,
}

#[derive(Deserialize)]
struct VerdictRow {
    battle_id: String,
    winner: String,
}

/// Reads line-delimited `{battle_id, winner}` records, where `winner` is
/// "a", "b", or "tie" in the battle's judge-visible orientation. Non-tie
/// rows become items with the human winner as the selected answer; tie rows
/// are skipped and counted.
pub fn import_human_verdicts(path: &Path, state: &ReplayState) -> Result<VerdictImport, BenchError> {
    let raw = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut items = Vec::new();
    let mut skipped_ties = 0;
    for (index, row) in raw.lines().enumerate() {
        let line = index + 1;
        if row.trim().is_empty() {
            continue;
        }
        let parsed: VerdictRow =
            serde_json::from_str(row).map_err(|e| BenchError::MalformedRow {
                line,
                detail: e.to_string(),
            })?;
        let record = state
            .battles
            .get(&parsed.battle_id)
            .ok_or_else(|| BenchError::UnknownBattleId {
                battle_id: parsed.battle_id.clone(),
                line,
            })?;
        let (selected, rejected) = match parsed.winner.to_ascii_lowercase().as_str() {
            "a" => (&record.response_a, &record.response_b),
            "b" => (&record.response_b, &record.response_a),
            "tie" => {
                skipped_ties += 1;
                continue;
            }
            other => {
                return Err(BenchError::MalformedRow {
                    line,
                    detail: format!("winner must be \"a\", \"b\", or \"tie\", got {other:?}"),
                })
            }
        };
        let question_text = state
            .questions
            .get(&record.question_id)
            .map(|q| q.text.clone())
            .ok_or_else(|| BenchError::MalformedRow {
                line,
                detail: format!("battle {} has no stored question", parsed.battle_id),
            })?;
        let item = BenchItem {
            item_id: short_hash(&format!("bench-item|{}", parsed.battle_id), 16),
            video_id: record.video_id.clone(),
            question: question_text,
            selected_answer: selected.clone(),
            rejected_answer: rejected.clone(),
            source_battle: parsed.battle_id.clone(),
        };
        item.validate().map_err(|e| BenchError::MalformedRow {
            line,
            detail: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(VerdictImport { items, skipped_ties })
}

/// Reads a line-delimited file of serialized items.
pub fn load_items(path: &Path) -> Result<Vec<BenchItem>, BenchError> {
    let raw = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut items = Vec::new();
    for (index, row) in raw.lines().enumerate() {
        if row.trim().is_empty() {
            continue;
        }
        let item: BenchItem = serde_json::from_str(row).map_err(|e| BenchError::MalformedRow {
            line: index + 1,
            detail: e.to_string(),
        })?;
        item.validate()?;
        items.push(item);
    }
    if items.is_empty() {
        return Err(BenchError::EmptyItems);
    }
    Ok(items)
}
