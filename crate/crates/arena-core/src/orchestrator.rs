//! Battle lifecycle: balanced scheduling, stage execution, and the campaign
//! driver that runs many battles concurrently against one serialized log.
//!
//! Battle ids are content-addressed from the (sorted) contestant pair and the
//! question id, so re-running an interrupted campaign reproduces the same ids
//! and resume is a matter of skipping what the log already holds.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use futures::stream::{self, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, AgentError, Persona, QuestionSpec};
use crate::gateway::{Backend, GatewayError, ModelPool};
use crate::media::{VideoId, VideoMeta};
use crate::rating::{verdict_histogram, ModelId, VerdictHistogram};
use crate::short_hash;
use crate::store::{BattleRecord, Event, EventLogWriter, ReplayState, StoreError};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("need at least 2 contestants, got {0}")]
    PoolTooSmall(usize),
    #[error("question inventory exhausted after scheduling {scheduled} of {requested} battles")]
    InventoryExhausted { scheduled: usize, requested: usize },
    #[error("battle state cannot move from {from:?} to {to:?}")]
    InvalidTransition { from: BattleStage, to: BattleStage },
    #[error("no questions available; run simulate first")]
    EmptyInventory,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BattleStage {
    Pending,
    ResponsesReady,
    Judged,
    Recorded,
    Failed,
}

impl BattleStage {
    /// Stages only move forward; `Failed` is reachable from any live stage.
    pub fn can_advance_to(self, next: BattleStage) -> bool {
        use BattleStage::*;
        matches!(
            (self, next),
            (Pending, ResponsesReady) | (ResponsesReady, Judged) | (Judged, Recorded)
        ) || (next == Failed && !matches!(self, Recorded | Failed))
    }
}

/// One scheduled battle. `contestant_1 < contestant_2` lexicographically;
/// `swapped` records which side the judge sees as "A".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BattleTask {
    pub battle_id: String,
    pub video_id: VideoId,
    pub question_id: String,
    pub contestant_1: ModelId,
    pub contestant_2: ModelId,
    pub swapped: bool,
    state: BattleStage,
}

impl BattleTask {
    pub fn state(&self) -> BattleStage {
        self.state
    }

    pub fn advance(&mut self, next: BattleStage) -> Result<(), OrchestratorError> {
        if !self.state.can_advance_to(next) {
            return Err(OrchestratorError::InvalidTransition {
                from: self.state,
                to: next,
            });
        }
        self.state = next;
        Ok(())
    }

    /// The contestant shown to the judge as "A".
    pub fn model_a(&self) -> &ModelId {
        if self.swapped {
            &self.contestant_2
        } else {
            &self.contestant_1
        }
    }

    /// The contestant shown to the judge as "B".
    pub fn model_b(&self) -> &ModelId {
        if self.swapped {
            &self.contestant_1
        } else {
            &self.contestant_2
        }
    }
}

pub fn battle_id(contestant_1: &str, contestant_2: &str, question_id: &str) -> String {
    let (lo, hi) = if contestant_1 <= contestant_2 {
        (contestant_1, contestant_2)
    } else {
        (contestant_2, contestant_1)
    };
    short_hash(&format!("battle|{lo}|{hi}|{question_id}"), 16)
}

type PairKey = (ModelId, ModelId);

/// Scheduling history carried across resumes: how often each pair battled,
/// how often the lexicographically lesser side sat as "A", and which
/// questions each pair has already consumed.
#[derive(Debug, Default, Clone)]
pub struct SchedulerPriming {
    pair_counts: BTreeMap<PairKey, u64>,
    lo_as_a: BTreeMap<PairKey, u64>,
    used_questions: BTreeMap<PairKey, BTreeSet<String>>,
}

impl SchedulerPriming {
    pub fn from_replay(state: &ReplayState) -> Self {
        let mut priming = SchedulerPriming::default();
        for record in state.battles.values() {
            let (lo, hi, lo_was_a) = if record.model_a <= record.model_b {
                (record.model_a.clone(), record.model_b.clone(), true)
            } else {
                (record.model_b.clone(), record.model_a.clone(), false)
            };
            priming.account((lo, hi), &record.question_id, lo_was_a);
        }
        for failed in state.failed.values() {
            let (lo, hi) = if failed.contestant_1 <= failed.contestant_2 {
                (failed.contestant_1.clone(), failed.contestant_2.clone())
            } else {
                (failed.contestant_2.clone(), failed.contestant_1.clone())
            };
            // Position balance only tracks judged battles; a failed battle
            // still consumes its (pair, question) slot.
            let key = (lo, hi);
            *priming.pair_counts.entry(key.clone()).or_default() += 1;
            priming
                .used_questions
                .entry(key)
                .or_default()
                .insert(failed.question_id.clone());
        }
        priming
    }

    fn account(&mut self, key: PairKey, question_id: &str, lo_was_a: bool) {
        *self.pair_counts.entry(key.clone()).or_default() += 1;
        if lo_was_a {
            *self.lo_as_a.entry(key.clone()).or_default() += 1;
        }
        self.used_questions
            .entry(key)
            .or_default()
            .insert(question_id.to_string());
    }
}

/// Produces `count` new battle tasks: pairs drawn uniformly among the
/// currently least-battled pairs, questions never repeated within a pair,
/// and "A" positions balanced per pair. Deterministic in `seed`, the model
/// set, the inventory, and the priming.
pub fn schedule(
    models: &[ModelId],
    inventory: &[(VideoId, String)],
    count: usize,
    seed: u64,
    priming: &SchedulerPriming,
) -> Result<Vec<BattleTask>, OrchestratorError> {
    if models.len() < 2 {
        return Err(OrchestratorError::PoolTooSmall(models.len()));
    }
    if inventory.is_empty() && count > 0 {
        return Err(OrchestratorError::EmptyInventory);
    }
    let mut sorted_models = models.to_vec();
    sorted_models.sort();
    sorted_models.dedup();
    let mut pairs: Vec<PairKey> = Vec::new();
    for (i, lo) in sorted_models.iter().enumerate() {
        for hi in &sorted_models[i + 1..] {
            pairs.push((lo.clone(), hi.clone()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<PairKey, u64> = pairs
        .iter()
        .map(|p| (p.clone(), priming.pair_counts.get(p).copied().unwrap_or(0)))
        .collect();
    let mut lo_as_a: BTreeMap<PairKey, u64> = pairs
        .iter()
        .map(|p| (p.clone(), priming.lo_as_a.get(p).copied().unwrap_or(0)))
        .collect();
    let mut used: BTreeMap<PairKey, BTreeSet<String>> = pairs
        .iter()
        .map(|p| (p.clone(), priming.used_questions.get(p).cloned().unwrap_or_default()))
        .collect();

    let mut tasks = Vec::with_capacity(count);
    for scheduled in 0..count {
        let open_pairs: Vec<&PairKey> = pairs
            .iter()
            .filter(|p| used[*p].len() < inventory.len())
            .collect();
        if open_pairs.is_empty() {
            return Err(OrchestratorError::InventoryExhausted {
                scheduled,
                requested: count,
            });
        }
        let min_count = open_pairs.iter().map(|p| counts[*p]).min().expect("nonempty");
        let least: Vec<&PairKey> = open_pairs.into_iter().filter(|p| counts[*p] == min_count).collect();
        let pair = least[rng.gen_range(0..least.len())].clone();

        let available: Vec<&(VideoId, String)> = inventory
            .iter()
            .filter(|(_, qid)| !used[&pair].contains(qid))
            .collect();
        let (video_id, question_id_s) = available[rng.gen_range(0..available.len())].clone();

        let a_count = lo_as_a[&pair];
        let total = counts[&pair];
        let b_count = total - a_count;
        let swapped = match a_count.cmp(&b_count) {
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => rng.gen_bool(0.5),
        };

        *counts.get_mut(&pair).expect("seeded") += 1;
        if !swapped {
            *lo_as_a.get_mut(&pair).expect("seeded") += 1;
        }
        used.get_mut(&pair).expect("seeded").insert(question_id_s.clone());

        tasks.push(BattleTask {
            battle_id: battle_id(&pair.0, &pair.1, &question_id_s),
            video_id,
            question_id: question_id_s,
            contestant_1: pair.0.clone(),
            contestant_2: pair.1.clone(),
            swapped,
            state: BattleStage::Pending,
        });
    }
    Ok(tasks)
}

/// Shared inputs every battle needs.
pub struct BattleContext<'a> {
    pub pool: &'a ModelPool,
    pub judge: &'a Backend,
    pub examiner_model: ModelId,
    pub videos: &'a BTreeMap<VideoId, VideoMeta>,
    pub questions: &'a BTreeMap<String, QuestionSpec>,
    pub personas: &'a BTreeMap<String, Persona>,
    pub two_pass: bool,
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Executes one battle through its stages. Failures return the stage name
/// and cause instead of a record; the task ends `Failed`.
pub async fn run_battle(
    mut task: BattleTask,
    ctx: &BattleContext<'_>,
) -> (BattleTask, Result<Box<BattleRecord>, (String, String)>) {
    let started = unix_ms();
    let result = run_stages(&mut task, ctx, started).await;
    match result {
        Ok(record) => (task, Ok(record)),
        Err((stage, cause)) => {
            task.state = BattleStage::Failed;
            (task, Err((stage, cause)))
        }
    }
}

async fn run_stages(
    task: &mut BattleTask,
    ctx: &BattleContext<'_>,
    started: u64,
) -> Result<Box<BattleRecord>, (String, String)> {
    let fail = |stage: &str, cause: String| (stage.to_string(), cause);

    let video = ctx
        .videos
        .get(&task.video_id)
        .ok_or_else(|| fail("setup", format!("unknown video {}", task.video_id)))?;
    let question = ctx
        .questions
        .get(&task.question_id)
        .ok_or_else(|| fail("setup", format!("unknown question {}", task.question_id)))?;
    let persona = ctx
        .personas
        .get(&question.persona_id)
        .ok_or_else(|| fail("setup", format!("unknown persona {}", question.persona_id)))?;
    let backend_a = ctx
        .pool
        .get(task.model_a())
        .map_err(|e| fail("setup", e.to_string()))?;
    let backend_b = ctx
        .pool
        .get(task.model_b())
        .map_err(|e| fail("setup", e.to_string()))?;

    let req_a = agents::contestant_request(
        format!("{}:a", task.battle_id),
        question,
        video,
        backend_a.descriptor.params.frame_budget,
    )
    .map_err(|e| fail("setup", e.to_string()))?;
    let req_b = agents::contestant_request(
        format!("{}:b", task.battle_id),
        question,
        video,
        backend_b.descriptor.params.frame_budget,
    )
    .map_err(|e| fail("setup", e.to_string()))?;

    let (resp_a, resp_b) = tokio::join!(backend_a.generate(&req_a), backend_b.generate(&req_b));
    let response_a = resp_a.map_err(|e| fail("responses", e.to_string()))?.text;
    let response_b = resp_b.map_err(|e| fail("responses", e.to_string()))?.text;
    task.advance(BattleStage::ResponsesReady)
        .map_err(|e| fail("responses", e.to_string()))?;

    let verdict = agents::judge(
        question,
        persona,
        &response_a,
        &response_b,
        video,
        ctx.judge,
        agents::JudgeOptions {
            two_pass: ctx.two_pass,
            frame_budget: None,
        },
    )
    .await
    .map_err(|e| fail("judging", e.to_string()))?;
    task.advance(BattleStage::Judged)
        .map_err(|e| fail("judging", e.to_string()))?;

    let mut segment_tags = BTreeSet::from([format!("gen:{}", question.generation)]);
    if let Some(tag) = video.bucket.tag() {
        segment_tags.insert(tag);
    }

    Ok(Box::new(BattleRecord {
        battle_id: task.battle_id.clone(),
        video_id: task.video_id.clone(),
        question_id: task.question_id.clone(),
        model_a: task.model_a().clone(),
        model_b: task.model_b().clone(),
        response_a,
        response_b,
        verdict,
        segment_tags,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        examiner_model: ctx.examiner_model.clone(),
        judge_model: ctx.judge.model_id().to_string(),
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
    }))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CampaignOptions {
    pub target_battles: usize,
    pub parallelism: usize,
    pub seed: u64,
}

#[derive(Debug, Default, Serialize)]
pub struct CampaignSummary {
    /// Battles already in the log that counted toward the target.
    pub resumed: usize,
    pub scheduled: usize,
    pub recorded: usize,
    pub failed: usize,
    pub histogram: VerdictHistogram,
    pub per_state: BTreeMap<String, u64>,
}

/// Runs battles with bounded parallelism until the log holds
/// `target_battles` recorded battles, resuming over whatever the replayed
/// state already contains. Completed battles append through a single
/// serialized writer as they finish.
pub async fn run_campaign(
    writer: &mut EventLogWriter,
    state: &ReplayState,
    ctx: &BattleContext<'_>,
    options: CampaignOptions,
    mut on_progress: impl FnMut(usize, usize),
) -> Result<CampaignSummary, OrchestratorError> {
    let existing = state.battles.len();
    let needed = options.target_battles.saturating_sub(existing);

    let inventory: Vec<(VideoId, String)> = state
        .questions
        .values()
        .map(|q| (q.video_id.clone(), q.question_id.clone()))
        .collect();
    let priming = SchedulerPriming::from_replay(state);
    let tasks = schedule(
        &ctx.pool.model_ids(),
        &inventory,
        needed,
        options.seed,
        &priming,
    )?;

    let mut summary = CampaignSummary {
        resumed: existing,
        scheduled: tasks.len(),
        ..CampaignSummary::default()
    };

    let writer = Mutex::new(writer);
    let parallelism = options.parallelism.max(1);
    let mut stream = stream::iter(tasks.into_iter().map(|task| run_battle(task, ctx)))
        .buffer_unordered(parallelism);

    let mut outcomes = Vec::new();
    let mut done = 0usize;
    while let Some((mut task, result)) = stream.next().await {
        let mut writer = writer.lock().expect("writer mutex");
        match result {
            Ok(record) => {
                outcomes.push(record.outcome());
                writer.append(&Event::BattleRecorded { record })?;
                task.advance(BattleStage::Recorded)?;
                summary.recorded += 1;
            }
            Err((stage, cause)) => {
                writer.append(&Event::BattleFailed {
                    battle_id: task.battle_id.clone(),
                    video_id: task.video_id.clone(),
                    question_id: task.question_id.clone(),
                    contestant_1: task.contestant_1.clone(),
                    contestant_2: task.contestant_2.clone(),
                    stage,
                    cause,
                })?;
                summary.failed += 1;
            }
        }
        *summary
            .per_state
            .entry(format!("{:?}", task.state()).to_ascii_lowercase())
            .or_default() += 1;
        done += 1;
        on_progress(done, summary.scheduled);
    }
    summary.histogram = verdict_histogram(&outcomes);
    Ok(summary)
}

/// Outcome counts for one evolution round.
#[derive(Debug, Default, Serialize)]
pub struct EvolutionSummary {
    pub candidates_accepted: usize,
    pub exhausted: usize,
    pub skipped_unbattled: usize,
    pub parents_rated: usize,
}

/// Runs one evolution round: every question that has a recorded battle and
/// no child yet gets a chance to evolve out of its most recent battle.
/// New questions, ratings, analyses, and exhaustions append to the log.
pub async fn run_evolution_round(
    writer: &mut EventLogWriter,
    state: &ReplayState,
    examiner: &Backend,
    max_attempts: u32,
) -> Result<EvolutionSummary, OrchestratorError> {
    let mut summary = EvolutionSummary::default();

    let mut has_child: BTreeSet<&str> = BTreeSet::new();
    for q in state.questions.values() {
        if let Some(parent) = &q.parent_question {
            has_child.insert(parent);
        }
    }

    let mut latest_battle: BTreeMap<&str, &BattleRecord> = BTreeMap::new();
    for record in state.battles.values() {
        latest_battle
            .entry(record.question_id.as_str())
            .and_modify(|current| {
                if (record.finished_unix_ms, &record.battle_id)
                    > (current.finished_unix_ms, &current.battle_id)
                {
                    *current = record;
                }
            })
            .or_insert(record);
    }

    for (question_id, question) in &state.questions {
        if has_child.contains(question_id.as_str()) || state.exhausted.contains(question_id) {
            continue;
        }
        let Some(record) = latest_battle.get(question_id.as_str()) else {
            summary.skipped_unbattled += 1;
            continue;
        };
        let battle = agents::JudgedBattle {
            battle_id: &record.battle_id,
            question_text: &question.text,
            response_a: &record.response_a,
            response_b: &record.response_b,
        };
        let had_complexity = question.complexity.is_some();
        let outcome = agents::evolution_step(question.clone(), &battle, examiner, max_attempts).await?;

        if !had_complexity {
            let parent_scores = if outcome.exhausted {
                outcome.question.complexity
            } else {
                // The accepted candidate carries its own scores; the parent's
                // were rated inside the step and are recomputed cheaply here.
                Some(agents::rate_complexity(question, examiner).await?)
            };
            if let Some(complexity) = parent_scores {
                writer.append(&Event::QuestionRated {
                    question_id: question_id.clone(),
                    complexity,
                })?;
                summary.parents_rated += 1;
            }
        }
        writer.append(&Event::FaultsAnalyzed {
            analysis: outcome.analysis.clone(),
        })?;
        if outcome.exhausted {
            writer.append(&Event::EvolutionExhausted {
                question_id: question_id.clone(),
                attempts: outcome.attempts,
            })?;
            summary.exhausted += 1;
        } else {
            writer.append(&Event::QuestionCreated {
                question: outcome.question.clone(),
            })?;
            summary.candidates_accepted += 1;
        }
    }
    Ok(summary)
}
