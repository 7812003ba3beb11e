//! The agent roles: persona generation, question asking, fault analysis,
//! question evolution with a complexity gate, and pairwise judging.
//!
//! Every role is a prompt template rendered and executed through the gateway,
//! followed by a strict parse of the structured reply. Parse failures trigger
//! bounded re-prompting before surfacing as errors.

mod parse;
pub mod templates;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Backend, GatewayError, GenerationRequest};
use crate::media::{self, MediaError, VideoMeta};
use crate::short_hash;

/// Re-prompts allowed after the first unparseable reply.
pub const MAX_REPROMPTS: u32 = 2;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("task {task_id}: could not parse {what} from model output after {attempts} attempts")]
    ParseFailure {
        task_id: String,
        what: &'static str,
        attempts: u32,
    },
    #[error("template {template}: {detail}")]
    Template {
        template: &'static str,
        detail: String,
    },
    #[error("{0}")]
    ContextMismatch(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Media(#[from] MediaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    High = 0,
    Moderate = 1,
    Unrelated = 2,
}

impl Relevance {
    pub fn from_str(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HIGH" => Some(Relevance::High),
            "MODERATE" => Some(Relevance::Moderate),
            "UNRELATED" => Some(Relevance::Unrelated),
            _ => None,
        }
    }
}

impl fmt::Display for Relevance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relevance::High => "HIGH",
            Relevance::Moderate => "MODERATE",
            Relevance::Unrelated => "UNRELATED",
        })
    }
}

/// A simulated viewer of one video.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Persona {
    pub persona_id: String,
    pub video_id: String,
    pub relevance: Relevance,
    pub description: String,
    pub motivation: String,
}

/// A question a persona asked about a video, possibly an evolved one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub question_id: String,
    pub persona_id: String,
    pub video_id: String,
    pub text: String,
    pub generation: u32,
    #[serde(default)]
    pub parent_question: Option<String>,
    #[serde(default)]
    pub complexity: Option<ComplexityScores>,
}

/// Difficulty ratings on the five judging-aligned dimensions, each 1 to 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityScores {
    pub instruction_following: u8,
    pub accuracy: u8,
    pub relevance: u8,
    pub helpfulness: u8,
    pub overall: u8,
}

impl ComplexityScores {
    pub fn in_range(&self) -> bool {
        [
            self.instruction_following,
            self.accuracy,
            self.relevance,
            self.helpfulness,
            self.overall,
        ]
        .iter()
        .all(|v| (1..=5).contains(v))
    }
}

/// Weaknesses the analysis agent found in each side's answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultAnalysis {
    pub battle_id: String,
    pub weaknesses_a: Vec<String>,
    pub weaknesses_b: Vec<String>,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub winner: Winner,
    pub rationale: String,
    #[serde(default)]
    pub standards_notes: Option<BTreeMap<String, String>>,
}

/// The judged battle fields the analysis and evolution roles need.
#[derive(Debug, Clone, Copy)]
pub struct JudgedBattle<'a> {
    pub battle_id: &'a str,
    pub question_text: &'a str,
    pub response_a: &'a str,
    pub response_b: &'a str,
}

/// What an evolution step produced: either an accepted harder question or
/// the parent unchanged after exhausting all attempts.
#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    pub question: QuestionSpec,
    pub exhausted: bool,
    pub attempts: u32,
    pub analysis: FaultAnalysis,
}

fn persona_id(video_id: &str, relevance: Relevance, description: &str, motivation: &str) -> String {
    short_hash(&format!("persona|{video_id}|{relevance}|{description}|{motivation}"), 16)
}

fn question_id(persona_id: &str, generation: u32, text: &str) -> String {
    short_hash(&format!("question|{persona_id}|{generation}|{text}"), 16)
}

/// Runs a generation, retrying with a format reminder until the reply
/// parses or the re-prompt budget runs out.
async fn call_parsed<T>(
    backend: &Backend,
    mut req: GenerationRequest,
    what: &'static str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<T, AgentError> {
    for _ in 0..=MAX_REPROMPTS {
        let response = backend.generate(&req).await?;
        if let Some(value) = parse(&response.text) {
            return Ok(value);
        }
        req.user_text = format!(
            "{}\n\nYour previous reply could not be parsed. Answer again using exactly the required format.",
            req.user_text
        );
    }
    Err(AgentError::ParseFailure {
        task_id: req.task_id,
        what,
        attempts: MAX_REPROMPTS + 1,
    })
}

fn video_request(
    task_id: String,
    template: templates::Template,
    vars: &BTreeMap<&str, String>,
    video: &VideoMeta,
    frame_budget: usize,
) -> Result<GenerationRequest, AgentError> {
    let mut req = GenerationRequest::text_only(task_id, template.system(), template.render_user(vars)?);
    req.frames = media::sample_frames(video, frame_budget);
    req.subtitles = media::load_subtitles(video)?;
    Ok(req)
}

/// Invents the three viewer personas for a video, one per relevance level.
pub async fn generate_personas(video: &VideoMeta, examiner: &Backend) -> Result<Vec<Persona>, AgentError> {
    let vars = BTreeMap::from([
        ("video_id", video.video_id.clone()),
        ("category", video.category.clone()),
        ("duration_s", format!("{:.0}", video.duration_s)),
    ]);
    let req = video_request(
        format!("personas:{}", video.video_id),
        templates::PERSONA_V1,
        &vars,
        video,
        examiner.descriptor.params.frame_budget,
    )?;
    let triples = call_parsed(examiner, req, "persona set", parse::parse_personas).await?;
    Ok(triples
        .into_iter()
        .map(|(relevance, description, motivation)| Persona {
            persona_id: persona_id(&video.video_id, relevance, &description, &motivation),
            video_id: video.video_id.clone(),
            relevance,
            description,
            motivation,
        })
        .collect())
}

/// Asks one seed question in the persona's voice.
pub async fn generate_question(
    persona: &Persona,
    video: &VideoMeta,
    examiner: &Backend,
) -> Result<QuestionSpec, AgentError> {
    if persona.video_id != video.video_id {
        return Err(AgentError::ContextMismatch(format!(
            "persona {} does not belong to video {}",
            persona.persona_id, video.video_id
        )));
    }
    let vars = BTreeMap::from([
        ("relevance", persona.relevance.to_string()),
        ("description", persona.description.clone()),
        ("motivation", persona.motivation.clone()),
        ("category", video.category.clone()),
    ]);
    let req = video_request(
        format!("question:{}", persona.persona_id),
        templates::QUESTION_V1,
        &vars,
        video,
        examiner.descriptor.params.frame_budget,
    )?;
    let text = call_parsed(examiner, req, "question", parse::parse_question).await?;
    Ok(QuestionSpec {
        question_id: question_id(&persona.persona_id, 0, &text),
        persona_id: persona.persona_id.clone(),
        video_id: persona.video_id.clone(),
        text,
        generation: 0,
        parent_question: None,
        complexity: None,
    })
}

/// Reviews both contestants' answers and lists concrete weaknesses.
pub async fn analyze_faults(battle: &JudgedBattle<'_>, examiner: &Backend) -> Result<FaultAnalysis, AgentError> {
    let vars = BTreeMap::from([
        ("question", battle.question_text.to_string()),
        ("answer_a", battle.response_a.to_string()),
        ("answer_b", battle.response_b.to_string()),
    ]);
    let req = GenerationRequest::text_only(
        format!("analyze:{}", battle.battle_id),
        templates::ANALYZE_V1.system(),
        templates::ANALYZE_V1.render_user(&vars)?,
    );
    let (weaknesses_a, weaknesses_b, summary) =
        call_parsed(examiner, req, "fault analysis", parse::parse_faults).await?;
    Ok(FaultAnalysis {
        battle_id: battle.battle_id.to_string(),
        weaknesses_a,
        weaknesses_b,
        summary,
    })
}

/// Writes one harder candidate question from the parent and its analysis.
pub async fn evolve_question(
    prev: &QuestionSpec,
    analysis: &FaultAnalysis,
    attempt: u32,
    examiner: &Backend,
) -> Result<QuestionSpec, AgentError> {
    let faults = analysis
        .weaknesses_a
        .iter()
        .map(|w| format!("- answer A: {w}"))
        .chain(analysis.weaknesses_b.iter().map(|w| format!("- answer B: {w}")))
        .collect::<Vec<_>>()
        .join("\n");
    let vars = BTreeMap::from([
        ("question", prev.text.clone()),
        ("faults", faults),
        ("attempt", attempt.to_string()),
    ]);
    let req = GenerationRequest::text_only(
        format!("evolve:{}:{attempt}", prev.question_id),
        templates::EVOLVE_V1.system(),
        templates::EVOLVE_V1.render_user(&vars)?,
    );
    let text = call_parsed(examiner, req, "evolved question", parse::parse_question).await?;
    let generation = prev.generation + 1;
    Ok(QuestionSpec {
        question_id: question_id(&prev.persona_id, generation, &text),
        persona_id: prev.persona_id.clone(),
        video_id: prev.video_id.clone(),
        text,
        generation,
        parent_question: Some(prev.question_id.clone()),
        complexity: None,
    })
}

/// Scores a question's difficulty on the five dimensions.
pub async fn rate_complexity(question: &QuestionSpec, examiner: &Backend) -> Result<ComplexityScores, AgentError> {
    let vars = BTreeMap::from([("question", question.text.clone())]);
    let req = GenerationRequest::text_only(
        format!("complexity:{}", question.question_id),
        templates::COMPLEXITY_V1.system(),
        templates::COMPLEXITY_V1.render_user(&vars)?,
    );
    call_parsed(examiner, req, "complexity scores", parse::parse_scores).await
}

/// One evolution round for a question: analyze the battle, then propose
/// candidates until one strictly beats the parent's overall complexity or
/// the attempt budget is spent. Exhaustion hands back the parent unchanged.
pub async fn evolution_step(
    mut prev: QuestionSpec,
    battle: &JudgedBattle<'_>,
    examiner: &Backend,
    max_attempts: u32,
) -> Result<EvolutionOutcome, AgentError> {
    if prev.complexity.is_none() {
        prev.complexity = Some(rate_complexity(&prev, examiner).await?);
    }
    let parent_overall = prev.complexity.expect("just rated").overall;
    let analysis = analyze_faults(battle, examiner).await?;
    for attempt in 1..=max_attempts {
        let mut candidate = evolve_question(&prev, &analysis, attempt, examiner).await?;
        let scores = rate_complexity(&candidate, examiner).await?;
        if scores.overall > parent_overall {
            candidate.complexity = Some(scores);
            return Ok(EvolutionOutcome {
                question: candidate,
                exhausted: false,
                attempts: attempt,
                analysis,
            });
        }
    }
    Ok(EvolutionOutcome {
        question: prev,
        exhausted: true,
        attempts: max_attempts,
        analysis,
    })
}

/// Builds the generation request a contestant answers.
pub fn contestant_request(
    task_id: String,
    question: &QuestionSpec,
    video: &VideoMeta,
    frame_budget: usize,
) -> Result<GenerationRequest, AgentError> {
    let vars = BTreeMap::from([("question", question.text.clone())]);
    video_request(task_id, templates::RESPOND_V1, &vars, video, frame_budget)
}

/// Knobs for a judging call. `frame_budget` overrides the judge backend's
/// own budget when set; zero sends a text-only comparison.
#[derive(Debug, Clone, Copy, Default)]
pub struct JudgeOptions {
    pub two_pass: bool,
    pub frame_budget: Option<usize>,
}

/// Judges two anonymous answers. Empty answers lose without consulting the
/// judge; with `two_pass` set the judge runs again with swapped positions
/// and any disagreement becomes a tie.
pub async fn judge(
    question: &QuestionSpec,
    persona: &Persona,
    response_a: &str,
    response_b: &str,
    video: &VideoMeta,
    judge_backend: &Backend,
    options: JudgeOptions,
) -> Result<JudgeVerdict, AgentError> {
    match (response_a.trim().is_empty(), response_b.trim().is_empty()) {
        (true, true) => {
            return Ok(JudgeVerdict {
                winner: Winner::Tie,
                rationale: "both responses were empty".into(),
                standards_notes: None,
            })
        }
        (true, false) => {
            return Ok(JudgeVerdict {
                winner: Winner::B,
                rationale: "response A was empty".into(),
                standards_notes: None,
            })
        }
        (false, true) => {
            return Ok(JudgeVerdict {
                winner: Winner::A,
                rationale: "response B was empty".into(),
                standards_notes: None,
            })
        }
        (false, false) => {}
    }

    let first = judge_once(question, persona, response_a, response_b, video, judge_backend, options, "fwd").await?;
    if !options.two_pass {
        return Ok(first);
    }
    let second = judge_once(question, persona, response_b, response_a, video, judge_backend, options, "rev").await?;
    let second_mapped = match second.winner {
        Winner::A => Winner::B,
        Winner::B => Winner::A,
        Winner::Tie => Winner::Tie,
    };
    if first.winner == second_mapped {
        Ok(first)
    } else {
        Ok(JudgeVerdict {
            winner: Winner::Tie,
            rationale: "judge verdicts disagreed across swapped positions".into(),
            standards_notes: None,
        })
    }
}

#[allow(clippy::too_many_arguments)]
async fn judge_once(
    question: &QuestionSpec,
    persona: &Persona,
    answer_a: &str,
    answer_b: &str,
    video: &VideoMeta,
    judge_backend: &Backend,
    options: JudgeOptions,
    pass: &str,
) -> Result<JudgeVerdict, AgentError> {
    let vars = BTreeMap::from([
        ("relevance", persona.relevance.to_string()),
        ("description", persona.description.clone()),
        ("motivation", persona.motivation.clone()),
        ("question", question.text.clone()),
        ("answer_a", answer_a.to_string()),
        ("answer_b", answer_b.to_string()),
    ]);
    let budget = options
        .frame_budget
        .unwrap_or(judge_backend.descriptor.params.frame_budget);
    let req = video_request(
        format!("judge:{}:{pass}", question.question_id),
        templates::JUDGE_V1,
        &vars,
        video,
        budget,
    )?;
    let (winner, rationale, standards_notes) =
        call_parsed(judge_backend, req, "judge verdict", parse::parse_verdict).await?;
    Ok(JudgeVerdict {
        winner,
        rationale,
        standards_notes,
    })
}
