//! Deterministic in-process backends.
//!
//! Scripted profiles make the whole pipeline runnable without network access:
//! the same request always yields the same text, so campaigns, tests, and dry
//! runs are reproducible end to end. Profiles that play agent roles key off
//! task marker lines the prompt templates embed, and answer in the structured
//! formats the agent parsers expect.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GenerationRequest;

pub const TASK_PERSONAS: &str = "Task: generate-personas";
pub const TASK_QUESTION: &str = "Task: generate-question";
pub const TASK_ANALYZE: &str = "Task: analyze-faults";
pub const TASK_EVOLVE: &str = "Task: evolve-question";
pub const TASK_COMPLEXITY: &str = "Task: rate-complexity";
pub const TASK_JUDGE: &str = "Task: judge-battle";

pub const ANSWER_A_MARK: &str = "===ANSWER A===";
pub const ANSWER_B_MARK: &str = "===ANSWER B===";
pub const ANSWER_END_MARK: &str = "===END ANSWERS===";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum ScriptProfile {
    /// Replies with a digest of the request; the catch-all default.
    HashEcho,
    /// Plays every examiner role, keyed off the task marker in the prompt.
    Examiner,
    /// Contestant whose answer length grows strictly with `strength`.
    Contestant { strength: u32 },
    /// Judge that picks the longer answer, ties on equal length.
    JudgePreferLonger,
    /// Judge that always picks position A, for position-bias audits.
    JudgeAlwaysA,
    /// Replies with fixed text regardless of input.
    Canned { text: String },
}

impl ScriptProfile {
    pub fn respond(&self, model_id: &str, req: &GenerationRequest) -> String {
        match self {
            ScriptProfile::HashEcho => format!("response:{}", request_hash(model_id, req)),
            ScriptProfile::Examiner => examiner_respond(req),
            ScriptProfile::Contestant { strength } => contestant_respond(model_id, *strength, req),
            ScriptProfile::JudgePreferLonger => judge_prefer_longer(req),
            ScriptProfile::JudgeAlwaysA => {
                "VERDICT: A\nRATIONALE: the first response follows the instructions best.".into()
            }
            ScriptProfile::Canned { text } => text.clone(),
        }
    }
}

fn request_hash(model_id: &str, req: &GenerationRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update(req.system_text.as_bytes());
    hasher.update(req.user_text_with_subtitles().as_bytes());
    for frame in &req.frames {
        hasher.update(frame.display().to_string().as_bytes());
    }
    hex::encode(&hasher.finalize()[..6])
}

fn prompt_contains(req: &GenerationRequest, marker: &str) -> bool {
    req.system_text.contains(marker) || req.user_text.contains(marker)
}

fn examiner_respond(req: &GenerationRequest) -> String {
    let h = request_hash("examiner", req);
    if prompt_contains(req, TASK_PERSONAS) {
        let levels = [
            ("HIGH", "works in the video's subject area and follows it closely"),
            ("MODERATE", "has a hobbyist's passing familiarity with the topic"),
            ("UNRELATED", "stumbled onto the video with no background in the topic"),
        ];
        levels
            .iter()
            .map(|(level, blurb)| {
                format!(
                    "===PERSONA===\nrelevance: {level}\ndescription: viewer-{h} who {blurb}\nmotivation: wants answers matching that background ({h})"
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    } else if prompt_contains(req, TASK_QUESTION) {
        format!("QUESTION: Walk me through what happens in this video and why it matters to someone like me. (angle q-{h})")
    } else if prompt_contains(req, TASK_ANALYZE) {
        let (a, b) = answer_blocks(&req.user_text);
        let fault = |side: &str, text: &str| {
            if text.trim().is_empty() {
                format!("WEAKNESS {side}: response was empty")
            } else {
                format!("WEAKNESS {side}: glosses over timeline details ({h})")
            }
        };
        format!(
            "{}\n{}\nSUMMARY: both answers left room for more specific evidence ({h})",
            fault("A", &a),
            fault("B", &b)
        )
    } else if prompt_contains(req, TASK_EVOLVE) {
        format!("QUESTION: Beyond the surface events, explain the causal chain between scenes and justify each claim with visual evidence. (revision e-{h})")
    } else if prompt_contains(req, TASK_COMPLEXITY) {
        let digest = Sha256::digest(req.user_text.as_bytes());
        let scores: Vec<String> = digest[..5].iter().map(|b| (1 + (b % 5)).to_string()).collect();
        format!("SCORES: {}", scores.join(", "))
    } else if prompt_contains(req, TASK_JUDGE) {
        let verdict = match Sha256::digest(req.user_text.as_bytes())[0] % 3 {
            0 => "A",
            1 => "B",
            _ => "TIE",
        };
        format!("VERDICT: {verdict}\nRATIONALE: deterministic pick ({h})")
    } else {
        format!("response:{h}")
    }
}

fn contestant_respond(model_id: &str, strength: u32, req: &GenerationRequest) -> String {
    let h = request_hash(model_id, req);
    let mut text = format!("[{model_id}] The video shows a clear sequence of events; here is my reading ({h}).");
    for i in 0..strength {
        text.push_str(&format!(
            " Observation {n}: a concrete visual detail supporting the answer.",
            n = i + 1
        ));
    }
    text
}

/// The answer blocks a judge or analysis prompt carries, in position order.
pub fn answer_blocks(user_text: &str) -> (String, String) {
    let section = |start: &str, end: &str| -> String {
        let Some(s) = user_text.find(start) else {
            return String::new();
        };
        let after = &user_text[s + start.len()..];
        match after.find(end) {
            Some(e) => after[..e].trim().to_string(),
            None => after.trim().to_string(),
        }
    };
    (
        section(ANSWER_A_MARK, ANSWER_B_MARK),
        section(ANSWER_B_MARK, ANSWER_END_MARK),
    )
}

fn judge_prefer_longer(req: &GenerationRequest) -> String {
    let (a, b) = answer_blocks(&req.user_text);
    let (la, lb) = (a.chars().count(), b.chars().count());
    let verdict = match la.cmp(&lb) {
        std::cmp::Ordering::Greater => "A",
        std::cmp::Ordering::Less => "B",
        std::cmp::Ordering::Equal => "TIE",
    };
    format!("VERDICT: {verdict}\nRATIONALE: compared answer depth ({la} vs {lb} characters).")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(user: &str) -> GenerationRequest {
        GenerationRequest::text_only("t", "sys", user)
    }

    #[test]
    fn hash_echo_is_deterministic_and_input_sensitive() {
        let p = ScriptProfile::HashEcho;
        let a = p.respond("m", &req("one"));
        assert_eq!(a, p.respond("m", &req("one")));
        assert_ne!(a, p.respond("m", &req("two")));
        assert_ne!(a, p.respond("other", &req("one")));
    }

    #[test]
    fn contestant_length_is_strictly_monotone_in_strength() {
        let r = req("question");
        let mut last = 0;
        for strength in 0..6 {
            let text = ScriptProfile::Contestant { strength }.respond("m", &r);
            assert!(text.len() > last, "strength {strength} not longer");
            last = text.len();
        }
    }

    #[test]
    fn examiner_emits_three_personas_one_per_level() {
        let text = ScriptProfile::Examiner.respond("e", &req(&format!("{TASK_PERSONAS}\nvideo: v1")));
        assert_eq!(text.matches("===PERSONA===").count(), 3);
        for level in ["HIGH", "MODERATE", "UNRELATED"] {
            assert_eq!(text.matches(&format!("relevance: {level}")).count(), 1);
        }
    }

    #[test]
    fn examiner_scores_are_five_in_range() {
        let text = ScriptProfile::Examiner.respond("e", &req(&format!("{TASK_COMPLEXITY}\nquestion: how")));
        let nums: Vec<u8> = text
            .trim_start_matches("SCORES:")
            .split(',')
            .map(|s| s.trim().parse().unwrap())
            .collect();
        assert_eq!(nums.len(), 5);
        assert!(nums.iter().all(|n| (1..=5).contains(n)));
    }

    #[test]
    fn longer_judge_reads_blocks_positionally() {
        let user = format!(
            "{TASK_JUDGE}\n{ANSWER_A_MARK}\nshort\n{ANSWER_B_MARK}\na much longer response with detail\n{ANSWER_END_MARK}"
        );
        let verdict = ScriptProfile::JudgePreferLonger.respond("j", &req(&user));
        assert!(verdict.starts_with("VERDICT: B"));

        let user = format!("{TASK_JUDGE}\n{ANSWER_A_MARK}\nsame\n{ANSWER_B_MARK}\nsame\n{ANSWER_END_MARK}");
        let verdict = ScriptProfile::JudgePreferLonger.respond("j", &req(&user));
        assert!(verdict.starts_with("VERDICT: TIE"));
    }

    #[test]
    fn analysis_flags_empty_answers() {
        let user = format!("{TASK_ANALYZE}\n{ANSWER_A_MARK}\n\n{ANSWER_B_MARK}\nfine answer\n{ANSWER_END_MARK}");
        let text = ScriptProfile::Examiner.respond("e", &req(&user));
        assert!(text.contains("WEAKNESS A: response was empty"));
        assert!(text.contains("WEAKNESS B: glosses"));
        assert!(text.contains("SUMMARY:"));
    }

    #[test]
    fn profile_toml_round_trip() {
        let toml_src = r#"profile = "contestant"
strength = 3"#;
        let p: ScriptProfile = toml::from_str(toml_src).unwrap();
        assert_eq!(p, ScriptProfile::Contestant { strength: 3 });
    }
}
