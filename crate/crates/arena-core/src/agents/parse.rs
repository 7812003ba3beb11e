//! Parsers for the structured blocks agent prompts ask models to emit.
//!
//! All parsers are lenient about surrounding prose (models often add
//! preambles) but strict about the block contents. They return `None` on any
//! violation; callers turn that into a bounded re-prompt.

use std::collections::BTreeMap;

use super::{ComplexityScores, Relevance, Winner};

/// Extracts exactly three persona blocks covering each relevance level once.
/// Returns `(relevance, description, motivation)` triples.
pub fn parse_personas(text: &str) -> Option<Vec<(Relevance, String, String)>> {
    let mut personas = Vec::new();
    for block in text.split("===PERSONA===").skip(1) {
        let mut relevance = None;
        let mut description = None;
        let mut motivation = None;
        for line in block.lines() {
            let line = line.trim();
            if let Some(v) = line.strip_prefix("relevance:") {
                relevance = Relevance::from_str(v.trim());
            } else if let Some(v) = line.strip_prefix("description:") {
                description = Some(v.trim().to_string());
            } else if let Some(v) = line.strip_prefix("motivation:") {
                motivation = Some(v.trim().to_string());
            }
        }
        personas.push((relevance?, description?, motivation?));
    }
    if personas.len() != 3 {
        return None;
    }
    let mut seen = [false; 3];
    for (relevance, ..) in &personas {
        let idx = *relevance as usize;
        if seen[idx] {
            return None;
        }
        seen[idx] = true;
    }
    seen.iter().all(|s| *s).then_some(personas)
}

/// Extracts the text after the first `QUESTION:` marker.
pub fn parse_question(text: &str) -> Option<String> {
    for line in text.lines() {
        if let Some(q) = line.trim().strip_prefix("QUESTION:") {
            let q = q.trim();
            if !q.is_empty() {
                return Some(q.to_string());
            }
        }
    }
    None
}

/// Extracts per-side weakness lists and the summary line.
pub fn parse_faults(text: &str) -> Option<(Vec<String>, Vec<String>, String)> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut summary = None;
    for line in text.lines() {
        let line = line.trim();
        if let Some(v) = line.strip_prefix("WEAKNESS A:") {
            a.push(v.trim().to_string());
        } else if let Some(v) = line.strip_prefix("WEAKNESS B:") {
            b.push(v.trim().to_string());
        } else if let Some(v) = line.strip_prefix("SUMMARY:") {
            summary = Some(v.trim().to_string());
        }
    }
    if a.is_empty() || b.is_empty() {
        return None;
    }
    Some((a, b, summary?))
}

/// Extracts five integer scores in 1..=5 from a `SCORES:` line, in the order
/// instruction following, accuracy, relevance, helpfulness, overall.
pub fn parse_scores(text: &str) -> Option<ComplexityScores> {
    let line = text.lines().find_map(|l| l.trim().strip_prefix("SCORES:"))?;
    let values: Vec<u8> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect::<Option<Vec<u8>>>()?;
    if values.len() != 5 || values.iter().any(|v| !(1..=5).contains(v)) {
        return None;
    }
    Some(ComplexityScores {
        instruction_following: values[0],
        accuracy: values[1],
        relevance: values[2],
        helpfulness: values[3],
        overall: values[4],
    })
}

/// Extracts the verdict, rationale, and any per-standard notes.
pub fn parse_verdict(text: &str) -> Option<(Winner, String, Option<BTreeMap<String, String>>)> {
    let mut winner = None;
    let mut rationale = String::new();
    let mut notes = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(v) = line.strip_prefix("VERDICT:") {
            winner = match v.trim().to_ascii_uppercase().as_str() {
                "A" => Some(Winner::A),
                "B" => Some(Winner::B),
                "TIE" => Some(Winner::Tie),
                _ => return None,
            };
        } else if let Some(v) = line.strip_prefix("RATIONALE:") {
            rationale = v.trim().to_string();
        } else if let Some(v) = line.strip_prefix("NOTE ") {
            if let Some((standard, note)) = v.split_once(':') {
                notes.insert(standard.trim().to_string(), note.trim().to_string());
            }
        }
    }
    Some((
        winner?,
        rationale,
        if notes.is_empty() { None } else { Some(notes) },
    ))
}
