//! Versioned prompt templates.
//!
//! Each template ships inside the binary as a text file with a system half
//! and a user half split by a `===USER===` line. User halves carry
//! `{{name}}` placeholders filled at render time; rendering fails loudly on
//! unknown or leftover placeholders so template drift cannot pass silently.

use std::collections::BTreeMap;

use super::AgentError;

#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    raw: &'static str,
}

pub const PERSONA_V1: Template = Template {
    name: "persona_v1",
    raw: include_str!("templates/persona_v1.txt"),
};
pub const QUESTION_V1: Template = Template {
    name: "question_v1",
    raw: include_str!("templates/question_v1.txt"),
};
pub const ANALYZE_V1: Template = Template {
    name: "analyze_v1",
    raw: include_str!("templates/analyze_v1.txt"),
};
pub const EVOLVE_V1: Template = Template {
    name: "evolve_v1",
    raw: include_str!("templates/evolve_v1.txt"),
};
pub const COMPLEXITY_V1: Template = Template {
    name: "complexity_v1",
    raw: include_str!("templates/complexity_v1.txt"),
};
pub const JUDGE_V1: Template = Template {
    name: "judge_v1",
    raw: include_str!("templates/judge_v1.txt"),
};
pub const RESPOND_V1: Template = Template {
    name: "respond_v1",
    raw: include_str!("templates/respond_v1.txt"),
};

const SEPARATOR: &str = "\n===USER===\n";

impl Template {
    pub fn system(&self) -> &'static str {
        self.raw
            .split_once(SEPARATOR)
            .map(|(system, _)| system)
            .unwrap_or(self.raw)
    }

    fn user_raw(&self) -> &'static str {
        self.raw
            .split_once(SEPARATOR)
            .map(|(_, user)| user)
            .unwrap_or("")
    }

    /// Fills the user half's placeholders in a single left-to-right scan, so
    /// placeholder-like text inside substituted values stays literal. Every
    /// provided variable must be used and every placeholder must be provided.
    pub fn render_user(&self, vars: &BTreeMap<&str, String>) -> Result<String, AgentError> {
        let raw = self.user_raw();
        let mut out = String::with_capacity(raw.len());
        let mut rest = raw;
        let mut used: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else {
                return Err(AgentError::Template {
                    template: self.name,
                    detail: "unterminated placeholder".into(),
                });
            };
            let name = &after[..end];
            match vars.get(name) {
                Some(value) => {
                    out.push_str(value);
                    used.insert(name);
                }
                None => {
                    return Err(AgentError::Template {
                        template: self.name,
                        detail: format!("no value provided for placeholder {name}"),
                    })
                }
            }
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        if let Some(unused) = vars.keys().find(|k| !used.contains(*k)) {
            return Err(AgentError::Template {
                template: self.name,
                detail: format!("no placeholder named {unused}"),
            });
        }
        Ok(out.trim_end().to_string())
    }
}
