//! Prompt templates: a system line, a `---` separator, then the user message
//! with `{{name}}` placeholders.
//!
//! The built-in templates are reconstructions. No reference prompts were
//! available, so they were written for this tool and validated only against
//! the fixture cases in the tests. Override them with `templates_dir` when
//! working against a real model.

use super::ClientError;
use crate::textops::Language;
use std::collections::BTreeMap;
use std::path::Path;

pub const TRIPLE_EXTRACTION: &str = "triple_extraction";
pub const FALSE_ANSWER: &str = "false_answer";
pub const HEAD_ENTITIES: &str = "head_entities";
pub const JUDGE: &str = "judge";

const BUILTIN: [(&str, &str); 4] = [
    (TRIPLE_EXTRACTION, include_str!("../../templates/triple_extraction.txt")),
    (FALSE_ANSWER, include_str!("../../templates/false_answer.txt")),
    (HEAD_ENTITIES, include_str!("../../templates/head_entities.txt")),
    (JUDGE, include_str!("../../templates/judge.txt")),
];

/// A prompt with `{{name}}` placeholders.
///
/// Template files hold the system message, a line containing only `---`, and
/// the user message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub system: String,
    pub text: String,
    pub language: Language,
}

impl PromptTemplate {
    pub fn parse(name: &str, source: &str) -> Self {
        let (system, text) = match source.split_once("\n---\n") {
            Some((s, t)) => (s.trim().to_owned(), t.trim_end().to_owned()),
            None => (String::new(), source.trim_end().to_owned()),
        };
        Self { name: name.to_owned(), system, text, language: Language::English }
    }

    pub fn placeholders(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else { break };
            out.push(after[..end].trim());
            rest = &after[end + 2..];
        }
        out
    }

    /// Substitutes every placeholder; fails if any has no value.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, ClientError> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else { break };
            let key = after[..end].trim();
            let value =
                vars.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(|| {
                    ClientError::Template(format!("template {}: no value for {{{{{key}}}}}", self.name))
                })?;
            out.push_str(&rest[..start]);
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Named prompt templates: the shipped defaults, optionally overridden from
/// a directory of `<name>.txt` files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates =
            BUILTIN.iter().map(|(name, src)| (name.to_string(), PromptTemplate::parse(name, src))).collect();
        Self { templates }
    }
}

impl TemplateSet {
    pub fn with_overrides(dir: &Path) -> Result<Self, ClientError> {
        let mut set = Self::default();
        for (name, _) in BUILTIN {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let src = std::fs::read_to_string(&path)
                    .map_err(|e| ClientError::Template(format!("{}: {e}", path.display())))?;
                set.templates.insert(name.to_owned(), PromptTemplate::parse(name, &src));
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, ClientError> {
        self.templates.get(name).ok_or_else(|| ClientError::Template(format!("unknown template {name}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_with_expected_placeholders() {
        let set = TemplateSet::default();
        assert_eq!(set.get(TRIPLE_EXTRACTION).unwrap().placeholders(), ["question", "context"]);
        assert_eq!(set.get(FALSE_ANSWER).unwrap().placeholders(), ["question", "answer"]);
        assert_eq!(set.get(HEAD_ENTITIES).unwrap().placeholders(), ["question"]);
        assert_eq!(set.get(JUDGE).unwrap().placeholders(), ["question", "label", "output"]);
        assert!(!set.get(JUDGE).unwrap().system.is_empty());
    }

    #[test]
    fn missing_placeholder_fails_loudly() {
        let t = PromptTemplate::parse("x", "sys\n---\nQ: {{question}} A: {{ answer }}");
        assert_eq!(t.render(&[("question", "q"), ("answer", "a")]).unwrap(), "Q: q A: a");
        assert!(matches!(t.render(&[("question", "q")]), Err(ClientError::Template(_))));
    }

    #[test]
    fn overrides_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("judge.txt"), "S\n---\n{{output}} vs {{label}}").unwrap();
        let set = TemplateSet::with_overrides(dir.path()).unwrap();
        assert_eq!(set.get(JUDGE).unwrap().text, "{{output}} vs {{label}}");
        assert_eq!(set.get(HEAD_ENTITIES).unwrap(), TemplateSet::default().get(HEAD_ENTITIES).unwrap());
    }
}
