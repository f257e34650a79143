use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{ChatMessage, LlmError, Prompt, PromptKind, Role};

const EMPTY_SLOT: &str = "(none)";

/// Named values substituted into `{{name}}` placeholders.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptContext {
    slots: BTreeMap<String, String>,
}

impl PromptContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        self.slots.insert(name.to_string(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.slots.get(name).map(String::as_str)
    }
}

/// One template per prompt kind. Templates are split into `[system]` and
/// `[user]` sections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<PromptKind, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let builtin = |k: PromptKind| match k {
            PromptKind::KeywordExtraction => include_str!("../../templates/keyword_extraction.txt"),
            PromptKind::SchemaLinking => include_str!("../../templates/schema_linking.txt"),
            PromptKind::QuestionDecomposition => include_str!("../../templates/question_decomposition.txt"),
            PromptKind::SqlCompilation => include_str!("../../templates/sql_compilation.txt"),
            PromptKind::SynthCreateQuestion => include_str!("../../templates/synth_create_question.txt"),
            PromptKind::SynthGenerateSql => include_str!("../../templates/synth_generate_sql.txt"),
            PromptKind::SynthImproveQuestion => include_str!("../../templates/synth_improve_question.txt"),
        };
        Self { templates: PromptKind::ALL.into_iter().map(|k| (k, builtin(k).to_string())).collect() }
    }
}

impl TemplateSet {
    /// Built-in templates, replaced by any `<kind>.txt` found in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, LlmError> {
        let dir = dir.as_ref();
        let mut set = Self::default();
        for kind in PromptKind::ALL {
            let path = dir.join(format!("{}.txt", kind.as_str()));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| LlmError::Io { path: path.display().to_string(), source })?;
                set.insert(kind, text)?;
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, kind: PromptKind, template: String) -> Result<(), LlmError> {
        let names = placeholders(&template)?;
        if let Some(missing) = kind.required_slots().iter().find(|s| !names.contains(**s)) {
            return Err(LlmError::Template(format!("{kind} template never uses {{{{{missing}}}}}")));
        }
        self.templates.insert(kind, template);
        Ok(())
    }

    pub fn get(&self, kind: PromptKind) -> &str {
        &self.templates[&kind]
    }
}

/// Placeholder names used by a template.
fn placeholders(template: &str) -> Result<BTreeSet<String>, LlmError> {
    let mut out = BTreeSet::new();
    let mut rest = template;
    while let Some(i) = rest.find("{{") {
        let after = &rest[i + 2..];
        let end = after.find("}}").ok_or_else(|| LlmError::Template("unclosed {{ placeholder".into()))?;
        let name = after[..end].trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(LlmError::Template(format!("bad placeholder {:?}", &after[..end])));
        }
        out.insert(name.to_string());
        rest = &after[end + 2..];
    }
    Ok(out)
}

fn render(template: &str, kind: PromptKind, context: &PromptContext) -> Result<String, LlmError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find("{{") {
        out.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        let end = after.find("}}").ok_or_else(|| LlmError::Template("unclosed {{ placeholder".into()))?;
        let name = after[..end].trim();
        let value = context
            .get(name)
            .ok_or_else(|| LlmError::MissingSlot { kind, slot: name.to_string() })?;
        out.push_str(if value.trim().is_empty() { EMPTY_SLOT } else { value });
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Splits a template at `[system]` / `[user]` marker lines; text before any
/// marker belongs to the user.
fn sections(template: &str) -> Vec<(Role, &str)> {
    let mut out = Vec::new();
    let mut role = Role::User;
    let mut start = 0;
    let mut offset = 0;
    for line in template.split_inclusive('\n') {
        let marker = match line.trim() {
            "[system]" => Some(Role::System),
            "[user]" => Some(Role::User),
            _ => None,
        };
        if let Some(next) = marker {
            out.push((role, &template[start..offset]));
            role = next;
            start = offset + line.len();
        }
        offset += line.len();
    }
    out.push((role, &template[start..]));
    out
}

pub fn build_prompt(templates: &TemplateSet, kind: PromptKind, context: &PromptContext) -> Result<Prompt, LlmError> {
    for slot in kind.required_slots() {
        let value = context.get(slot).ok_or_else(|| LlmError::MissingSlot { kind, slot: slot.to_string() })?;
        if *slot == "question" && value.trim().is_empty() {
            return Err(LlmError::EmptySlot { kind, slot: slot.to_string() });
        }
    }
    let mut messages = Vec::new();
    for (role, section) in sections(templates.get(kind)) {
        let text = render(section, kind, context)?.trim().to_string();
        if !text.is_empty() {
            messages.push(ChatMessage { role, content: text });
        }
    }
    if !messages.iter().any(|m| m.role == Role::User) {
        return Err(LlmError::Template(format!("{kind} template renders no user message")));
    }
    Ok(Prompt { kind, messages })
}
