//! Chat-completion gateway: prompt templates, a scripted backend for
//! deterministic runs, an HTTP backend, and tolerant response parsing.

mod http;
mod parse;
mod prompt;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use parse::{parse_structured, Expected, Parsed};
pub use prompt::{build_prompt, PromptContext, TemplateSet};
pub use scripted::{RuleMatch, ScriptedBackend, TranscriptRule};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no transcript rule matches the {kind} prompt")]
    NoMatchingRule { kind: PromptKind },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("could not parse {expected} from response")]
    Parse { expected: Expected, raw: String },
    #[error("{kind} prompt is missing slot {slot:?}")]
    MissingSlot { kind: PromptKind, slot: String },
    #[error("{kind} prompt has an empty {slot:?}")]
    EmptySlot { kind: PromptKind, slot: String },
    #[error("template error: {0}")]
    Template(String),
    #[error("transcript line {line}: {message}")]
    Transcript { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl LlmError {
    /// Raw model output attached to the error, if any.
    pub fn raw(&self) -> Option<&str> {
        match self {
            LlmError::Parse { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    KeywordExtraction,
    SchemaLinking,
    QuestionDecomposition,
    SqlCompilation,
    SynthCreateQuestion,
    SynthGenerateSql,
    SynthImproveQuestion,
}

impl PromptKind {
    pub const ALL: [PromptKind; 7] = [
        PromptKind::KeywordExtraction,
        PromptKind::SchemaLinking,
        PromptKind::QuestionDecomposition,
        PromptKind::SqlCompilation,
        PromptKind::SynthCreateQuestion,
        PromptKind::SynthGenerateSql,
        PromptKind::SynthImproveQuestion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::KeywordExtraction => "keyword_extraction",
            PromptKind::SchemaLinking => "schema_linking",
            PromptKind::QuestionDecomposition => "question_decomposition",
            PromptKind::SqlCompilation => "sql_compilation",
            PromptKind::SynthCreateQuestion => "synth_create_question",
            PromptKind::SynthGenerateSql => "synth_generate_sql",
            PromptKind::SynthImproveQuestion => "synth_improve_question",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }

    /// Slots the template for this kind must receive.
    pub fn required_slots(self) -> &'static [&'static str] {
        match self {
            PromptKind::KeywordExtraction => &["question"],
            PromptKind::SchemaLinking => &["question", "schema", "matches", "examples"],
            PromptKind::QuestionDecomposition => &["question"],
            PromptKind::SqlCompilation => &["question", "view_ddl", "matches", "samples", "examples"],
            PromptKind::SynthCreateQuestion => &["ddl", "samples", "hint", "documentation"],
            PromptKind::SynthGenerateSql => &["question", "ddl", "hint"],
            PromptKind::SynthImproveQuestion => &["question", "sql", "documentation"],
        }
    }

    /// Output shape the template asks for.
    pub fn expected(self) -> Expected {
        match self {
            PromptKind::KeywordExtraction | PromptKind::SchemaLinking | PromptKind::QuestionDecomposition => {
                Expected::JsonArrayOfStrings
            }
            PromptKind::SqlCompilation | PromptKind::SynthGenerateSql => Expected::FencedSql,
            PromptKind::SynthCreateQuestion | PromptKind::SynthImproveQuestion => Expected::JsonObject,
        }
    }
}

impl std::fmt::Display for PromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub kind: PromptKind,
    pub messages: Vec<ChatMessage>,
}

impl Prompt {
    /// Hex SHA-256 over the role and content of every message.
    pub fn digest(&self) -> String {
        prompt_digest(&self.messages)
    }

    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

pub fn prompt_digest(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        h.update(role.as_bytes());
        h.update(b"\n");
        h.update(m.content.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: None, seed: None }
    }
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &Prompt, params: &CompletionParams) -> Result<String, LlmError>;
}

/// One model call as recorded in traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallRecord {
    pub kind: PromptKind,
    pub prompt_digest: String,
    pub raw: String,
    pub attempts: usize,
    #[serde(skip)]
    pub parsed: Parsed,
}

pub const MAX_ATTEMPTS: usize = 2;

/// Backend plus templates and per-call defaults.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    templates: TemplateSet,
    pub temperature: f64,
    pub creative_temperature: f64,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("temperature", &self.temperature).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        Self {
            backend,
            templates: TemplateSet::default(),
            temperature: 0.0,
            creative_temperature: 0.7,
            max_tokens: None,
            seed: None,
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn params_for(&self, kind: PromptKind) -> CompletionParams {
        let temperature = match kind {
            PromptKind::SynthCreateQuestion => self.creative_temperature,
            _ => self.temperature,
        };
        CompletionParams { temperature, max_tokens: self.max_tokens, seed: self.seed }
    }

    pub fn prompt(&self, kind: PromptKind, context: &PromptContext) -> Result<Prompt, LlmError> {
        build_prompt(&self.templates, kind, context)
    }

    /// Renders, sends and parses one call; a parse failure re-asks once with
    /// an explicit output instruction appended.
    pub fn call(&self, kind: PromptKind, context: &PromptContext) -> Result<CallRecord, LlmError> {
        let prompt = self.prompt(kind, context)?;
        self.send(prompt)
    }

    pub fn send(&self, mut prompt: Prompt) -> Result<CallRecord, LlmError> {
        let kind = prompt.kind;
        let digest = prompt.digest();
        let params = self.params_for(kind);
        let expected = kind.expected();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let raw = self.backend.complete(&prompt, &params)?;
            match parse_structured(&raw, expected) {
                Ok(parsed) => return Ok(CallRecord { kind, prompt_digest: digest, raw, attempts, parsed }),
                Err(e) if attempts >= MAX_ATTEMPTS => return Err(e),
                Err(_) => {
                    prompt.messages.push(ChatMessage::assistant(raw));
                    prompt.messages.push(ChatMessage::user(expected.repair_instruction()));
                }
            }
        }
    }
}
