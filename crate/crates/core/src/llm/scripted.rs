use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompletionParams, LlmBackend, LlmError, Prompt, PromptKind};

/// Conditions a prompt must meet; all present fields must hold.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PromptKind>,
    /// Substring of the concatenated message contents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    /// Hex prompt digest, see [`Prompt::digest`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRule {
    #[serde(rename = "match")]
    pub matcher: RuleMatch,
    pub response: String,
}

impl TranscriptRule {
    pub fn kind(kind: PromptKind, response: impl Into<String>) -> Self {
        Self { matcher: RuleMatch { kind: Some(kind), ..Default::default() }, response: response.into() }
    }

    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self { matcher: RuleMatch { contains: Some(needle.into()), ..Default::default() }, response: response.into() }
    }

    pub fn matches(&self, prompt: &Prompt) -> bool {
        let m = &self.matcher;
        m.kind.is_none_or(|k| k == prompt.kind)
            && m.contains.as_deref().is_none_or(|c| prompt.messages.iter().any(|msg| msg.content.contains(c)))
            && m.hash.as_deref().is_none_or(|h| h.eq_ignore_ascii_case(&prompt.digest()))
    }
}

/// Answers from an ordered rule list; the first matching rule wins.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    rules: Vec<TranscriptRule>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<TranscriptRule>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[TranscriptRule] {
        &self.rules
    }

    pub fn read(reader: impl BufRead) -> Result<Self, LlmError> {
        let mut rules = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LlmError::Transcript { line: i + 1, message: e.to_string() })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with("//") {
                continue;
            }
            let rule: TranscriptRule = serde_json::from_str(trimmed)
                .map_err(|e| LlmError::Transcript { line: i + 1, message: e.to_string() })?;
            if rule.matcher == RuleMatch::default() {
                return Err(LlmError::Transcript { line: i + 1, message: "rule has an empty match".into() });
            }
            rules.push(rule);
        }
        Ok(Self { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| LlmError::Io { path: path.display().to_string(), source })?;
        Self::read(std::io::BufReader::new(file))
    }

    /// Loads and concatenates several transcript files in order.
    pub fn load_all<P: AsRef<Path>>(paths: &[P]) -> Result<Self, LlmError> {
        let mut rules = Vec::new();
        for p in paths {
            rules.extend(Self::load(p)?.rules);
        }
        Ok(Self { rules })
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, prompt: &Prompt, _params: &CompletionParams) -> Result<String, LlmError> {
        self.rules
            .iter()
            .find(|r| r.matches(prompt))
            .map(|r| r.response.clone())
            .ok_or(LlmError::NoMatchingRule { kind: prompt.kind })
    }
}
