use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kwsql::llm::HttpConfig;
use kwsql::pipeline::{AblationMode, DEFAULT_K};
use kwsql::store::DEFAULT_DIMENSION;
use kwsql::synth::GenerationConfig;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum LlmBackendConfig {
    Scripted(ScriptedConfig),
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedConfig {
    pub transcripts: Vec<PathBuf>,
    /// Extra transcripts consulted first when running in the given mode.
    #[serde(default)]
    pub by_mode: BTreeMap<AblationMode, Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hashing { dimension: usize },
    Http { url: String, model: String, dimension: usize },
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashing { dimension: DEFAULT_DIMENSION }
    }
}

/// Top-level configuration file. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub schema_path: PathBuf,
    pub dictionary_path: PathBuf,
    pub examples_path: PathBuf,
    #[serde(default)]
    pub value_source_path: Option<PathBuf>,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub llm_backend: Option<LlmBackendConfig>,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    pub database: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_mode")]
    pub mode: AblationMode,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub verbosity: Verbosity,
    #[serde(default)]
    pub generation: GenerationConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verbosity {
    Quiet,
    #[default]
    Normal,
    /// Keeps raw model output in traces.
    Verbose,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_mode() -> AblationMode {
    AblationMode::Complete
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field} path does not exist: {path}")]
    MissingPath { field: &'static str, path: String },
    #[error("{0}")]
    Invalid(String),
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let mut config: AppConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.schema_path);
        fix(&mut self.dictionary_path);
        fix(&mut self.examples_path);
        self.value_source_path.as_mut().map(fix);
        self.templates_dir.as_mut().map(fix);
        if let Some(LlmBackendConfig::Scripted(s)) = &mut self.llm_backend {
            s.transcripts.iter_mut().for_each(fix);
            s.by_mode.values_mut().flatten().for_each(fix);
        }
        // file-backed sqlite targets are paths too
        let target = self.database.strip_prefix("sqlite:").unwrap_or(&self.database);
        if target != ":memory:" && !target.contains("://") && Path::new(target).is_relative() {
            let prefix = if self.database.starts_with("sqlite:") { "sqlite:" } else { "" };
            self.database = format!("{prefix}{}", base.join(target).display());
        }
    }

    pub fn require(field: &'static str, path: &Path) -> Result<(), ConfigError> {
        if path.exists() {
            Ok(())
        } else {
            Err(ConfigError::MissingPath { field, path: path.display().to_string() })
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        Self::require("schema_path", &self.schema_path)?;
        if let Some(d) = &self.templates_dir {
            Self::require("templates_dir", d)?;
        }
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be positive".into()));
        }
        if let Some(LlmBackendConfig::Scripted(s)) = &self.llm_backend {
            if s.transcripts.is_empty() {
                return Err(ConfigError::Invalid("scripted backend lists no transcripts".into()));
            }
            for p in s.transcripts.iter().chain(s.by_mode.values().flatten()) {
                Self::require("transcripts", p)?;
            }
        }
        Ok(())
    }
}
