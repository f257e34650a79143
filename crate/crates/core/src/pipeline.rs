//! Question answering: schema linking followed by SQL compilation over a
//! synthesized join view, in six linking variants.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{ConnectionError, ExecutionBackend};
use crate::join::{inline_view, synthesize_view_with, JoinError, ViewConfig, ViewDefinition};
use crate::keyword::{KeywordDictionary, MatchSet};
use crate::llm::{text_digest, CallRecord, Gateway, LlmError, PromptContext, PromptKind};
use crate::schema::{ReferentialGraph, RelationalSchema};
use crate::sql::{self, SqlError};
use crate::store::{intercalate, rewrite_from_clause, ExamplePair, ExampleStore, StoreError};
use crate::text::ident_eq;

pub const DEFAULT_K: usize = 8;
pub const MAX_SUB_QUESTIONS: usize = 4;
pub const SAMPLE_ROWS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    LlmOnly,
    DankeOnly,
    LlmDfe,
    LlmDanke,
    LlmDfeDanke,
    Complete,
}

impl AblationMode {
    pub const ALL: [AblationMode; 6] = [
        AblationMode::LlmOnly,
        AblationMode::DankeOnly,
        AblationMode::LlmDfe,
        AblationMode::LlmDanke,
        AblationMode::LlmDfeDanke,
        AblationMode::Complete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::LlmOnly => "llm_only",
            AblationMode::DankeOnly => "danke_only",
            AblationMode::LlmDfe => "llm_dfe",
            AblationMode::LlmDanke => "llm_danke",
            AblationMode::LlmDfeDanke => "llm_dfe_danke",
            AblationMode::Complete => "complete",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == name)
    }
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: String,
    pub input_digest: String,
    pub output_digest: String,
    pub raw: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl StepRecord {
    fn new(step: &str, input: &str, output: &str) -> Self {
        Self {
            step: step.to_string(),
            input_digest: text_digest(input),
            output_digest: text_digest(output),
            raw: None,
            warnings: Vec::new(),
        }
    }

    fn llm(call: &CallRecord) -> Self {
        Self {
            step: call.kind.as_str().to_string(),
            input_digest: call.prompt_digest.clone(),
            output_digest: text_digest(&call.raw),
            raw: Some(call.raw.clone()),
            warnings: Vec::new(),
        }
    }

    fn warn(mut self, w: impl Into<String>) -> Self {
        let w = w.into();
        tracing::warn!(step = %self.step, "{w}");
        self.warnings.push(w);
        self
    }

    pub fn is_llm_call(&self) -> bool {
        PromptKind::parse(&self.step).is_some()
    }
}

/// Trace as JSON; `raw` model output is kept only when `verbose`.
pub fn trace_json(trace: &[StepRecord], verbose: bool) -> serde_json::Value {
    serde_json::Value::Array(
        trace
            .iter()
            .map(|r| {
                let mut v = serde_json::to_value(r).expect("record serializes");
                if !verbose || r.raw.is_none() {
                    v["raw"] = serde_json::Value::Null;
                }
                v
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkResult {
    pub tables: BTreeSet<String>,
    /// `tables` in the order the linker produced them; the first roots the view.
    pub order: Vec<String>,
    pub matches: MatchSet,
    pub trace: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompilationResult {
    pub view: ViewDefinition,
    pub sql_over_view: String,
    pub sql_over_base: String,
    pub sub_questions: Vec<String>,
    pub examples_used: Vec<String>,
    pub trace: Vec<StepRecord>,
}

#[derive(Debug, Error)]
pub enum StepFailure {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Join(#[from] JoinError),
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Connection(#[from] ConnectionError),
    #[error("{0}")]
    Invalid(String),
}

/// A failed step with the trace recorded up to it.
#[derive(Debug, Error)]
#[error("{step}: {failure}")]
pub struct PipelineError {
    pub step: String,
    pub failure: StepFailure,
    pub trace: Vec<StepRecord>,
}

impl PipelineError {
    fn at(step: &str, failure: impl Into<StepFailure>, trace: &[StepRecord]) -> Self {
        Self { step: step.to_string(), failure: failure.into(), trace: trace.to_vec() }
    }
}

/// Shared, read-only resources for pipeline runs.
#[derive(Clone, Copy)]
pub struct Deps<'a> {
    pub schema: &'a RelationalSchema,
    pub graph: &'a ReferentialGraph,
    pub dictionary: &'a KeywordDictionary,
    pub store: &'a ExampleStore,
    pub gateway: &'a Gateway,
    pub db: Option<&'a dyn ExecutionBackend>,
    pub view_config: &'a ViewConfig,
    pub k: usize,
}

fn dedup_keep_order(items: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items.into_iter().filter(|s| seen.insert(s.clone())).collect()
}

pub fn extract_keywords(question: &str, gateway: &Gateway) -> Result<(Vec<String>, CallRecord), LlmError> {
    let ctx = PromptContext::new().with("question", question);
    let call = gateway.call(PromptKind::KeywordExtraction, &ctx)?;
    let keywords = dedup_keep_order(call.parsed.clone().into_strings());
    Ok((keywords, call))
}

/// Whitespace split with double- or single-quoted phrases kept whole;
/// surrounding punctuation is trimmed.
pub fn danke_split(question: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = question;
    while let Some(start) = rest.find(['"', '\'']) {
        let quote = rest[start..].chars().next().expect("found");
        let Some(len) = rest[start + 1..].find(quote) else { break };
        out.extend(plain_words(&rest[..start]));
        let phrase = rest[start + 1..start + 1 + len].trim();
        if !phrase.is_empty() {
            out.push(phrase.to_string());
        }
        rest = &rest[start + 2 + len..];
    }
    out.extend(plain_words(rest));
    dedup_keep_order(out)
}

fn plain_words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Table list for linking prompts. `detailed` adds columns, descriptions
/// and synonyms.
pub fn render_schema(schema: &RelationalSchema, detailed: bool) -> String {
    let mut out = String::new();
    for t in &schema.tables {
        if !detailed {
            let _ = writeln!(out, "- {}", t.name);
            continue;
        }
        let cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
        let _ = write!(out, "- {}({})", t.name, cols.join(", "));
        if let Some(d) = &t.description {
            let _ = write!(out, ": {d}");
        }
        if !t.synonyms.is_empty() {
            let _ = write!(out, " [also: {}]", t.synonyms.join(", "));
        }
        out.push('\n');
    }
    for fk in schema.foreign_keys.iter().filter(|_| detailed) {
        let pairs: Vec<String> =
            fk.column_pairs.iter().map(|p| format!("{}.{} -> {}.{}", fk.from_table, p.from, fk.to_table, p.to)).collect();
        let _ = writeln!(out, "  link: {}", pairs.join(", "));
    }
    out.trim_end().to_string()
}

pub fn render_matches(matches: &MatchSet, view: Option<&ViewDefinition>) -> String {
    let mut lines = Vec::new();
    for m in &matches.matches {
        let mut line = format!("\"{}\" -> {}", m.keyword, m.entry);
        if let (Some(v), Some(col)) = (view, &m.entry.column) {
            if let Some(out) = v.output_for(&m.entry.table, col) {
                let _ = write!(line, " (view column {})", out.output_name);
            }
        }
        lines.push(line);
    }
    lines.join("\n")
}

fn render_table_examples(examples: &[ExamplePair]) -> String {
    examples
        .iter()
        .map(|e| format!("Q: {}\nTables: {}", e.question, e.tables().iter().cloned().collect::<Vec<_>>().join(", ")))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_sql_examples(examples: &[(String, String)]) -> String {
    examples.iter().map(|(q, s)| format!("Q: {q}\nSQL: {s}")).collect::<Vec<_>>().join("\n\n")
}

fn known_tables(schema: &RelationalSchema, names: Vec<String>, record: StepRecord) -> (Vec<String>, StepRecord) {
    let mut tables: Vec<String> = Vec::new();
    let mut record = record;
    for n in names {
        match schema.canonical_table(n.trim()) {
            Some(t) if !tables.iter().any(|x| x == t) => tables.push(t.to_string()),
            Some(_) => {}
            None => record = record.warn(format!("dropped unknown table {n:?}")),
        }
    }
    (tables, record)
}

pub fn schema_link(question: &str, mode: AblationMode, deps: &Deps) -> Result<LinkResult, PipelineError> {
    let mut trace = Vec::new();
    let uses_dictionary = !matches!(mode, AblationMode::LlmOnly | AblationMode::LlmDfe);
    let uses_examples = matches!(mode, AblationMode::LlmDfe | AblationMode::LlmDfeDanke | AblationMode::Complete);

    let mut matches = MatchSet::default();
    if uses_dictionary {
        let keywords = if mode == AblationMode::DankeOnly {
            let k = danke_split(question);
            trace.push(StepRecord::new("keyword_split", question, &k.join("\n")));
            k
        } else {
            let (k, call) = extract_keywords(question, deps.gateway)
                .map_err(|e| PipelineError::at(PromptKind::KeywordExtraction.as_str(), e, &trace))?;
            trace.push(StepRecord::llm(&call));
            k
        };
        matches = deps.dictionary.match_keywords(&keywords);
        let out = serde_json::to_string(&matches).expect("matches serialize");
        let mut rec = StepRecord::new("keyword_matching", &keywords.join("\n"), &out);
        if !matches.unmatched.is_empty() {
            rec = rec.warn(format!("unmatched keywords: {}", matches.unmatched.join(", ")));
        }
        trace.push(rec);
    }

    if matches!(mode, AblationMode::DankeOnly | AblationMode::LlmDanke) {
        let mut order: Vec<String> = Vec::new();
        for m in &matches.matches {
            if !order.contains(&m.entry.table) {
                order.push(m.entry.table.clone());
            }
        }
        let tables = order.iter().cloned().collect();
        return Ok(LinkResult { tables, order, matches, trace });
    }

    let mut examples = Vec::new();
    if uses_examples {
        examples = deps
            .store
            .retrieve_similar(question, deps.k, None)
            .map_err(|e| PipelineError::at("example_retrieval", e, &trace))?;
        let ids: Vec<&str> = examples.iter().map(|e| e.id.as_str()).collect();
        trace.push(StepRecord::new("example_retrieval", question, &ids.join("\n")));
    }

    let ctx = PromptContext::new()
        .with("question", question)
        .with("schema", render_schema(deps.schema, mode == AblationMode::Complete))
        .with("matches", render_matches(&matches, None))
        .with("examples", render_table_examples(&examples));
    let call = deps
        .gateway
        .call(PromptKind::SchemaLinking, &ctx)
        .map_err(|e| PipelineError::at(PromptKind::SchemaLinking.as_str(), e, &trace))?;
    let (order, rec) = known_tables(deps.schema, call.parsed.clone().into_strings(), StepRecord::llm(&call));
    trace.push(rec);
    Ok(LinkResult { tables: order.iter().cloned().collect(), order, matches, trace })
}

pub fn decompose(question: &str, gateway: &Gateway) -> Result<(Vec<String>, StepRecord), LlmError> {
    let ctx = PromptContext::new().with("question", question);
    let call = gateway.call(PromptKind::QuestionDecomposition, &ctx)?;
    let mut rec = StepRecord::llm(&call);
    let mut parts: Vec<String> =
        dedup_keep_order(call.parsed.into_strings().into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect());
    if parts.is_empty() {
        rec = rec.warn("empty decomposition; using the question itself");
        parts.push(question.to_string());
    }
    if parts.len() > MAX_SUB_QUESTIONS {
        rec = rec.warn(format!("{} sub-questions; keeping the first {MAX_SUB_QUESTIONS}", parts.len()));
        parts.truncate(MAX_SUB_QUESTIONS);
    }
    Ok((parts, rec))
}

fn view_samples(view: &ViewDefinition, deps: &Deps) -> Result<String, String> {
    let Some(db) = deps.db else { return Err("no execution backend; row samples omitted".into()) };
    let keys = view.key_columns(deps.schema);
    let order = if keys.is_empty() { String::new() } else { format!(" ORDER BY {}", keys.join(", ")) };
    let query = format!("SELECT * FROM ({}) AS {}{order} LIMIT {SAMPLE_ROWS}", view.select_sql(), view.name);
    match db.execute(&query) {
        Ok(out) => match out.rows() {
            Some(t) => Ok(t.to_text()),
            None => Err(format!("row sample query failed: {out:?}")),
        },
        Err(e) => Err(format!("execution backend unavailable: {e}")),
    }
}

pub fn compile(question: &str, link: &LinkResult, deps: &Deps) -> Result<CompilationResult, PipelineError> {
    let mut trace = Vec::new();
    if link.tables.is_empty() {
        return Err(PipelineError::at("view_synthesis", JoinError::NoTerminals, &trace));
    }
    if deps.k == 0 {
        return Err(PipelineError::at("example_retrieval", StepFailure::Invalid("k must be positive".into()), &trace));
    }
    let mut terminals: Vec<&String> = link.order.iter().filter(|t| link.tables.contains(*t)).collect();
    terminals.extend(link.tables.iter().filter(|t| !link.order.contains(t)));
    let view = synthesize_view_with(deps.schema, deps.graph, &terminals, None, deps.view_config)
        .map_err(|e| PipelineError::at("view_synthesis", e, &trace))?;
    let view_sql = view.render_sql();
    trace.push(StepRecord::new("view_synthesis", &terminals.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","), &view_sql));

    let (sub_questions, rec) = decompose(question, deps.gateway)
        .map_err(|e| PipelineError::at(PromptKind::QuestionDecomposition.as_str(), e, &trace))?;
    trace.push(rec);

    let p = deps.k.div_ceil(sub_questions.len());
    let mut lists = Vec::with_capacity(sub_questions.len());
    for sq in &sub_questions {
        let found = deps
            .store
            .retrieve_similar(sq, p, Some(&link.tables))
            .map_err(|e| PipelineError::at("example_retrieval", e, &trace))?;
        lists.push(found);
    }
    let examples = intercalate(&lists, deps.k).map_err(|e| PipelineError::at("example_retrieval", e, &trace))?;
    let examples_used: Vec<String> = examples.iter().map(|e| e.id.clone()).collect();
    trace.push(StepRecord::new("example_retrieval", &sub_questions.join("\n"), &examples_used.join("\n")));

    let mut rewritten = Vec::with_capacity(examples.len());
    let mut rec_warnings = Vec::new();
    for e in &examples {
        match rewrite_from_clause(e.sql(), &view) {
            Ok(r) => {
                rec_warnings.extend(r.warnings.iter().map(|w| format!("{}: {w}", e.id)));
                rewritten.push((e.question.clone(), r.sql));
            }
            Err(err) => rec_warnings.push(format!("{}: not rewritten ({err})", e.id)),
        }
    }
    let rendered_examples = render_sql_examples(&rewritten);
    let mut rec = StepRecord::new("example_rewrite", &examples_used.join("\n"), &rendered_examples);
    for w in rec_warnings {
        rec = rec.warn(w);
    }
    trace.push(rec);

    let samples = match view_samples(&view, deps) {
        Ok(s) => {
            trace.push(StepRecord::new("row_samples", &view_sql, &s));
            s
        }
        Err(w) => {
            trace.push(StepRecord::new("row_samples", &view_sql, "").warn(w));
            String::new()
        }
    };

    let ctx = PromptContext::new()
        .with("question", question)
        .with("view_ddl", view.render_ddl())
        .with("matches", render_matches(&link.matches, Some(&view)))
        .with("samples", samples)
        .with("examples", rendered_examples);
    let call = deps
        .gateway
        .call(PromptKind::SqlCompilation, &ctx)
        .map_err(|e| PipelineError::at(PromptKind::SqlCompilation.as_str(), e, &trace))?;
    trace.push(StepRecord::llm(&call));
    let sql_over_view = call.parsed.into_sql();

    let found = sql::from_tables(&sql_over_view).map_err(|e| PipelineError::at("sql_compilation", e, &trace))?;
    if found.len() != 1 || !found.iter().all(|t| ident_eq(t, &view.name)) {
        let msg = format!("query must read only from {}, found {:?}", view.name, found);
        return Err(PipelineError::at("sql_compilation", StepFailure::Invalid(msg), &trace));
    }
    let sql_over_base = inline_view(&sql_over_view, &view).map_err(|e| PipelineError::at("inline_view", e, &trace))?;
    trace.push(StepRecord::new("inline_view", &sql_over_view, &sql_over_base));

    Ok(CompilationResult { view, sql_over_view, sql_over_base, sub_questions, examples_used, trace })
}

/// Linking then compilation; the trace covers both.
pub fn answer(question: &str, mode: AblationMode, deps: &Deps) -> Result<CompilationResult, PipelineError> {
    let link = schema_link(question, mode, deps)?;
    let mut result = compile(question, &link, deps).map_err(|mut e| {
        let mut t = link.trace.clone();
        t.append(&mut e.trace);
        e.trace = t;
        e
    })?;
    let mut t = link.trace;
    t.append(&mut result.trace);
    result.trace = t;
    Ok(result)
}
