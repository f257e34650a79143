//! Synthetic (question, SQL) generation: weighted table and column draws,
//! DDL and sample values for the prompt, three model calls, and a validity
//! gate on the produced SQL.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{ExecOutcome, ExecutionBackend};
use crate::llm::{ChatMessage, Gateway, LlmError, PromptContext, PromptKind};
use crate::schema::{render_ddl, ColumnDef, DataType, ReferentialGraph, RelationalSchema, SchemaError};
use crate::sql;
use crate::store::{ExamplePair, ExampleStore};
use crate::text::ident_eq;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("asked for {requested} tables but only {available} can be drawn")]
    TooManyTables { requested: usize, available: usize },
    #[error("no connected set of {0} tables found within the retry budget")]
    NoConnectedSubset(usize),
    #[error("table {0} has no primary key")]
    NoPrimaryKey(String),
    #[error("table {0} has no non-key column")]
    NoSecondColumn(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HintKind {
    Equality,
    Pattern,
    Aggregation,
    Range,
}

/// Restriction rule per non-key column type; key columns always get equality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestrictionPolicy(pub BTreeMap<DataType, HintKind>);

impl Default for RestrictionPolicy {
    fn default() -> Self {
        Self(BTreeMap::from([
            (DataType::String, HintKind::Pattern),
            (DataType::Integer, HintKind::Aggregation),
            (DataType::Decimal, HintKind::Aggregation),
            (DataType::Date, HintKind::Range),
            (DataType::Timestamp, HintKind::Range),
            (DataType::Boolean, HintKind::Equality),
        ]))
    }
}

impl RestrictionPolicy {
    pub fn kind_for(&self, column: &ColumnDef) -> HintKind {
        if column.is_primary_key {
            return HintKind::Equality;
        }
        self.0.get(&column.data_type).copied().unwrap_or(HintKind::Equality)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RestrictionHint {
    pub column: String,
    pub kind: HintKind,
    pub text: String,
}

pub fn restriction_hint(column: &ColumnDef) -> RestrictionHint {
    restriction_hint_with(column, &RestrictionPolicy::default(), None)
}

/// `sample` stands in for the placeholder value `B` when given.
pub fn restriction_hint_with(column: &ColumnDef, policy: &RestrictionPolicy, sample: Option<&str>) -> RestrictionHint {
    let kind = policy.kind_for(column);
    let name = &column.name;
    let b = sample.unwrap_or("B");
    let text = match (kind, column.data_type) {
        (HintKind::Equality, DataType::Boolean) => format!("{name} = {}", if b == "B" { "TRUE" } else { b }),
        (HintKind::Equality, t) if t.is_numeric() => format!("{name} = {b}"),
        (HintKind::Equality, _) => format!("{name} = '{b}'"),
        (HintKind::Pattern, _) => format!("{name} LIKE '%{b}%'"),
        (HintKind::Aggregation, _) => format!("{name}: aggregate with COUNT, SUM, AVG, MIN or MAX"),
        (HintKind::Range, _) => format!("{name} BETWEEN 'A' AND 'B' (a date range)"),
    };
    RestrictionHint { column: name.clone(), kind, text }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Number of tables per example → probability.
    pub table_count_distribution: BTreeMap<usize, f64>,
    pub examples_target: usize,
    pub rng_seed: u64,
    pub restriction_policy: RestrictionPolicy,
    /// Distinct sample values shown per selected column.
    pub sample_values: usize,
    /// Redraws allowed when a table draw is not connected.
    pub connect_retries: usize,
    pub id_prefix: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            table_count_distribution: BTreeMap::from([(1, 0.5), (2, 0.3), (3, 0.2)]),
            examples_target: 25,
            rng_seed: 42,
            restriction_policy: RestrictionPolicy::default(),
            sample_values: 5,
            connect_retries: 64,
            id_prefix: "syn".into(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.examples_target == 0 {
            return Err(SynthError::Config("examples_target must be positive".into()));
        }
        if self.table_count_distribution.is_empty() {
            return Err(SynthError::Config("table_count_distribution is empty".into()));
        }
        if self.table_count_distribution.keys().any(|&n| n == 0) {
            return Err(SynthError::Config("table counts must be at least 1".into()));
        }
        if self.table_count_distribution.values().any(|&p| !(p >= 0.0)) {
            return Err(SynthError::Config("probabilities must be non-negative".into()));
        }
        let total: f64 = self.table_count_distribution.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SynthError::Config(format!("probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn attempt_budget(&self) -> usize {
        self.examples_target * 4
    }
}

/// RNG for one attempt: the seed picks the generator, the attempt index its stream.
pub fn attempt_rng(seed: u64, attempt: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt as u64);
    rng
}

/// Index drawn proportionally to `weights` with one uniform `f64`.
/// `None` when every weight is zero.
pub fn weighted_index(weights: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if total <= 0.0 {
        return None;
    }
    let r = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if r < acc {
            return Some(i);
        }
    }
    last
}

pub fn draw_table_count(config: &GenerationConfig, rng: &mut impl Rng) -> usize {
    let keys: Vec<usize> = config.table_count_distribution.keys().copied().collect();
    let weights: Vec<f64> = config.table_count_distribution.values().copied().collect();
    keys[weighted_index(&weights, rng).expect("validated distribution")]
}

/// `n` distinct tables from one connected component, drawn without
/// replacement by table weight.
pub fn select_tables(
    n: usize,
    schema: &RelationalSchema,
    graph: &ReferentialGraph,
    retries: usize,
    rng: &mut impl Rng,
) -> Result<BTreeSet<String>, SynthError> {
    let drawable = schema.tables.iter().filter(|t| t.selection_weight > 0.0).count();
    if n == 0 || n > drawable {
        return Err(SynthError::TooManyTables { requested: n, available: drawable });
    }
    for _ in 0..=retries {
        let mut weights: Vec<f64> = schema.tables.iter().map(|t| t.selection_weight).collect();
        let mut chosen = Vec::with_capacity(n);
        while chosen.len() < n {
            let i = weighted_index(&weights, rng).expect("enough positive weights");
            weights[i] = 0.0;
            chosen.push(i);
        }
        let first = graph.node_index(&schema.tables[chosen[0]].name).expect("table in graph");
        let component = graph.component_indices(first);
        let connected = chosen
            .iter()
            .all(|&i| graph.node_index(&schema.tables[i].name).is_some_and(|v| component.contains(&v)));
        if connected {
            return Ok(chosen.into_iter().map(|i| schema.tables[i].name.clone()).collect());
        }
    }
    Err(SynthError::NoConnectedSubset(n))
}

/// Per table: its primary key and one non-key column drawn by column weight.
pub fn select_columns(
    tables: &BTreeSet<String>,
    schema: &RelationalSchema,
    rng: &mut impl Rng,
) -> Result<BTreeMap<String, (String, String)>, SynthError> {
    let mut out = BTreeMap::new();
    for name in tables {
        let table = schema.table(name).ok_or_else(|| SchemaError::UnknownTable(name.clone()))?;
        let pk = table.primary_key().next().ok_or_else(|| SynthError::NoPrimaryKey(table.name.clone()))?;
        let others: Vec<&ColumnDef> = table.columns.iter().filter(|c| !c.is_primary_key).collect();
        if others.is_empty() {
            return Err(SynthError::NoSecondColumn(table.name.clone()));
        }
        let weights: Vec<f64> = others.iter().map(|c| c.selection_weight).collect();
        let pick = weighted_index(&weights, rng).unwrap_or(0);
        out.insert(table.name.clone(), (pk.name.clone(), others[pick].name.clone()));
    }
    Ok(out)
}

/// Table and column descriptions and synonyms for prompts.
pub fn render_documentation(schema: &RelationalSchema, tables: &BTreeSet<String>) -> String {
    let mut lines = Vec::new();
    for t in schema.tables.iter().filter(|t| tables.contains(&t.name)) {
        let mut line = format!("{}: {}", t.name, t.description.as_deref().unwrap_or(""));
        if !t.synonyms.is_empty() {
            line.push_str(&format!(" (also: {})", t.synonyms.join(", ")));
        }
        lines.push(line.trim_end().to_string());
        for c in &t.columns {
            if c.description.is_none() && c.synonyms.is_empty() {
                continue;
            }
            let mut line = format!("  {}.{}: {}", t.name, c.name, c.description.as_deref().unwrap_or(""));
            if !c.synonyms.is_empty() {
                line.push_str(&format!(" (also: {})", c.synonyms.join(", ")));
            }
            lines.push(line.trim_end().to_string());
        }
    }
    lines.join("\n")
}

/// Up to `limit` distinct values of `table.column`, first by primary-key order.
pub fn sample_values(
    db: &dyn ExecutionBackend,
    schema: &RelationalSchema,
    table: &str,
    column: &str,
    limit: usize,
) -> Vec<String> {
    let Some(def) = schema.table(table) else { return Vec::new() };
    let order = def.primary_key().next().map(|c| c.name.as_str()).unwrap_or(column);
    let sql = format!(
        "SELECT \"{column}\" FROM \"{}\" WHERE \"{column}\" IS NOT NULL GROUP BY \"{column}\" ORDER BY MIN(\"{order}\") LIMIT {limit}",
        def.name
    );
    match db.execute(&sql) {
        Ok(ExecOutcome::Rows(t)) => t.rows.iter().map(|r| r[0].to_string()).collect(),
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratedExample {
    pub question: String,
    pub sql: String,
    pub tables: BTreeSet<String>,
    /// The drawn tables; `tables` is a non-empty subset.
    pub selected: BTreeSet<String>,
    /// SQL regenerations after a failed validity check.
    pub retries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CreateOutcome {
    Created(GeneratedExample),
    Discarded { reason: String, raw_sql: String },
}

pub struct SynthDeps<'a> {
    pub schema: &'a RelationalSchema,
    pub graph: &'a ReferentialGraph,
    pub db: &'a dyn ExecutionBackend,
    pub gateway: &'a Gateway,
}

/// One run of the generation procedure with `n` tables.
pub fn create_example(
    n: usize,
    deps: &SynthDeps,
    config: &GenerationConfig,
    rng: &mut impl Rng,
) -> Result<CreateOutcome, SynthError> {
    let schema = deps.schema;
    let tables = select_tables(n, schema, deps.graph, config.connect_retries, rng)?;
    let pairs = select_columns(&tables, schema, rng)?;

    // selected pair plus the key columns joining the selected tables
    let mut columns: BTreeMap<String, BTreeSet<String>> =
        pairs.iter().map(|(t, (pk, c))| (t.clone(), BTreeSet::from([pk.clone(), c.clone()]))).collect();
    for fk in &schema.foreign_keys {
        if tables.contains(&fk.from_table) && tables.contains(&fk.to_table) {
            for p in &fk.column_pairs {
                columns.get_mut(&fk.from_table).expect("selected").insert(p.from.clone());
                columns.get_mut(&fk.to_table).expect("selected").insert(p.to.clone());
            }
        }
    }
    let ddl = render_ddl(schema, &columns)?;

    let mut sample_lines = Vec::new();
    let mut hints = Vec::new();
    for (table, (pk, col)) in &pairs {
        for name in [pk, col] {
            let values = sample_values(deps.db, schema, table, name, config.sample_values);
            sample_lines.push(format!("{table}.{name}: {}", values.join(", ")));
            let def = schema.column(table, name).expect("selected column exists");
            let hint = restriction_hint_with(def, &config.restriction_policy, values.first().map(String::as_str));
            hints.push(format!("{table}.{}", hint.text));
        }
    }
    let documentation = render_documentation(schema, &tables);
    let ctx = PromptContext::new()
        .with("ddl", ddl.clone())
        .with("samples", sample_lines.join("\n"))
        .with("hint", hints.join("; "))
        .with("documentation", documentation.clone());

    let created = deps.gateway.call(PromptKind::SynthCreateQuestion, &ctx)?;
    let Some(question) = created.parsed.into_object().get("question").and_then(|q| q.as_str()).map(str::to_string)
    else {
        return Ok(CreateOutcome::Discarded { reason: "question missing from response".into(), raw_sql: String::new() });
    };

    let sql_ctx = ctx.clone().with("question", question.clone());
    let mut prompt = deps.gateway.prompt(PromptKind::SynthGenerateSql, &sql_ctx)?;
    let mut retries = 0;
    let (sql, found) = loop {
        let raw = match deps.gateway.send(prompt.clone()) {
            Ok(rec) => rec.parsed.into_sql(),
            Err(LlmError::Parse { raw, .. }) => raw,
            Err(e) => return Err(e.into()),
        };
        match validate_sql(&raw, &tables) {
            Ok(found) => break (raw, found),
            Err(reason) if retries == 0 => {
                retries += 1;
                prompt.messages.push(ChatMessage::assistant(raw));
                prompt.messages.push(ChatMessage::user(format!(
                    "The previous SQL was invalid ({reason}). Write a corrected query using only the tables above."
                )));
            }
            Err(reason) => return Ok(CreateOutcome::Discarded { reason, raw_sql: raw }),
        }
    };

    let improve_ctx = PromptContext::new()
        .with("question", question.clone())
        .with("sql", sql.clone())
        .with("documentation", documentation);
    let improved = deps.gateway.call(PromptKind::SynthImproveQuestion, &improve_ctx)?;
    let question = improved
        .parsed
        .into_object()
        .get("question")
        .and_then(|q| q.as_str())
        .map(str::to_string)
        .filter(|q| !q.trim().is_empty())
        .unwrap_or(question);
    Ok(CreateOutcome::Created(GeneratedExample { question, sql, tables: found, selected: tables, retries }))
}

/// Parses `raw` and checks its FROM tables against the selection.
pub fn validate_sql(raw: &str, selected: &BTreeSet<String>) -> Result<BTreeSet<String>, String> {
    let found = sql::from_tables(raw).map_err(|e| format!("unparseable sql: {e}"))?;
    if found.is_empty() {
        return Err("no table referenced".into());
    }
    let outside: Vec<&String> = found.iter().filter(|t| !selected.iter().any(|s| ident_eq(s, t))).collect();
    if !outside.is_empty() {
        return Err(format!(
            "table outside selection: {}",
            outside.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        ));
    }
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscardRecord {
    pub attempt: usize,
    pub reason: String,
    pub raw_sql: String,
}

#[derive(Debug)]
pub struct GenerationResult {
    pub store: ExampleStore,
    pub discards: Vec<DiscardRecord>,
    pub attempts: usize,
    /// Tables drawn for each accepted example, in id order.
    pub selections: Vec<BTreeSet<String>>,
    /// Set when the attempt budget ran out before the target.
    pub warning: Option<String>,
}

impl GenerationResult {
    pub fn write_discards(&self, mut out: impl Write) -> std::io::Result<()> {
        for d in &self.discards {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Repeats [`create_example`] until `examples_target` pairs are accepted or
/// four times that many attempts have been made.
pub fn generate_dataset(
    config: &GenerationConfig,
    deps: &SynthDeps,
    store: ExampleStore,
) -> Result<GenerationResult, SynthError> {
    config.validate()?;
    let mut store = store;
    let mut discards = Vec::new();
    let mut selections = Vec::new();
    let mut attempts = 0;
    while store.len() < config.examples_target && attempts < config.attempt_budget() {
        let attempt = attempts;
        attempts += 1;
        let mut rng = attempt_rng(config.rng_seed, attempt);
        let n = draw_table_count(config, &mut rng);
        let outcome = match create_example(n, deps, config, &mut rng) {
            Ok(o) => o,
            Err(e @ (SynthError::TooManyTables { .. } | SynthError::NoConnectedSubset(_))) => {
                CreateOutcome::Discarded { reason: e.to_string(), raw_sql: String::new() }
            }
            Err(e) => return Err(e),
        };
        match outcome {
            CreateOutcome::Created(ex) => {
                let id = format!("{}-{:05}", config.id_prefix, store.len() + 1);
                let pair = ExamplePair::new(id, ex.question, ex.sql.clone()).expect("validated sql parses");
                store.add(pair).map_err(|e| SynthError::Config(e.to_string()))?;
                selections.push(ex.selected);
            }
            CreateOutcome::Discarded { reason, raw_sql } => {
                tracing::debug!(attempt, %reason, "discarded synthetic example");
                discards.push(DiscardRecord { attempt, reason, raw_sql });
            }
        }
    }
    let warning = (store.len() < config.examples_target).then(|| {
        format!("attempt budget exhausted: {} of {} examples", store.len(), config.examples_target)
    });
    if let Some(w) = &warning {
        tracing::warn!("{w}");
    }
    Ok(GenerationResult { store, discards, attempts, selections, warning })
}
