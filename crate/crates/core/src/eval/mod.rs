//! Benchmark questions, difficulty classes, execution comparison and
//! schema-linking metrics.

mod compare;
mod report;

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{ConnectionError, ExecOutcome, ExecutionBackend};
use crate::sql::{self, SqlError};

pub use compare::{normalize_value, results_equivalent, NormValue, EXHAUSTIVE_COLUMN_LIMIT};
pub use report::{run_benchmark, EvalReport, NearMiss, QuestionResult, RunOptions, Verdict};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("predicted and gold lists differ in length ({predicted} vs {gold})")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error(transparent)]
    Sql(#[from] SqlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Simple,
    Medium,
    Complex,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Simple, Difficulty::Medium, Difficulty::Complex];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Simple => "simple",
            Difficulty::Medium => "medium",
            Difficulty::Complex => "complex",
        }
    }
}

/// Construct count behind [`classify_difficulty`]: GROUP BY, ORDER BY and
/// LIMIT/FETCH clauses in any scope, set operators, nested statements,
/// aggregates beyond the first, plus one when the outer query selects more
/// than two items.
pub fn construct_count(sql: &str) -> Result<usize, SqlError> {
    let stmt = sql::parse(sql)?;
    let mut clauses = 0;
    let mut aggregates = 0;
    stmt.for_each_select(&mut |s| {
        clauses += s.group_by as usize + s.order_by as usize + s.limit as usize;
        aggregates += s.aggregates;
    });
    let wide = stmt.selects.first().is_some_and(|s| s.items.len() > 2) as usize;
    Ok(clauses + stmt.total_set_operators() + stmt.nested_count() + aggregates.saturating_sub(1) + wide)
}

pub fn classify_difficulty(sql: &str) -> Result<Difficulty, SqlError> {
    Ok(match construct_count(sql)? {
        0 => Difficulty::Simple,
        1 | 2 => Difficulty::Medium,
        _ => Difficulty::Complex,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkQuestion {
    pub id: String,
    pub question: String,
    pub gold_sql: String,
    pub gold_tables: BTreeSet<String>,
    pub difficulty: Difficulty,
}

#[derive(Deserialize)]
struct QuestionRecord {
    id: String,
    question: String,
    gold_sql: String,
    #[serde(default)]
    difficulty: Option<Difficulty>,
}

impl BenchmarkQuestion {
    /// Difficulty falls back to [`classify_difficulty`] when not declared.
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        gold_sql: impl Into<String>,
        difficulty: Option<Difficulty>,
    ) -> Result<Self, SqlError> {
        let gold_sql = gold_sql.into();
        let gold_tables = sql::from_tables(&gold_sql)?;
        let difficulty = match difficulty {
            Some(d) => d,
            None => classify_difficulty(&gold_sql)?,
        };
        Ok(Self { id: id.into(), question: question.into(), gold_sql, gold_tables, difficulty })
    }
}

pub fn read_benchmark(reader: impl BufRead) -> Result<Vec<BenchmarkQuestion>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let parse = |message: String| EvalError::Parse { line: i + 1, message };
        let line = line.map_err(|e| parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        out.push(BenchmarkQuestion::new(rec.id, rec.question, rec.gold_sql, rec.difficulty).map_err(|e| parse(e.to_string()))?);
    }
    Ok(out)
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<Vec<BenchmarkQuestion>, EvalError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    read_benchmark(std::io::BufReader::new(file))
}

pub fn execute(sql: &str, db: &dyn ExecutionBackend) -> Result<ExecOutcome, ConnectionError> {
    db.execute(sql)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkingScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-question precision/recall/F1 over case-insensitive table names.
pub fn linking_scores(predicted: &BTreeSet<String>, gold: &BTreeSet<String>) -> LinkingScores {
    let lower = |s: &BTreeSet<String>| s.iter().map(|t| t.to_lowercase()).collect::<BTreeSet<_>>();
    let (p, g) = (lower(predicted), lower(gold));
    let hit = p.intersection(&g).count() as f64;
    let precision = if p.is_empty() {
        if g.is_empty() { 1.0 } else { 0.0 }
    } else {
        hit / p.len() as f64
    };
    let recall = if g.is_empty() { 1.0 } else { hit / g.len() as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    LinkingScores { precision, recall, f1 }
}

/// Macro-averaged scores; an empty input averages to zero.
pub fn schema_linking_metrics(
    predicted: &[BTreeSet<String>],
    gold: &[BTreeSet<String>],
) -> Result<LinkingScores, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch { predicted: predicted.len(), gold: gold.len() });
    }
    let n = predicted.len();
    if n == 0 {
        return Ok(LinkingScores { precision: 0.0, recall: 0.0, f1: 0.0 });
    }
    let mut sum = LinkingScores { precision: 0.0, recall: 0.0, f1: 0.0 };
    for (p, g) in predicted.iter().zip(gold) {
        let s = linking_scores(p, g);
        sum.precision += s.precision;
        sum.recall += s.recall;
        sum.f1 += s.f1;
    }
    Ok(LinkingScores { precision: sum.precision / n as f64, recall: sum.recall / n as f64, f1: sum.f1 / n as f64 })
}
