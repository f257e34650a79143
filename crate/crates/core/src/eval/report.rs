use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use super::{linking_scores, results_equivalent, schema_linking_metrics, BenchmarkQuestion, Difficulty, LinkingScores};
use crate::exec::{ExecOutcome, ResultTable};
use crate::pipeline::{compile, schema_link, AblationMode, Deps};
use crate::sql;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Wrong,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionResult {
    pub id: String,
    pub difficulty: Difficulty,
    pub verdict: Verdict,
    pub predicted_tables: BTreeSet<String>,
    pub gold_tables: BTreeSet<String>,
    pub linking: LinkingScores,
    pub sql_over_view: Option<String>,
    pub sql_over_base: Option<String>,
    /// `"<step>: <message>"` for failed questions.
    pub error: Option<String>,
}

/// Wrong verdict worth a manual look: same row count, or equivalent once
/// row order is ignored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearMiss {
    pub id: String,
    pub reason: String,
    pub gold_sql: String,
    pub predicted_sql: String,
    pub gold: ResultTable,
    pub predicted: ResultTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DifficultyStats {
    pub questions: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl DifficultyStats {
    fn of<'a>(results: impl Iterator<Item = &'a QuestionResult>) -> Self {
        let (mut questions, mut correct) = (0, 0);
        for r in results {
            questions += 1;
            correct += (r.verdict == Verdict::Correct) as usize;
        }
        let accuracy = if questions == 0 { 0.0 } else { correct as f64 / questions as f64 };
        Self { questions, correct, accuracy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: AblationMode,
    pub results: Vec<QuestionResult>,
    pub by_difficulty: BTreeMap<Difficulty, DifficultyStats>,
    pub total: DifficultyStats,
    pub linking: LinkingScores,
    pub elapsed_ms: u128,
    #[serde(skip)]
    pub near_misses: Vec<NearMiss>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn verdict(&self, id: &str) -> Option<Verdict> {
        self.results.iter().find(|r| r.id == id).map(|r| r.verdict)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode: {}", self.mode);
        let _ = writeln!(out, "{:<10} {:>10} {:>10} {:>9}", "difficulty", "questions", "correct", "accuracy");
        let mut row = |label: &str, s: &DifficultyStats| {
            let _ = writeln!(out, "{label:<10} {:>10} {:>10} {:>9.3}", s.questions, s.correct, s.accuracy);
        };
        for d in Difficulty::ALL {
            row(d.as_str(), &self.by_difficulty[&d]);
        }
        row("total", &self.total);
        let _ = writeln!(
            out,
            "linking precision {:.3} recall {:.3} f1 {:.3}",
            self.linking.precision, self.linking.recall, self.linking.f1
        );
        let _ = writeln!(out, "elapsed {} ms", self.elapsed_ms);
        out
    }

    pub fn write_near_misses(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        for n in &self.near_misses {
            serde_json::to_writer(&mut out, n)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; values below 1 run sequentially.
    pub concurrency: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { concurrency: 1 }
    }
}

fn evaluate(q: &BenchmarkQuestion, mode: AblationMode, deps: &Deps) -> (QuestionResult, Option<NearMiss>) {
    let mut result = QuestionResult {
        id: q.id.clone(),
        difficulty: q.difficulty,
        verdict: Verdict::Failed,
        predicted_tables: BTreeSet::new(),
        gold_tables: q.gold_tables.clone(),
        linking: linking_scores(&BTreeSet::new(), &q.gold_tables),
        sql_over_view: None,
        sql_over_base: None,
        error: None,
    };
    let link = match schema_link(&q.question, mode, deps) {
        Ok(l) => l,
        Err(e) => {
            result.error = Some(e.to_string());
            return (result, None);
        }
    };
    result.predicted_tables = link.tables.clone();
    result.linking = linking_scores(&link.tables, &q.gold_tables);
    let compiled = match compile(&q.question, &link, deps) {
        Ok(c) => c,
        Err(e) => {
            result.error = Some(e.to_string());
            return (result, None);
        }
    };
    result.sql_over_view = Some(compiled.sql_over_view);
    result.sql_over_base = Some(compiled.sql_over_base.clone());

    let Some(db) = deps.db else {
        result.error = Some("execution: no execution backend".into());
        return (result, None);
    };
    let run = |sql: &str, what: &str| -> Result<ResultTable, String> {
        match db.execute(sql) {
            Ok(ExecOutcome::Rows(t)) => Ok(t),
            Ok(ExecOutcome::Failed { message }) => Err(format!("execution: {what} query failed: {message}")),
            Err(e) => Err(format!("execution: {e}")),
        }
    };
    let (gold, predicted) = match (run(&q.gold_sql, "gold"), run(&compiled.sql_over_base, "predicted")) {
        (Ok(g), Ok(p)) => (g, p),
        (Err(e), _) | (_, Err(e)) => {
            result.error = Some(e);
            return (result, None);
        }
    };
    let ordered = sql::parse(&q.gold_sql).is_ok_and(|s| s.top_level_order_by());
    if results_equivalent(&gold, &predicted, ordered) {
        result.verdict = Verdict::Correct;
        return (result, None);
    }
    result.verdict = Verdict::Wrong;
    let reason = if ordered && results_equivalent(&gold, &predicted, false) {
        Some("rows match in a different order")
    } else if gold.rows.len() == predicted.rows.len() {
        Some("same row count")
    } else {
        None
    };
    let near = reason.map(|reason| NearMiss {
        id: q.id.clone(),
        reason: reason.to_string(),
        gold_sql: q.gold_sql.clone(),
        predicted_sql: compiled.sql_over_base,
        gold,
        predicted,
    });
    (result, near)
}

/// Answers every question in `mode` and scores it by execution against the
/// gold query. Per-question failures become verdicts.
pub fn run_benchmark(questions: &[BenchmarkQuestion], mode: AblationMode, deps: &Deps, options: RunOptions) -> EvalReport {
    let start = Instant::now();
    let slots: Vec<Mutex<Option<(QuestionResult, Option<NearMiss>)>>> = questions.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = options.concurrency.clamp(1, questions.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(q) = questions.get(i) else { break };
                let out = evaluate(q, mode, deps);
                *slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });

    let mut results = Vec::with_capacity(questions.len());
    let mut near_misses = Vec::new();
    for slot in slots {
        let (r, n) = slot.into_inner().expect("result slot").expect("every question evaluated");
        results.push(r);
        near_misses.extend(n);
    }
    let by_difficulty = Difficulty::ALL
        .into_iter()
        .map(|d| (d, DifficultyStats::of(results.iter().filter(|r| r.difficulty == d))))
        .collect();
    let total = DifficultyStats::of(results.iter());
    let predicted: Vec<BTreeSet<String>> = results.iter().map(|r| r.predicted_tables.clone()).collect();
    let gold: Vec<BTreeSet<String>> = results.iter().map(|r| r.gold_tables.clone()).collect();
    let linking = schema_linking_metrics(&predicted, &gold).expect("equal lengths");
    EvalReport { mode, results, by_difficulty, total, linking, elapsed_ms: start.elapsed().as_millis(), near_misses }
}
