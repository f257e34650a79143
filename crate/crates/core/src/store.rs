//! Example pairs with similarity retrieval, intercalation and FROM rewriting.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::join::ViewDefinition;
use crate::sql::{self, FromItem, Select, Source, SqlError, Statement, Token, TokenKind};
use crate::text::{ident_eq, word_tokens};

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("example {id:?}: {source}")]
    Sql { id: String, source: SqlError },
    #[error("duplicate example id {0:?}")]
    DuplicateId(String),
    #[error("intercalate needs at least one list")]
    NoLists,
    #[error("list {index} has {len} examples, more than p = {p}")]
    ListTooLong { index: usize, len: usize, p: usize },
    #[error("embedding failed: {0}")]
    Embedding(String),
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>, StoreError>;
}

/// Hashed bag of word tokens with `1 + ln(tf)` weights, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let mut counts: HashMap<String, u32> = HashMap::new();
        for token in word_tokens(text) {
            *counts.entry(token).or_default() += 1;
        }
        let mut v = vec![0f64; self.dimension];
        for (token, tf) in counts {
            let slot = (fnv1a(token.as_bytes()) % self.dimension as u64) as usize;
            v[slot] += 1.0 + (tf as f64).ln();
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v.into_iter().map(|x| x as f32).collect()
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, StoreError> {
        Ok(self.embed_text(text))
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Embeddings from an OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEmbedder {
    url: String,
    model: String,
    dimension: usize,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>, dimension: usize) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            dimension,
            api_key: std::env::var("LLM_API_KEY").ok(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, StoreError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::json!({ "model": self.model, "input": [text] });
        let resp: serde_json::Value = req
            .send_json(body)
            .map_err(|e| StoreError::Embedding(e.to_string()))?
            .into_json()
            .map_err(|e| StoreError::Embedding(e.to_string()))?;
        let values = resp["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| StoreError::Embedding("response has no data[0].embedding".into()))?;
        let v: Vec<f32> = values.iter().filter_map(|x| x.as_f64()).map(|x| x as f32).collect();
        if v.len() != self.dimension {
            return Err(StoreError::Embedding(format!("expected dimension {}, got {}", self.dimension, v.len())));
        }
        Ok(v)
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// A natural-language question with its SQL translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExamplePair {
    pub id: String,
    pub question: String,
    sql: String,
    #[serde(skip)]
    tables: BTreeSet<String>,
}

#[derive(Deserialize)]
struct ExampleRecord {
    id: String,
    question: String,
    sql: String,
}

impl ExamplePair {
    pub fn new(id: impl Into<String>, question: impl Into<String>, sql: impl Into<String>) -> Result<Self, SqlError> {
        let sql = sql.into();
        let tables = sql::from_tables(&sql)?;
        Ok(Self { id: id.into(), question: question.into(), sql, tables })
    }

    pub fn sql(&self) -> &str {
        &self.sql
    }

    /// Tables in the FROM/JOIN clauses of `sql`.
    pub fn tables(&self) -> &BTreeSet<String> {
        &self.tables
    }

    pub fn set_sql(&mut self, sql: impl Into<String>) -> Result<(), SqlError> {
        let sql = sql.into();
        self.tables = sql::from_tables(&sql)?;
        self.sql = sql;
        Ok(())
    }

    fn tables_within(&self, filter: &BTreeSet<String>) -> bool {
        self.tables.iter().all(|t| filter.iter().any(|f| ident_eq(f, t)))
    }
}

pub struct ExampleStore {
    examples: Vec<ExamplePair>,
    vectors: Vec<Vec<f32>>,
    embedder: Box<dyn Embedder>,
}

impl std::fmt::Debug for ExampleStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExampleStore")
            .field("examples", &self.examples.len())
            .field("dimension", &self.embedder.dimension())
            .finish()
    }
}

impl Default for ExampleStore {
    fn default() -> Self {
        Self::new(Box::new(HashingEmbedder::default()))
    }
}

impl ExampleStore {
    pub fn new(embedder: Box<dyn Embedder>) -> Self {
        Self { examples: Vec::new(), vectors: Vec::new(), embedder }
    }

    pub fn from_pairs(pairs: Vec<ExamplePair>, embedder: Box<dyn Embedder>) -> Result<Self, StoreError> {
        let mut store = Self::new(embedder);
        for p in pairs {
            store.add(p)?;
        }
        Ok(store)
    }

    pub fn add(&mut self, pair: ExamplePair) -> Result<(), StoreError> {
        if self.examples.iter().any(|e| e.id == pair.id) {
            return Err(StoreError::DuplicateId(pair.id));
        }
        let v = self.embedder.embed(&pair.question)?;
        self.examples.push(pair);
        self.vectors.push(v);
        Ok(())
    }

    pub fn examples(&self) -> &[ExamplePair] {
        &self.examples
    }

    pub fn vectors(&self) -> &[Vec<f32>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f32>, StoreError> {
        self.embedder.embed(text)
    }

    /// Top `k` examples by cosine similarity to `question`, optionally limited
    /// to examples whose tables all lie in `table_filter`. Ties go to the
    /// smaller id.
    pub fn retrieve_similar(
        &self,
        question: &str,
        k: usize,
        table_filter: Option<&BTreeSet<String>>,
    ) -> Result<Vec<ExamplePair>, StoreError> {
        let q = self.embedder.embed(question)?;
        let mut scored: Vec<(f64, &ExamplePair)> = self
            .examples
            .iter()
            .zip(&self.vectors)
            .filter(|(e, _)| table_filter.is_none_or(|f| e.tables_within(f)))
            .map(|(e, v)| (cosine(&q, v), e))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        Ok(scored.into_iter().take(k).map(|(_, e)| e.clone()).collect())
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.examples {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        let io = |source| StoreError::Io { path: path.display().to_string(), source };
        let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        self.write_jsonl(&mut file).map_err(io)?;
        file.flush().map_err(io)
    }

    pub fn read_jsonl(reader: impl BufRead, embedder: Box<dyn Embedder>) -> Result<Self, StoreError> {
        Self::from_pairs(read_examples(reader)?, embedder)
    }

    pub fn load(path: impl AsRef<Path>, embedder: Box<dyn Embedder>) -> Result<Self, StoreError> {
        Self::from_pairs(load_examples(path)?, embedder)
    }
}

/// Parses `{"id","question","sql"}` lines; errors name the 1-based line.
pub fn read_examples(reader: impl BufRead) -> Result<Vec<ExamplePair>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| StoreError::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord =
            serde_json::from_str(&line).map_err(|e| StoreError::Parse { line: line_no, message: e.to_string() })?;
        let pair = ExamplePair::new(rec.id, rec.question, rec.sql)
            .map_err(|e| StoreError::Parse { line: line_no, message: e.to_string() })?;
        out.push(pair);
    }
    Ok(out)
}

pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<ExamplePair>, StoreError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| StoreError::Io { path: path.display().to_string(), source })?;
    read_examples(std::io::BufReader::new(file))
}

/// Round-robin merge of `lists` (each at most `ceil(k / m)` long), keeping the
/// first occurrence of every id and stopping at `k`.
pub fn intercalate(lists: &[Vec<ExamplePair>], k: usize) -> Result<Vec<ExamplePair>, StoreError> {
    let m = lists.len();
    if m == 0 {
        return Err(StoreError::NoLists);
    }
    let p = k.div_ceil(m);
    if let Some((index, l)) = lists.iter().enumerate().find(|(_, l)| l.len() > p) {
        return Err(StoreError::ListTooLong { index, len: l.len(), p });
    }
    let mut out: Vec<ExamplePair> = Vec::new();
    let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
    'rounds: for round in 0..longest {
        for l in lists {
            if out.len() == k {
                break 'rounds;
            }
            if let Some(e) = l.get(round) {
                if !out.iter().any(|o| o.id == e.id) {
                    out.push(e.clone());
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rewrite {
    pub sql: String,
    /// Column references that could not be mapped onto the view.
    pub warnings: Vec<String>,
}

/// Replaces the FROM/JOIN block of every scope over the view's base tables
/// with the view name and re-points column references at the view's output
/// columns.
pub fn rewrite_from_clause(query: &str, view: &ViewDefinition) -> Result<Rewrite, SqlError> {
    let stmt = sql::parse(query)?;
    let mut edits = Vec::new();
    let mut warnings = Vec::new();
    let tokens = sql::tokenize(query)?;
    rewrite_statement(&stmt, view, &tokens, &mut Vec::new(), &mut edits, &mut warnings);
    Ok(Rewrite { sql: sql::splice(query, edits), warnings })
}

type Edits = Vec<(std::ops::Range<usize>, String)>;

/// `(exposed name, base table)` pairs visible in one scope.
type Scope = Vec<(String, String)>;

fn rewrite_statement(
    stmt: &Statement,
    view: &ViewDefinition,
    tokens: &[Token],
    outer: &mut Vec<Scope>,
    edits: &mut Edits,
    warnings: &mut Vec<String>,
) {
    for select in &stmt.selects {
        rewrite_select(select, view, tokens, outer, edits, warnings);
    }
}

fn rewrite_select(
    select: &Select,
    view: &ViewDefinition,
    tokens: &[Token],
    outer: &mut Vec<Scope>,
    edits: &mut Edits,
    warnings: &mut Vec<String>,
) {
    let Some(from) = &select.from else {
        for sub in &select.subqueries {
            rewrite_statement(sub, view, tokens, outer, edits, warnings);
        }
        return;
    };
    let over_view = from.items.iter().any(|i| matches!(&i.source, Source::Table(t) if ident_eq(t, &view.name)));
    let all_base = from.items.iter().all(|i| matches!(&i.source, Source::Table(t) if view.contains_table(t)));
    if over_view || !all_base {
        if !over_view {
            let outside: Vec<&str> = from
                .items
                .iter()
                .filter_map(|i| match &i.source {
                    Source::Table(t) if !view.contains_table(t) => Some(t.as_str()),
                    _ => None,
                })
                .collect();
            if !outside.is_empty() {
                warnings.push(format!("FROM keeps tables outside view {}: {}", view.name, outside.join(", ")));
            }
        }
        for item in &from.items {
            if let Source::Derived(inner) = &item.source {
                rewrite_statement(inner, view, tokens, outer, edits, warnings);
            }
        }
        for sub in &select.subqueries {
            rewrite_statement(sub, view, tokens, outer, edits, warnings);
        }
        return;
    }

    let scope: Scope = from
        .items
        .iter()
        .filter_map(|i: &FromItem| match &i.source {
            Source::Table(t) => Some((i.exposed_name().unwrap_or(t).to_string(), t.clone())),
            Source::Derived(_) => None,
        })
        .collect();
    edits.push((from.span.clone(), view.name.clone()));

    let scopes_with = |outer: &Vec<Scope>| {
        let mut all = vec![scope.clone()];
        all.extend(outer.iter().rev().cloned());
        all
    };
    let visible = scopes_with(outer);
    for r in &select.column_refs {
        match &r.qualifier {
            Some(q) => {
                let table = visible.iter().flatten().find(|(name, _)| ident_eq(name, q)).map(|(_, t)| t.as_str());
                match table.and_then(|t| view.output_for(t, &r.column)) {
                    Some(col) => edits.push((r.span.clone(), col.output_name.clone())),
                    None => warnings.push(format!("no view column for {q}.{}", r.column)),
                }
            }
            None => {
                let hit = scope.iter().find_map(|(_, t)| view.output_for(t, &r.column));
                if let Some(col) = hit {
                    edits.push((r.span.clone(), col.output_name.clone()));
                }
            }
        }
    }

    // `alias.*` expands to the output columns of that table
    let in_items = |pos: usize| select.items.iter().any(|i| i.span.contains(&pos));
    for w in tokens.windows(3) {
        if w[0].is_identifier_like()
            && w[1].kind == TokenKind::Dot
            && w[2].kind == TokenKind::Star
            && in_items(w[0].span.start)
        {
            if let Some((_, table)) = scope.iter().find(|(name, _)| ident_eq(name, &w[0].text)) {
                let cols: Vec<&str> = view
                    .projected_columns
                    .iter()
                    .filter(|c| ident_eq(&c.table, table))
                    .map(|c| c.output_name.as_str())
                    .collect();
                edits.push((w[0].span.start..w[2].span.end, cols.join(", ")));
            }
        }
    }

    outer.push(scope.clone());
    for sub in &select.subqueries {
        if !(from.span.start <= sub.span.start && sub.span.end <= from.span.end) {
            rewrite_statement(sub, view, tokens, outer, edits, warnings);
        }
    }
    outer.pop();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::join::synthesize_view;
    use crate::schema::tests::maintenance_schema;
    use proptest::prelude::*;

    fn pair(id: &str, q: &str, sql: &str) -> ExamplePair {
        ExamplePair::new(id, q, sql).unwrap()
    }

    fn ids(v: &[ExamplePair]) -> Vec<&str> {
        v.iter().map(|e| e.id.as_str()).collect()
    }

    #[test]
    fn embedding_is_deterministic_and_order_free() {
        let e = HashingEmbedder::default();
        assert_eq!(e.embed_text("open maintenance orders"), e.embed_text("open maintenance orders"));
        let c = cosine(&e.embed_text("open maintenance orders"), &e.embed_text("maintenance orders open"));
        assert!((c - 1.0).abs() < 1e-6);
        assert!(e.embed_text("").iter().all(|x| *x == 0.0));
        assert_eq!(e.embed_text("x").len(), 256);
    }

    #[test]
    fn closer_question_scores_higher() {
        let e = HashingEmbedder::default();
        let base = e.embed_text("installation recommendations");
        let near = cosine(&base, &e.embed_text("installation recommendations list"));
        let far = cosine(&base, &e.embed_text("pump failure dates"));
        assert!(near > far);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    fn store() -> ExampleStore {
        ExampleStore::from_pairs(
            vec![
                pair("e1", "list all installations", "SELECT name FROM Installation"),
                pair(
                    "e2",
                    "recommendations for installation E-176",
                    "SELECT r.situation FROM Maintenance_recommendation r JOIN Installation i ON r.installation_name = i.name WHERE i.name = 'E-176'",
                ),
                pair("e3", "open maintenance orders", "SELECT id FROM Maintenance_order WHERE status = 'open'"),
            ],
            Box::new(HashingEmbedder::default()),
        )
        .unwrap()
    }

    #[test]
    fn retrieval_ranks_and_filters() {
        let s = store();
        let top = s.retrieve_similar("open maintenance orders", 2, None).unwrap();
        assert_eq!(top[0].id, "e3");
        let only = BTreeSet::from(["installation".to_string()]);
        let f = s.retrieve_similar("recommendations for installation E-176", 5, Some(&only)).unwrap();
        assert_eq!(ids(&f), ["e1"]);
        assert_eq!(s.retrieve_similar("anything", 10, None).unwrap().len(), 3);
    }

    #[test]
    fn intercalate_examples() {
        let mk = |p: &str| (1..=3).map(|i| pair(&format!("{p}{i}"), "q", "SELECT 1")).collect::<Vec<_>>();
        let out = intercalate(&[mk("a"), mk("b"), mk("c")], 8).unwrap();
        assert_eq!(ids(&out), ["a1", "b1", "c1", "a2", "b2", "c2", "a3", "b3"]);
        let single = intercalate(&[mk("a")[..2].to_vec()], 2).unwrap();
        assert_eq!(ids(&single), ["a1", "a2"]);

        let x = pair("x", "q", "SELECT 1");
        let l1 = vec![pair("a1", "q", "SELECT 1"), x.clone()];
        let l2 = vec![x.clone(), pair("b2", "q", "SELECT 1")];
        let out = intercalate(&[l1, l2], 4).unwrap();
        assert_eq!(ids(&out), ["a1", "x", "b2"]);

        assert!(matches!(intercalate(&[], 3), Err(StoreError::NoLists)));
        assert!(matches!(intercalate(&[mk("a")], 2), Err(StoreError::ListTooLong { .. })));
    }

    #[test]
    fn jsonl_round_trip_and_line_errors() {
        let s = store();
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf).unwrap();
        let back = ExampleStore::read_jsonl(&buf[..], Box::new(HashingEmbedder::new(64))).unwrap();
        assert_eq!(back.examples(), s.examples());
        assert_eq!(back.vectors().len(), back.len());
        assert!(back.vectors().iter().all(|v| v.len() == 64));

        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{\"id\":\"bad\",\"question\":\"q\",\"sql\":\"SELECT FROM\"}\n");
        match read_examples(text.as_bytes()) {
            Err(StoreError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tables_follow_sql() {
        let mut p = pair("p", "q", "SELECT 1");
        assert!(p.tables().is_empty());
        p.set_sql("SELECT * FROM (SELECT a FROM A JOIN B ON A.x = B.x) t JOIN C ON t.a = C.a").unwrap();
        assert_eq!(p.tables().iter().map(String::as_str).collect::<Vec<_>>(), ["A", "B", "C"]);
    }

    #[test]
    fn rewrite_two_table_example() {
        let v = synthesize_view(&maintenance_schema(), &["Maintenance_recommendation", "Installation"], None).unwrap();
        let sql = "SELECT r.situation FROM Maintenance_recommendation r JOIN Installation p ON r.installation_name = p.name WHERE p.name = 'E-176'";
        let out = rewrite_from_clause(sql, &v).unwrap();
        assert_eq!(
            out.sql,
            "SELECT Recommendation_situation FROM Recommendation_Installation WHERE Installation_name = 'E-176'"
        );
        assert!(out.warnings.is_empty());
        assert_eq!(rewrite_from_clause(&out.sql, &v).unwrap().sql, out.sql);
    }

    #[test]
    fn rewrite_single_table_and_unqualified() {
        let v = synthesize_view(&maintenance_schema(), &["Maintenance_order"], None).unwrap();
        let out = rewrite_from_clause(
            "SELECT id, COUNT(*) AS n FROM Maintenance_order WHERE status = 'open' GROUP BY id ORDER BY n",
            &v,
        )
        .unwrap();
        assert_eq!(out.sql, "SELECT Order_id, COUNT(*) AS n FROM Order_view WHERE Order_status = 'open' GROUP BY Order_id ORDER BY n");
    }

    #[test]
    fn rewrite_warns_on_unmapped_and_nested() {
        let v = synthesize_view(&maintenance_schema(), &["Installation"], None).unwrap();
        let out = rewrite_from_clause("SELECT i.name, i.missing FROM Installation i", &v).unwrap();
        assert_eq!(out.sql, "SELECT Installation_name, i.missing FROM Installation_view");
        assert_eq!(out.warnings.len(), 1);

        let nested = rewrite_from_clause(
            "SELECT name FROM Installation WHERE name IN (SELECT i2.name FROM Installation i2 WHERE i2.type = 'x')",
            &v,
        )
        .unwrap();
        assert_eq!(
            nested.sql,
            "SELECT Installation_name FROM Installation_view WHERE Installation_name IN (SELECT Installation_name FROM Installation_view WHERE Installation_type = 'x')"
        );
        let star = rewrite_from_clause("SELECT i.* FROM Installation i", &v).unwrap();
        assert_eq!(star.sql, "SELECT Installation_name, Installation_type FROM Installation_view");
    }

    proptest! {
        #[test]
        fn intercalate_length_and_uniqueness(
            lists in proptest::collection::vec(proptest::collection::vec(0u8..12, 0..4), 1..4),
            k in 1usize..10,
        ) {
            let m = lists.len();
            let p = k.div_ceil(m);
            let lists: Vec<Vec<ExamplePair>> = lists
                .into_iter()
                .map(|l| {
                    let mut seen = Vec::new();
                    l.into_iter()
                        .filter(|x| { let fresh = !seen.contains(x); seen.push(*x); fresh })
                        .take(p)
                        .map(|x| pair(&format!("e{x}"), "q", "SELECT 1"))
                        .collect()
                })
                .collect();
            let out = intercalate(&lists, k).unwrap();
            let union: BTreeSet<&str> = lists.iter().flatten().map(|e| e.id.as_str()).collect();
            prop_assert_eq!(out.len(), k.min(union.len()));
            let unique: BTreeSet<&str> = out.iter().map(|e| e.id.as_str()).collect();
            prop_assert_eq!(unique.len(), out.len());
        }

        #[test]
        fn filter_is_respected(k in 1usize..5, mask in 0u8..8) {
            let names = ["Installation", "Maintenance_order", "Maintenance_recommendation"];
            let filter: BTreeSet<String> =
                names.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, n)| n.to_string()).collect();
            let s = store();
            for e in s.retrieve_similar("installation orders", k, Some(&filter)).unwrap() {
                prop_assert!(e.tables().iter().all(|t| filter.contains(t)));
            }
        }
    }
}
