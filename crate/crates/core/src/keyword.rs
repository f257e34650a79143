//! Keyword dictionary over schema names, synonyms and indexed data values.
//!
//! Each query keyword is scored against dictionary entries on a fixed ladder:
//!
//! | class            | score               |
//! |------------------|---------------------|
//! | `exact_value`    | 1.0                 |
//! | `exact_name`     | 0.95                |
//! | `synonym`        | 0.9                 |
//! | `normalized`     | 0.8                 |
//! | `prefix_partial` | 0.5 × overlap ratio |
//!
//! Candidates must reach the floor (0.5 by default). Ties go to value entries
//! over column entries over table entries, then to the smaller target.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::RelationalSchema;
use crate::text::{normalize, word_tokens};

pub const DEFAULT_SCORE_FLOOR: f64 = 0.5;
const MIN_PREFIX_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum KeywordError {
    #[error("value for unknown column {table}.{column}")]
    UnknownColumn { table: String, column: String },
    #[error("value for column {table}.{column}, which is not indexed for values")]
    NotIndexed { table: String, column: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid dictionary file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dictionary entry has no surface forms")]
    NoForms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Table,
    Column,
    Value,
}

impl EntryKind {
    fn rank(self) -> u8 {
        match self {
            EntryKind::Value => 0,
            EntryKind::Column => 1,
            EntryKind::Table => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub kind: EntryKind,
    #[serde(rename = "forms")]
    pub surface_forms: BTreeSet<String>,
    pub table: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl DictionaryEntry {
    /// The raw name or value this entry stands for.
    pub fn label(&self) -> &str {
        match self.kind {
            EntryKind::Table => &self.table,
            EntryKind::Column => self.column.as_deref().unwrap_or(&self.table),
            EntryKind::Value => self.value.as_deref().unwrap_or_default(),
        }
    }

    fn target_key(&self) -> (&str, &str, &str) {
        (
            self.table.as_str(),
            self.column.as_deref().unwrap_or(""),
            self.value.as_deref().unwrap_or(""),
        )
    }
}

impl std::fmt::Display for DictionaryEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            EntryKind::Table => write!(f, "table {}", self.table),
            EntryKind::Column => write!(f, "column {}.{}", self.table, self.label()),
            EntryKind::Value => write!(
                f,
                "value {:?} in {}.{}",
                self.label(),
                self.table,
                self.column.as_deref().unwrap_or_default()
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchClass {
    ExactValue,
    ExactName,
    Synonym,
    Normalized,
    PrefixPartial,
}

impl MatchClass {
    pub fn base_score(self) -> f64 {
        match self {
            MatchClass::ExactValue => 1.0,
            MatchClass::ExactName => 0.95,
            MatchClass::Synonym => 0.9,
            MatchClass::Normalized => 0.8,
            MatchClass::PrefixPartial => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordMatch {
    pub keyword: String,
    pub entry: DictionaryEntry,
    pub score: f64,
    pub match_class: MatchClass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatchSet {
    pub matches: Vec<KeywordMatch>,
    pub unmatched: Vec<String>,
}

impl MatchSet {
    /// Union of target tables over all matches.
    pub fn tables(&self) -> BTreeSet<String> {
        tables_of(self)
    }
}

pub fn tables_of(matches: &MatchSet) -> BTreeSet<String> {
    matches.matches.iter().map(|m| m.entry.table.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ValueTriple {
    pub table: String,
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, Default)]
pub struct KeywordDictionary {
    entries: Vec<DictionaryEntry>,
    index: BTreeMap<String, Vec<usize>>,
    floor: f64,
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    entries: Vec<DictionaryEntry>,
}

impl KeywordDictionary {
    /// One entry per table, per column and per distinct indexed value.
    pub fn build<I>(schema: &RelationalSchema, values: I) -> Result<Self, KeywordError>
    where
        I: IntoIterator<Item = ValueTriple>,
    {
        let mut entries = Vec::new();
        for table in &schema.tables {
            entries.push(DictionaryEntry {
                kind: EntryKind::Table,
                surface_forms: forms_of(&table.name, &table.synonyms),
                table: table.name.clone(),
                column: None,
                value: None,
            });
        }
        for table in &schema.tables {
            for column in &table.columns {
                entries.push(DictionaryEntry {
                    kind: EntryKind::Column,
                    surface_forms: forms_of(&column.name, &column.synonyms),
                    table: table.name.clone(),
                    column: Some(column.name.clone()),
                    value: None,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for triple in values {
            let unknown = || KeywordError::UnknownColumn { table: triple.table.clone(), column: triple.column.clone() };
            let table = schema.table(&triple.table).ok_or_else(unknown)?;
            let column = table.column(&triple.column).ok_or_else(unknown)?;
            if !column.is_indexed_for_values {
                return Err(KeywordError::NotIndexed { table: table.name.clone(), column: column.name.clone() });
            }
            if !seen.insert((table.name.clone(), column.name.clone(), triple.value.clone())) {
                continue;
            }
            entries.push(DictionaryEntry {
                kind: EntryKind::Value,
                surface_forms: forms_of(&triple.value, &[]),
                table: table.name.clone(),
                column: Some(column.name.clone()),
                value: Some(triple.value),
            });
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries(entries: Vec<DictionaryEntry>) -> Self {
        let mut index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            for form in &e.surface_forms {
                index.entry(form.clone()).or_default().push(i);
            }
        }
        Self { entries, index, floor: DEFAULT_SCORE_FLOOR }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn entries(&self) -> &[DictionaryEntry] {
        &self.entries
    }

    /// Entries carrying `form` (already normalized).
    pub fn lookup(&self, form: &str) -> impl Iterator<Item = &DictionaryEntry> {
        self.index.get(form).into_iter().flatten().map(|&i| &self.entries[i])
    }

    pub fn value_entry_count(&self) -> usize {
        self.entries.iter().filter(|e| e.kind == EntryKind::Value).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DictionaryFile { entries: self.entries.clone() }).expect("dictionary serializes")
    }

    pub fn from_json(document: &str) -> Result<Self, KeywordError> {
        let file: DictionaryFile = serde_json::from_str(document)?;
        let mut entries = file.entries;
        for e in &mut entries {
            e.surface_forms = e.surface_forms.iter().map(|f| normalize(f)).filter(|f| !f.is_empty()).collect();
            if e.surface_forms.is_empty() {
                return Err(KeywordError::NoForms);
            }
        }
        Ok(Self::from_entries(entries))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KeywordError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| KeywordError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KeywordError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| KeywordError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Best entry per keyword; multi-word keywords fall back to their tokens
    /// when the whole phrase finds nothing.
    pub fn match_keywords<S: AsRef<str>>(&self, keywords: &[S]) -> MatchSet {
        let mut out = MatchSet::default();
        for keyword in keywords {
            let keyword = keyword.as_ref();
            let mut best = self.best_match(keyword);
            if best.is_none() {
                let tokens: Vec<String> = word_tokens(keyword).collect();
                if tokens.len() > 1 {
                    best = tokens
                        .iter()
                        .filter_map(|t| self.best_match(t))
                        .min_by(|a, b| candidate_order(a, b));
                }
            }
            match best {
                Some(c) => out.matches.push(KeywordMatch {
                    keyword: keyword.to_string(),
                    entry: self.entries[c.entry].clone(),
                    score: c.score,
                    match_class: c.class,
                }),
                None => out.unmatched.push(keyword.to_string()),
            }
        }
        out
    }

    fn best_match(&self, keyword: &str) -> Option<Candidate<'_>> {
        let norm = normalize(keyword);
        if norm.is_empty() {
            return None;
        }
        let mut candidates: Vec<Candidate> = Vec::new();
        for &i in self.index.get(&norm).into_iter().flatten() {
            let entry = &self.entries[i];
            let class = classify_full(entry, keyword, &norm);
            candidates.push(Candidate { entry: i, target: entry, class, score: class.base_score() });
        }
        if norm.chars().count() >= MIN_PREFIX_LEN {
            // forms extending the keyword
            for (form, ids) in self.index.range(norm.clone()..).take_while(|(f, _)| f.starts_with(&norm)) {
                if form != &norm {
                    self.push_partial(&mut candidates, ids, &norm, form);
                }
            }
            // forms the keyword extends
            for (cut, _) in norm.char_indices().skip(MIN_PREFIX_LEN) {
                let prefix = &norm[..cut];
                if let Some(ids) = self.index.get(prefix) {
                    self.push_partial(&mut candidates, ids, &norm, prefix);
                }
            }
        }
        candidates
            .into_iter()
            .filter(|c| c.score >= self.floor)
            .min_by(candidate_order)
    }

    fn push_partial<'a>(&'a self, candidates: &mut Vec<Candidate<'a>>, ids: &[usize], keyword: &str, form: &str) {
        let (a, b) = (keyword.chars().count(), form.chars().count());
        let ratio = a.min(b) as f64 / a.max(b) as f64;
        for &i in ids {
            candidates.push(Candidate {
                entry: i,
                target: &self.entries[i],
                class: MatchClass::PrefixPartial,
                score: MatchClass::PrefixPartial.base_score() * ratio,
            });
        }
    }
}

/// Class for a keyword whose normalized form equals one of the entry's forms.
fn classify_full(entry: &DictionaryEntry, keyword: &str, norm: &str) -> MatchClass {
    let label = entry.label();
    let exact = keyword.trim().eq_ignore_ascii_case(label) || keyword.trim().to_lowercase() == label.to_lowercase();
    match entry.kind {
        EntryKind::Value if exact => MatchClass::ExactValue,
        EntryKind::Value => MatchClass::Normalized,
        _ if exact => MatchClass::ExactName,
        _ if normalize(label) == norm => MatchClass::Normalized,
        _ => MatchClass::Synonym,
    }
}

#[derive(Debug, Clone)]
struct Candidate<'a> {
    entry: usize,
    target: &'a DictionaryEntry,
    class: MatchClass,
    score: f64,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.target.kind.rank().cmp(&b.target.kind.rank()))
        .then(a.target.target_key().cmp(&b.target.target_key()))
}

fn forms_of(name: &str, synonyms: &[String]) -> BTreeSet<String> {
    let mut forms: BTreeSet<String> = std::iter::once(name)
        .chain(synonyms.iter().map(String::as_str))
        .map(normalize)
        .filter(|f| !f.is_empty())
        .collect();
    if forms.is_empty() {
        forms.insert(name.to_lowercase());
    }
    forms
}

/// Reads a JSONL value source of `{"table","column","value"}` records.
pub fn read_value_source(reader: impl BufRead) -> Result<Vec<ValueTriple>, KeywordError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KeywordError::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let triple: ValueTriple = serde_json::from_str(&line)
            .map_err(|e| KeywordError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(triple);
    }
    Ok(out)
}

pub fn load_value_source(path: impl AsRef<Path>) -> Result<Vec<ValueTriple>, KeywordError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| KeywordError::Io { path: path.display().to_string(), source })?;
    read_value_source(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{tests, ColumnDef, DataType};
    use proptest::prelude::*;

    fn maintenance_schema() -> RelationalSchema {
        let mut s = tests::maintenance_schema();
        let order = &mut s.tables[1];
        order.synonyms = vec!["work order".into(), "orders".into()];
        order.columns.push(ColumnDef::new("criticity_level", DataType::Integer));
        RelationalSchema::new(s.tables, s.foreign_keys).unwrap()
    }

    fn triple(t: &str, c: &str, v: &str) -> ValueTriple {
        ValueTriple { table: t.into(), column: c.into(), value: v.into() }
    }

    fn installations() -> Vec<ValueTriple> {
        ["E-176", "P-X", "P-Y", "P-51", "REDUC-1", "T-ILHA"]
            .iter()
            .map(|v| triple("Installation", "name", v))
            .collect()
    }

    fn dictionary() -> KeywordDictionary {
        KeywordDictionary::build(&maintenance_schema(), installations()).unwrap()
    }

    #[test]
    fn entry_counts() {
        let schema = maintenance_schema();
        let d = dictionary();
        let columns: usize = schema.tables.iter().map(|t| t.columns.len()).sum();
        assert_eq!(d.entries().iter().filter(|e| e.kind == EntryKind::Table).count(), 4);
        assert_eq!(d.entries().iter().filter(|e| e.kind == EntryKind::Column).count(), columns);
        assert_eq!(d.value_entry_count(), 6);
    }

    #[test]
    fn no_indexed_values_and_dedup() {
        let d = KeywordDictionary::build(&maintenance_schema(), Vec::new()).unwrap();
        assert_eq!(d.value_entry_count(), 0);
        let mut vals = installations();
        vals.push(triple("installation", "NAME", "E-176"));
        let d = KeywordDictionary::build(&maintenance_schema(), vals).unwrap();
        assert_eq!(d.value_entry_count(), 6);
    }

    #[test]
    fn bad_value_triples() {
        let s = maintenance_schema();
        assert!(matches!(
            KeywordDictionary::build(&s, vec![triple("Installation", "type", "x")]),
            Err(KeywordError::NotIndexed { .. })
        ));
        assert!(matches!(
            KeywordDictionary::build(&s, vec![triple("Nope", "name", "x")]),
            Err(KeywordError::UnknownColumn { .. })
        ));
    }

    #[test]
    fn e176_maps_to_dashed_value() {
        let m = dictionary().match_keywords(&["E176"]);
        assert_eq!(m.matches.len(), 1);
        let hit = &m.matches[0];
        assert_eq!(hit.entry.value.as_deref(), Some("E-176"));
        assert_eq!(hit.entry.table, "Installation");
        assert_eq!(hit.entry.column.as_deref(), Some("name"));
        assert_eq!(hit.match_class, MatchClass::Normalized);
        let exact = dictionary().match_keywords(&["E-176"]);
        assert_eq!(exact.matches[0].match_class, MatchClass::ExactValue);
    }

    #[test]
    fn table_self_name() {
        let m = dictionary().match_keywords(&["installation"]);
        assert_eq!(m.matches[0].entry.kind, EntryKind::Table);
        assert_eq!(m.matches[0].match_class, MatchClass::ExactName);
        assert_eq!(m.matches[0].score, 0.95);
    }

    #[test]
    fn value_in_two_columns_uses_tie_break() {
        let s = RelationalSchema::from_json(
            r#"{"tables":[
                {"name":"A","columns":[{"name":"code","type":"string","indexed":true}]},
                {"name":"B","columns":[{"name":"code","type":"string","indexed":true}]}
            ],"foreign_keys":[]}"#,
        )
        .unwrap();
        let d = KeywordDictionary::build(&s, vec![triple("B", "code", "X9"), triple("A", "code", "X9")]).unwrap();
        let m = d.match_keywords(&["X9"]);
        // both candidates score 1.0 as exact_value; A sorts first
        let scores: Vec<_> =
            d.entries().iter().filter(|e| e.kind == EntryKind::Value).map(|e| classify_full(e, "X9", "x9")).collect();
        assert_eq!(scores, vec![MatchClass::ExactValue, MatchClass::ExactValue]);
        assert_eq!(m.matches[0].entry.table, "A");
    }

    #[test]
    fn synonyms_and_phrases() {
        let d = dictionary();
        let m = d.match_keywords(&["criticity level", "zzz qqq", "open orders", "work order"]);
        assert_eq!(m.matches.len() + m.unmatched.len(), 4);
        let crit = m.matches.iter().find(|x| x.keyword == "criticity level").unwrap();
        assert_eq!(crit.entry.column.as_deref(), Some("criticity_level"));
        assert_eq!(crit.match_class, MatchClass::Normalized);
        assert_eq!(m.unmatched, vec!["zzz qqq"]);
        let phrase = m.matches.iter().find(|x| x.keyword == "open orders").unwrap();
        assert_eq!(phrase.entry.table, "Maintenance_order");
        assert_eq!(phrase.match_class, MatchClass::Synonym);
        let syn = m.matches.iter().find(|x| x.keyword == "work order").unwrap();
        assert_eq!((syn.entry.kind, syn.match_class), (EntryKind::Table, MatchClass::Synonym));
    }

    #[test]
    fn prefix_partial_needs_lower_floor() {
        let d = dictionary();
        assert_eq!(d.match_keywords(&["installat"]).unmatched.len(), 1);
        let low = dictionary().with_floor(0.3);
        let m = low.match_keywords(&["installat"]);
        assert_eq!(m.matches[0].match_class, MatchClass::PrefixPartial);
        assert_eq!(m.matches[0].entry.table, "Installation");
        assert!((m.matches[0].score - 0.5 * 9.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn tables_union() {
        let d = dictionary();
        let m = d.match_keywords(&["E-176", "status"]);
        assert_eq!(tables_of(&m), BTreeSet::from(["Installation".to_string(), "Maintenance_order".to_string()]));
        assert!(tables_of(&MatchSet::default()).is_empty());
        let same = d.match_keywords(&["E-176", "installation"]);
        assert_eq!(tables_of(&same).len(), 1);
    }

    #[test]
    fn json_round_trip() {
        let d = dictionary();
        let back = KeywordDictionary::from_json(&d.to_json()).unwrap();
        assert_eq!(back.entries(), d.entries());
        let v: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
        let first_value = v["entries"].as_array().unwrap().iter().find(|e| e["kind"] == "value").unwrap();
        assert_eq!(first_value["value"], "E-176");
        assert!(v["entries"][0].get("column").is_none());
    }

    #[test]
    fn value_source_lines() {
        let src = "{\"table\":\"Installation\",\"column\":\"name\",\"value\":\"E-176\"}\n\nnot json\n";
        match read_value_source(src.as_bytes()) {
            Err(KeywordError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_index_form_is_findable() {
        let d = dictionary();
        for e in d.entries() {
            assert!(!e.surface_forms.is_empty());
            for f in &e.surface_forms {
                assert_eq!(&normalize(f), f);
                assert!(d.lookup(f).any(|x| x == e));
            }
        }
    }

    #[test]
    fn schema_names_self_match() {
        let schema = maintenance_schema();
        let d = dictionary();
        for t in &schema.tables {
            let m = d.match_keywords(&[t.name.as_str()]);
            assert_eq!(m.matches[0].entry.kind, EntryKind::Table, "{}", t.name);
            assert_eq!(m.matches[0].match_class, MatchClass::ExactName);
            for c in &t.columns {
                let m = d.match_keywords(&[c.name.as_str()]);
                let hit = &m.matches[0];
                assert!(matches!(hit.match_class, MatchClass::ExactName | MatchClass::ExactValue), "{}", c.name);
                assert_eq!(hit.entry.label().to_lowercase(), c.name.to_lowercase());
            }
        }
    }

    proptest! {
        #[test]
        fn accounting_is_total(keywords in proptest::collection::vec("[a-zA-Z0-9 _-]{0,14}", 0..8)) {
            let m = dictionary().match_keywords(&keywords);
            prop_assert_eq!(m.matches.len() + m.unmatched.len(), keywords.len());
            for hit in &m.matches {
                prop_assert!(hit.score >= DEFAULT_SCORE_FLOOR && hit.score <= 1.0);
            }
        }

        #[test]
        fn exact_value_never_loses_to_partial(idx in 0usize..6, floor in 0.0f64..0.5) {
            let value = installations()[idx].value.clone();
            let d = dictionary().with_floor(floor);
            let m = d.match_keywords(std::slice::from_ref(&value));
            prop_assert_eq!(m.matches[0].match_class, MatchClass::ExactValue);
            prop_assert_eq!(m.matches[0].entry.value.as_deref(), Some(value.as_str()));
        }
    }
}
