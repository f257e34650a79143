#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use kwsql::eval::{load_benchmark, BenchmarkQuestion};
use kwsql::exec::SqliteBackend;
use kwsql::join::ViewConfig;
use kwsql::keyword::{load_value_source, KeywordDictionary};
use kwsql::llm::{Gateway, ScriptedBackend, TranscriptRule};
use kwsql::pipeline::{Deps, DEFAULT_K};
use kwsql::schema::{ReferentialGraph, RelationalSchema};
use kwsql::store::{ExampleStore, HashingEmbedder};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/maintenance")
}

pub fn fixture_path(name: &str) -> PathBuf {
    fixture_dir().join(name)
}

pub struct Fixture {
    pub schema: RelationalSchema,
    pub graph: ReferentialGraph,
    pub dictionary: KeywordDictionary,
    pub store: ExampleStore,
    pub db: SqliteBackend,
    pub view_config: ViewConfig,
    pub questions: Vec<BenchmarkQuestion>,
}

impl Fixture {
    pub fn load() -> Self {
        let schema = RelationalSchema::load(fixture_path("schema.json")).unwrap();
        let graph = ReferentialGraph::build(&schema);
        let values = load_value_source(fixture_path("values.jsonl")).unwrap();
        let dictionary = KeywordDictionary::build(&schema, values).unwrap();
        let store = ExampleStore::load(fixture_path("examples.jsonl"), Box::new(HashingEmbedder::default())).unwrap();
        let db = SqliteBackend::connect(fixture_path("data.sql").to_str().unwrap()).unwrap();
        let questions = load_benchmark(fixture_path("benchmark.jsonl")).unwrap();
        Self { schema, graph, dictionary, store, db, view_config: ViewConfig::default(), questions }
    }

    pub fn deps<'a>(&'a self, gateway: &'a Gateway) -> Deps<'a> {
        Deps {
            schema: &self.schema,
            graph: &self.graph,
            dictionary: &self.dictionary,
            store: &self.store,
            gateway,
            db: Some(&self.db),
            view_config: &self.view_config,
            k: DEFAULT_K,
        }
    }
}

/// Rules from the named transcripts, earlier files taking precedence.
pub fn transcript_rules(names: &[&str]) -> Vec<TranscriptRule> {
    let paths: Vec<PathBuf> = names.iter().map(|n| fixture_path(&format!("transcripts/{n}.jsonl"))).collect();
    ScriptedBackend::load_all(&paths).unwrap().rules().to_vec()
}

pub fn gateway(rules: Vec<TranscriptRule>) -> Gateway {
    Gateway::new(Arc::new(ScriptedBackend::new(rules)))
}
