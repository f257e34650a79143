mod config;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use kwsql::eval::{load_benchmark, run_benchmark, RunOptions};
use kwsql::exec::{ExecutionBackend, SqliteBackend};
use kwsql::join::{synthesize_view_with, ViewConfig};
use kwsql::keyword::{load_value_source, KeywordDictionary};
use kwsql::llm::{Gateway, HttpBackend, LlmBackend, ScriptedBackend, TemplateSet};
use kwsql::pipeline::{answer, schema_link, trace_json, AblationMode, Deps, PipelineError};
use kwsql::schema::{ReferentialGraph, RelationalSchema};
use kwsql::store::{Embedder, ExampleStore, HashingEmbedder, HttpEmbedder};
use kwsql::synth::{generate_dataset, SynthDeps};

use config::{AppConfig, ConfigError, EmbedderConfig, LlmBackendConfig, Verbosity};

#[derive(Parser, Debug)]
#[command(name = "kwsql", version, about = "Answer questions over a relational database with SQL")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, default_value = "kwsql.json")]
    config: PathBuf,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<AblationMode>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the step trace to stderr. Raw model output is kept only at verbose verbosity.
    #[arg(long, global = true)]
    trace: bool,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the keyword dictionary from the schema and the value source.
    Index {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic question/SQL pairs.
    GenDataset {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Discarded attempts, one JSON object per line.
        #[arg(long)]
        discards: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Link a question to schema tables.
    Link { question: String },
    /// Print the join view over comma-separated tables.
    View { tables: String },
    /// Answer a question and print the SQL over base tables.
    Ask { question: String },
    /// Run a benchmark file and write report files.
    Eval {
        benchmark: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Read questions from stdin, one per line.
    Repl,
}

fn parse_mode(s: &str) -> Result<AblationMode, String> {
    AblationMode::parse(s).ok_or_else(|| {
        let names: Vec<&str> = AblationMode::ALL.iter().map(|m| m.as_str()).collect();
        format!("unknown mode {s:?}; expected one of {}", names.join(", "))
    })
}

/// A failure tagged with the step that produced it.
#[derive(Debug)]
struct Failure {
    step: String,
    message: String,
    config: bool,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self { step: "config".into(), message: message.to_string(), config: true }
    }

    fn at(step: &str, message: impl ToString) -> Self {
        Self { step: step.into(), message: message.to_string(), config: false }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::at(&e.step, &e.failure)
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("error")),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ERROR {}: {}", f.step, single_line(&f.message));
            ExitCode::from(if f.config { 2 } else { 1 })
        }
    }
}

/// Loaded configuration with flag overrides applied.
struct App {
    config: AppConfig,
    mode: AblationMode,
    trace: bool,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = AppConfig::load(&cli.config)?;
    if let Some(k) = cli.k {
        config.k = k;
    }
    if let Some(s) = cli.seed {
        config.seed = Some(s);
        config.generation.rng_seed = s;
    }
    if let Some(c) = cli.concurrency {
        config.concurrency = c;
    }
    config.validate()?;
    let app = App { mode: cli.mode.unwrap_or(config.mode), trace: cli.trace, config };

    match cli.command {
        Command::Index { out } => index(&app, out.as_deref()),
        Command::GenDataset { out, discards, count } => gen_dataset(&app, out, discards, count),
        Command::View { tables } => view(&app, &tables),
        Command::Link { question } => {
            let r = Resources::load(&app)?;
            let gw = r.gateway(&app)?;
            let link = schema_link(&question, app.mode, &r.deps(&gw, &app))?;
            app.dump_trace(&link.trace);
            let out = serde_json::json!({
                "tables": link.tables,
                "matches": link.matches.matches,
                "unmatched": link.matches.unmatched,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            Ok(())
        }
        Command::Ask { question } => {
            let r = Resources::load(&app)?;
            let gw = r.gateway(&app)?;
            let out = answer(&question, app.mode, &r.deps(&gw, &app)).inspect_err(|e| app.dump_trace(&e.trace))?;
            app.dump_trace(&out.trace);
            println!("{}", out.sql_over_base);
            Ok(())
        }
        Command::Eval { benchmark, out_dir } => eval(&app, &benchmark, &out_dir),
        Command::Repl => repl(&app),
    }
}

impl App {
    fn dump_trace(&self, trace: &[kwsql::pipeline::StepRecord]) {
        if self.trace {
            let verbose = self.config.verbosity == Verbosity::Verbose;
            eprintln!("{}", serde_json::to_string_pretty(&trace_json(trace, verbose)).expect("json"));
        }
    }
}

fn load_schema(config: &AppConfig) -> Result<RelationalSchema, Failure> {
    RelationalSchema::load(&config.schema_path).map_err(Failure::config)
}

fn index(app: &App, out: Option<&Path>) -> Result<(), Failure> {
    let schema = load_schema(&app.config)?;
    let values = match &app.config.value_source_path {
        Some(p) => {
            AppConfig::require("value_source_path", p)?;
            load_value_source(p).map_err(|e| Failure::at("index", e))?
        }
        None => Vec::new(),
    };
    let dictionary = KeywordDictionary::build(&schema, values).map_err(|e| Failure::at("index", e))?;
    let target = out.unwrap_or(&app.config.dictionary_path);
    dictionary.save(target).map_err(|e| Failure::at("index", e))?;
    println!("{} entries ({} values) -> {}", dictionary.entries().len(), dictionary.value_entry_count(), target.display());
    Ok(())
}

fn view(app: &App, tables: &str) -> Result<(), Failure> {
    let schema = load_schema(&app.config)?;
    let graph = ReferentialGraph::build(&schema);
    let names: Vec<&str> = tables.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    let v = synthesize_view_with(&schema, &graph, &names, None, &ViewConfig::default()).map_err(|e| Failure::at("view_synthesis", e))?;
    println!("{}", v.render_sql());
    Ok(())
}

fn embedder(config: &AppConfig) -> Box<dyn Embedder> {
    match &config.embedder {
        EmbedderConfig::Hashing { dimension } => Box::new(HashingEmbedder::new(*dimension)),
        EmbedderConfig::Http { url, model, dimension } => Box::new(HttpEmbedder::new(url, model, *dimension)),
    }
}

fn connect(config: &AppConfig) -> Result<SqliteBackend, Failure> {
    SqliteBackend::connect(&config.database).map_err(Failure::config)
}

fn build_gateway(app: &App) -> Result<Gateway, Failure> {
    let backend: Arc<dyn LlmBackend> = match &app.config.llm_backend {
        None => return Err(Failure::config("no LLM backend configured (set llm_backend)")),
        Some(LlmBackendConfig::Scripted(s)) => {
            let mut paths: Vec<&PathBuf> = s.by_mode.get(&app.mode).map(|v| v.iter().collect()).unwrap_or_default();
            paths.extend(&s.transcripts);
            Arc::new(ScriptedBackend::load_all(&paths).map_err(Failure::config)?)
        }
        Some(LlmBackendConfig::Http(h)) => Arc::new(HttpBackend::new(h.clone())),
    };
    let mut gw = Gateway::new(backend);
    if let Some(dir) = &app.config.templates_dir {
        gw = gw.with_templates(TemplateSet::from_dir(dir).map_err(Failure::config)?);
    }
    gw.seed = app.config.seed;
    Ok(gw)
}

/// Everything a pipeline run reads.
struct Resources {
    schema: RelationalSchema,
    graph: ReferentialGraph,
    dictionary: KeywordDictionary,
    store: ExampleStore,
    db: SqliteBackend,
    view_config: ViewConfig,
}

impl Resources {
    fn load(app: &App) -> Result<Self, Failure> {
        let c = &app.config;
        AppConfig::require("dictionary_path", &c.dictionary_path)?;
        AppConfig::require("examples_path", &c.examples_path)?;
        let schema = load_schema(c)?;
        let graph = ReferentialGraph::build(&schema);
        let dictionary = KeywordDictionary::load(&c.dictionary_path).map_err(Failure::config)?;
        let store = ExampleStore::load(&c.examples_path, embedder(c)).map_err(Failure::config)?;
        let db = connect(c)?;
        Ok(Self { schema, graph, dictionary, store, db, view_config: ViewConfig::default() })
    }

    fn gateway(&self, app: &App) -> Result<Gateway, Failure> {
        build_gateway(app)
    }

    fn deps<'a>(&'a self, gateway: &'a Gateway, app: &App) -> Deps<'a> {
        Deps {
            schema: &self.schema,
            graph: &self.graph,
            dictionary: &self.dictionary,
            store: &self.store,
            gateway,
            db: Some(&self.db as &dyn ExecutionBackend),
            view_config: &self.view_config,
            k: app.config.k,
        }
    }
}

fn gen_dataset(app: &App, out: Option<PathBuf>, discards: Option<PathBuf>, count: Option<usize>) -> Result<(), Failure> {
    let c = &app.config;
    let schema = load_schema(c)?;
    let graph = ReferentialGraph::build(&schema);
    let db = connect(c)?;
    let gw = build_gateway(app)?;
    let mut generation = c.generation.clone();
    if let Some(n) = count {
        generation.examples_target = n;
    }
    generation.validate().map_err(Failure::config)?;
    let deps = SynthDeps { schema: &schema, graph: &graph, db: &db, gateway: &gw };
    let result = generate_dataset(&generation, &deps, ExampleStore::new(embedder(c))).map_err(|e| Failure::at("gen_dataset", e))?;
    let out = out.unwrap_or_else(|| c.examples_path.clone());
    result.store.save(&out).map_err(|e| Failure::at("gen_dataset", e))?;
    let discards = discards.unwrap_or_else(|| out.with_extension("discards.jsonl"));
    let file = std::fs::File::create(&discards).map_err(|e| Failure::at("gen_dataset", format!("{}: {e}", discards.display())))?;
    result.write_discards(std::io::BufWriter::new(file)).map_err(|e| Failure::at("gen_dataset", e))?;
    if let Some(w) = &result.warning {
        eprintln!("warning: {w}");
    }
    println!(
        "{} examples in {} attempts -> {} ({} discarded -> {})",
        result.store.len(),
        result.attempts,
        out.display(),
        result.discards.len(),
        discards.display()
    );
    Ok(())
}

fn eval(app: &App, benchmark: &Path, out_dir: &Path) -> Result<(), Failure> {
    AppConfig::require("benchmark", benchmark)?;
    let questions = load_benchmark(benchmark).map_err(Failure::config)?;
    let r = Resources::load(app)?;
    let gw = r.gateway(app)?;
    let report = run_benchmark(&questions, app.mode, &r.deps(&gw, app), RunOptions { concurrency: app.config.concurrency });
    let write = |name: &str, body: &[u8]| -> Result<(), Failure> {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Failure::at("eval", format!("{}: {e}", path.display())))
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Failure::at("eval", e))?;
    write("report.json", report.to_json().as_bytes())?;
    write("report.txt", report.to_text().as_bytes())?;
    let mut near = Vec::new();
    report.write_near_misses(&mut near).map_err(|e| Failure::at("eval", e))?;
    write("near_misses.jsonl", &near)?;
    print!("{}", report.to_text());
    Ok(())
}

fn repl(app: &App) -> Result<(), Failure> {
    let r = Resources::load(app)?;
    let gw = r.gateway(app)?;
    let deps = r.deps(&gw, app);
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    loop {
        print!("> ");
        let _ = stdout.flush();
        let mut line = String::new();
        match stdin.lock().read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => return Err(Failure::at("repl", e)),
        }
        let question = line.trim();
        if question.is_empty() {
            continue;
        }
        if question == ":quit" || question == ":q" {
            break;
        }
        match answer(question, app.mode, &deps) {
            Ok(out) => {
                app.dump_trace(&out.trace);
                println!("{}", out.sql_over_base);
            }
            Err(e) => {
                app.dump_trace(&e.trace);
                println!("ERROR {}: {}", e.step, single_line(&e.failure.to_string()));
            }
        }
    }
    Ok(())
}
