//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; the process fails if any does.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use kwsql::eval::{results_equivalent, run_benchmark, RunOptions, Verdict};
use kwsql::exec::{ExecutionBackend, ResultTable, SqliteBackend, Value};
use kwsql::join::{steiner_tree, synthesize_view, ViewDefinition};
use kwsql::keyword::MatchClass;
use kwsql::pipeline::{answer, AblationMode};
use kwsql::schema::ReferentialGraph;
use kwsql::sql;
use kwsql::store::{intercalate, ExamplePair, ExampleStore, HashingEmbedder};
use kwsql::synth::{generate_dataset, validate_sql, GenerationConfig, SynthDeps};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{fixture_path, gateway, transcript_rules, Fixture};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

// 1 ------------------------------------------------------------------------

fn random_connected_graph(rng: &mut ChaCha8Rng) -> (usize, Vec<(usize, usize)>) {
    let n = rng.gen_range(2..=7);
    let mut edges = BTreeSet::new();
    // random spanning tree, then extra edges
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.insert((u, v));
    }
    let extra = rng.gen_range(0..=n);
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    (n, edges.into_iter().collect())
}

/// Fewest nodes of any connected induced subgraph containing the terminals,
/// minus one.
fn brute_force_steiner_edges(n: usize, edges: &[(usize, usize)], terminals: &[usize]) -> usize {
    let mut best = usize::MAX;
    for mask in 0u32..(1 << n) {
        if terminals.iter().any(|&t| mask & (1 << t) == 0) {
            continue;
        }
        let size = mask.count_ones() as usize;
        if size > best {
            continue;
        }
        let start = terminals[0];
        let mut seen = 1u32 << start;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(a, b) in edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && mask & (1 << y) != 0 && seen & (1 << y) == 0 {
                        seen |= 1 << y;
                        stack.push(y);
                    }
                }
            }
        }
        if seen == mask {
            best = size - 1;
        }
    }
    best
}

fn tree_spans(n: usize, edges: &[(usize, usize)], tree: &[usize], terminals: &[usize]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    for &e in tree {
        let (a, b) = edges[e];
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false; // cycle
        }
        parent[ra] = rb;
    }
    let root = find(&mut parent, terminals[0]);
    terminals.iter().all(|&t| find(&mut parent, t) == root)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = 600;
    for case in 0..cases {
        let (n, edges) = random_connected_graph(&mut rng);
        let names: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let graph = ReferentialGraph::from_edges(names.clone(), &edges);
        let k = rng.gen_range(2..=3.min(n));
        let mut terminals: Vec<usize> = Vec::new();
        while terminals.len() < k {
            let t = rng.gen_range(0..n);
            if !terminals.contains(&t) {
                terminals.push(t);
            }
        }
        let term_names: Vec<&str> = terminals.iter().map(|&t| names[t].as_str()).collect();
        let tree = steiner_tree(&graph, &term_names).map_err(|e| format!("case {case}: {e}"))?;
        let expected = brute_force_steiner_edges(n, &edges, &terminals);
        ensure(tree.edges.len() == expected, || {
            format!("case {case}: {} edges, brute force {expected} ({edges:?}, terminals {terminals:?})", tree.edges.len())
        })?;
        ensure(tree_spans(n, &edges, &tree.edges, &terminals), || format!("case {case}: edges {:?} do not form a spanning tree", tree.edges))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{cases} graphs match brute force in {elapsed:.2?}"))
}

// 2 ------------------------------------------------------------------------

fn joins(view: &ViewDefinition) -> Vec<String> {
    view.join_conditions.iter().flatten().map(|p| format!("{} = {}", p.left, p.right)).collect()
}

fn criterion_2() -> Outcome {
    let f = Fixture::load();
    let q24 = synthesize_view(&f.schema, &["Maintenance_recommendation", "Installation"], None).map_err(|e| e.to_string())?;
    ensure(q24.name == "Recommendation_Installation", || format!("Q24 name {}", q24.name))?;
    ensure(joins(&q24) == ["m.installation_name = i.name"], || format!("Q24 joins {:?}", joins(&q24)))?;
    let tables: Vec<&str> = q24.base_tables.iter().map(|t| t.table.as_str()).collect();
    ensure(tables == ["Maintenance_recommendation", "Installation"], || format!("Q24 tables {tables:?}"))?;
    ensure(
        q24.projected_columns.iter().all(|c| c.output_name.starts_with("Recommendation_") || c.output_name.starts_with("Installation_")),
        || "Q24 column prefixes".into(),
    )?;
    let rec_cols = f.schema.table("Maintenance_recommendation").unwrap().columns.len();
    let inst_cols = f.schema.table("Installation").unwrap().columns.len();
    ensure(q24.projected_columns.len() == rec_cols + inst_cols, || "Q24 column count".into())?;
    ensure(
        q24.select_sql().contains("FROM Maintenance_recommendation m JOIN Installation i ON m.installation_name = i.name"),
        || q24.select_sql(),
    )?;

    let q93 = synthesize_view(&f.schema, &["Maintenance_request", "Maintenance_recommendation", "Maintenance_order"], None)
        .map_err(|e| e.to_string())?;
    ensure(q93.name == "Request_Recommendation_Order", || format!("Q93 name {}", q93.name))?;
    ensure(joins(&q93) == ["m.id = r.note_id", "r.order_id = o.id"], || format!("Q93 joins {:?}", joins(&q93)))?;
    let first: Vec<&str> = q93.projected_columns.iter().take(3).map(|c| c.output_name.as_str()).collect();
    ensure(first == ["Request_id", "Recommendation_id", "Order_id"], || format!("Q93 leading columns {first:?}"))?;

    for v in [&q24, &q93] {
        let out = f.db.execute(&v.select_sql()).map_err(|e| e.to_string())?;
        let t = out.rows().ok_or_else(|| format!("{} body failed: {out:?}", v.name))?;
        ensure(t.width() == v.projected_columns.len(), || format!("{} width", v.name))?;
    }
    Ok("Q24 and Q93 views reproduced".into())
}

// 3 ------------------------------------------------------------------------

fn pair(id: &str) -> ExamplePair {
    ExamplePair::new(id, id, "SELECT name FROM Installation").unwrap()
}

fn ids(list: &[ExamplePair]) -> Vec<String> {
    list.iter().map(|e| e.id.clone()).collect()
}

fn criterion_3() -> Outcome {
    let lists: Vec<Vec<ExamplePair>> =
        ["a", "b", "c"].iter().map(|p| (1..=3).map(|i| pair(&format!("{p}{i}"))).collect()).collect();
    let out = ids(&intercalate(&lists, 8).map_err(|e| e.to_string())?);
    ensure(out == ["a1", "b1", "c1", "a2", "b2", "c2", "a3", "b3"], || format!("round robin {out:?}"))?;

    let dup = vec![vec![pair("x"), pair("y"), pair("z")], vec![pair("x"), pair("w"), pair("y")], vec![pair("v")]];
    let out = ids(&intercalate(&dup, 8).map_err(|e| e.to_string())?);
    ensure(out == ["x", "v", "y", "w", "z"], || format!("dedup {out:?}"))?;

    let single = vec![(1..=8).map(|i| pair(&format!("s{i}"))).collect::<Vec<_>>()];
    let out = ids(&intercalate(&single, 8).map_err(|e| e.to_string())?);
    ensure(out == ids(&single[0]), || format!("m=1 {out:?}"))?;
    ensure(intercalate(&[], 8).is_err(), || "no lists accepted".into())?;
    Ok("m=3 k=8 round robin, dedup and m=1 cases".into())
}

// 4 ------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let f = Fixture::load();
    let set = f.dictionary.match_keywords(&["E176"]);
    let m = set.matches.iter().find(|m| m.keyword == "E176").ok_or("E176 unmatched")?;
    ensure(m.entry.value.as_deref() == Some("E-176"), || format!("matched {}", m.entry))?;
    ensure(m.entry.table == "Installation" && m.entry.column.as_deref() == Some("name"), || format!("matched {}", m.entry))?;
    ensure(m.match_class == MatchClass::Normalized, || format!("class {:?}", m.match_class))?;
    ensure((m.score - 0.8).abs() < 1e-12, || format!("score {}", m.score))?;
    Ok(format!("E176 -> {} ({:?}, {})", m.entry.label(), m.match_class, m.score))
}

// 5 ------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let f = Fixture::load();
    let rules = transcript_rules(&["complete"]);
    let counts: BTreeMap<_, usize> = f.questions.iter().fold(BTreeMap::new(), |mut m, q| {
        *m.entry(q.difficulty).or_default() += 1;
        m
    });
    ensure(f.questions.len() == 12 && counts.values().all(|&c| c == 4), || format!("suite shape {counts:?}"))?;
    let start = Instant::now();
    let gw = gateway(rules.clone());
    let report = run_benchmark(&f.questions, AblationMode::Complete, &f.deps(&gw), RunOptions { concurrency: 4 });
    let full = start.elapsed();
    ensure(report.total.correct == 12, || {
        let bad: Vec<String> =
            report.results.iter().filter(|r| r.verdict != Verdict::Correct).map(|r| format!("{} {:?}", r.id, r.error)).collect();
        format!("{}/12 correct: {bad:?}", report.total.correct)
    })?;
    ensure(report.by_difficulty.values().all(|s| s.accuracy == 1.0), || "per-difficulty accuracy".into())?;
    ensure(full < Duration::from_secs(30), || format!("suite took {full:?}"))?;

    for i in 0..rules.len() {
        let mut reduced = rules.clone();
        let removed = reduced.remove(i);
        let gw = gateway(reduced);
        let r = run_benchmark(&f.questions, AblationMode::Complete, &f.deps(&gw), RunOptions { concurrency: 4 });
        let dropped: Vec<&str> = r.results.iter().filter(|q| q.verdict != Verdict::Correct).map(|q| q.id.as_str()).collect();
        ensure(dropped.len() == 1 && r.total.correct == 11, || {
            format!("removing rule {i} ({:?}) dropped {dropped:?}", removed.matcher)
        })?;
    }
    Ok(format!("12/12 correct in {full:.2?}; each of {} single-rule removals drops exactly one verdict", rules.len()))
}

// 6 ------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let f = Fixture::load();
    let mut f1 = BTreeMap::new();
    for (mode, files) in [
        (AblationMode::Complete, vec!["complete"]),
        (AblationMode::LlmDfeDanke, vec!["llm_dfe_danke", "complete"]),
        (AblationMode::LlmOnly, vec!["llm_only", "complete"]),
    ] {
        let gw = gateway(transcript_rules(&files));
        let report = run_benchmark(&f.questions, mode, &f.deps(&gw), RunOptions::default());
        f1.insert(mode, report.linking.f1);
    }
    let (c, d, l) = (f1[&AblationMode::Complete], f1[&AblationMode::LlmDfeDanke], f1[&AblationMode::LlmOnly]);
    ensure(c >= d && d >= l, || format!("F1 complete {c:.3}, llm_dfe_danke {d:.3}, llm_only {l:.3}"))?;
    Ok(format!("F1 complete {c:.3} >= llm_dfe_danke {d:.3} >= llm_only {l:.3}"))
}

// 7 ------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let f = Fixture::load();
    let gw = gateway(transcript_rules(&["complete"]));
    let deps = f.deps(&gw);
    let script = std::fs::read_to_string(fixture_path("data.sql")).map_err(|e| e.to_string())?;
    for q in &f.questions {
        let out = answer(&q.question, AblationMode::Complete, &deps).map_err(|e| format!("{}: {e}", q.id))?;
        // a fresh database with the view created, so the query runs as written
        let with_view = SqliteBackend::from_script(&script).map_err(|e| e.to_string())?;
        with_view.run_script(&out.view.render_sql()).map_err(|e| format!("{}: {e}", q.id))?;
        let over_view = with_view.execute(&out.sql_over_view).map_err(|e| e.to_string())?;
        let inlined = f.db.execute(&out.sql_over_base).map_err(|e| e.to_string())?;
        let (a, b) = match (over_view.rows(), inlined.rows()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(format!("{}: execution failed {over_view:?} / {inlined:?}", q.id)),
        };
        ensure(results_equivalent(a, b, false) && results_equivalent(b, a, false), || format!("{}: results differ", q.id))?;
    }
    Ok(format!("{} questions: view query and inlined query agree", f.questions.len()))
}

// 8 ------------------------------------------------------------------------

fn reference_key(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Integer(i) => format!("n:{i}"),
        Value::Real(r) if r.fract() == 0.0 => format!("n:{}", *r as i64),
        Value::Real(r) => format!("n:{r:.9}"),
        Value::Text(s) => format!("s:{}", s.trim()),
    }
}

fn permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n, k - 1) {
        for j in 0..n {
            if !p.contains(&j) {
                let mut q = p.clone();
                q.push(j);
                out.push(q);
            }
        }
    }
    out
}

/// Tries every injective column mapping outright.
fn reference_equivalent(gold: &ResultTable, pred: &ResultTable, ordered: bool) -> bool {
    if gold.width() > pred.width() || gold.rows.len() != pred.rows.len() {
        return false;
    }
    let key_rows = |t: &ResultTable, cols: &[usize]| -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = t.rows.iter().map(|r| cols.iter().map(|&c| reference_key(&r[c])).collect()).collect();
        if !ordered {
            rows.sort();
        }
        rows
    };
    let g = key_rows(gold, &(0..gold.width()).collect::<Vec<_>>());
    permutations(pred.width(), gold.width()).iter().any(|m| key_rows(pred, m) == g)
}

fn random_table(rng: &mut ChaCha8Rng) -> ResultTable {
    let w = rng.gen_range(1..=4);
    let h = rng.gen_range(1..=5);
    let cols = (0..w).map(|c| format!("c{c}")).collect();
    let rows = (0..h)
        .map(|_| {
            (0..w)
                .map(|_| match rng.gen_range(0..3) {
                    0 => Value::Integer(rng.gen_range(0..4)),
                    1 => Value::Text(["a", "b", "c"][rng.gen_range(0..3)].into()),
                    _ => Value::Real(rng.gen_range(0..4) as f64),
                })
                .collect()
        })
        .collect();
    ResultTable::new(cols, rows)
}

fn shuffled(t: &ResultTable, rng: &mut ChaCha8Rng, rows: bool, cols: bool) -> ResultTable {
    let mut order: Vec<usize> = (0..t.width()).collect();
    if cols {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
    }
    let mut out: Vec<Vec<Value>> = t.rows.iter().map(|r| order.iter().map(|&c| r[c].clone()).collect()).collect();
    if rows {
        for i in (1..out.len()).rev() {
            out.swap(i, rng.gen_range(0..=i));
        }
    }
    ResultTable::new((0..t.width()).map(|c| format!("x{c}")).collect(), out)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cases = Vec::new();
    for i in 0..30 {
        let gold = random_table(&mut rng);
        let (pred, ordered) = match i % 5 {
            // renamed, permuted columns and rows
            0 => (shuffled(&gold, &mut rng, true, true), false),
            // one value perturbed
            1 => {
                let mut p = shuffled(&gold, &mut rng, true, false);
                let r = rng.gen_range(0..p.rows.len());
                let c = rng.gen_range(0..p.width());
                p.rows[r][c] = Value::Text("perturbed".into());
                (p, false)
            }
            // row order matters under ORDER BY
            2 => (shuffled(&gold, &mut rng, true, true), true),
            3 => (shuffled(&gold, &mut rng, false, true), true),
            // an extra predicted column
            _ => {
                let mut p = shuffled(&gold, &mut rng, true, true);
                p.columns.push("extra".into());
                for row in &mut p.rows {
                    row.push(Value::Integer(rng.gen_range(0..9)));
                }
                (p, false)
            }
        };
        cases.push((gold, pred, ordered));
    }
    let mut accepted = 0;
    for (i, (gold, pred, ordered)) in cases.iter().enumerate() {
        let fast = results_equivalent(gold, pred, *ordered);
        let slow = reference_equivalent(gold, pred, *ordered);
        ensure(fast == slow, || format!("case {i}: comparator {fast}, reference {slow}"))?;
        if i % 5 == 1 {
            ensure(!fast, || format!("case {i}: perturbed value accepted"))?;
        }
        if i % 5 == 0 || i % 5 == 3 || i % 5 == 4 {
            ensure(fast, || format!("case {i}: equal content rejected"))?;
        }
        accepted += fast as usize;
    }
    Ok(format!("30 table pairs agree with the exhaustive reference ({accepted} equivalent)"))
}

// 9 ------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let f = Fixture::load();
    let rules = transcript_rules(&["generation"]);
    let config = GenerationConfig { examples_target: 20, rng_seed: 7, ..Default::default() };
    let run = || -> Result<(Vec<u8>, Vec<u8>, kwsql::synth::GenerationResult), String> {
        let gw = gateway(rules.clone());
        let deps = SynthDeps { schema: &f.schema, graph: &f.graph, db: &f.db, gateway: &gw };
        let result = generate_dataset(&config, &deps, ExampleStore::new(Box::new(HashingEmbedder::default())))
            .map_err(|e| e.to_string())?;
        let mut examples = Vec::new();
        result.store.write_jsonl(&mut examples).map_err(|e| e.to_string())?;
        let mut discards = Vec::new();
        result.write_discards(&mut discards).map_err(|e| e.to_string())?;
        Ok((examples, discards, result))
    };
    let (a, da, result) = run()?;
    let (b, db, _) = run()?;
    ensure(a == b && da == db, || "runs differ".into())?;
    ensure(result.store.len() == config.examples_target, || format!("{} examples", result.store.len()))?;
    for (e, selected) in result.store.examples().iter().zip(&result.selections) {
        sql::parse(e.sql()).map_err(|err| format!("{}: {err}", e.id))?;
        validate_sql(e.sql(), selected).map_err(|err| format!("{}: {err}", e.id))?;
    }
    Ok(format!(
        "{} examples, {} bytes, identical across runs; {} discarded attempts",
        result.store.len(),
        a.len(),
        result.discards.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("steiner tree vs brute force", criterion_1),
        ("Q24/Q93 view reproduction", criterion_2),
        ("example intercalation", criterion_3),
        ("keyword repair E176", criterion_4),
        ("scripted end-to-end suite", criterion_5),
        ("linking ablation ordering", criterion_6),
        ("inline round trip", criterion_7),
        ("comparator soundness", criterion_8),
        ("generator determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
