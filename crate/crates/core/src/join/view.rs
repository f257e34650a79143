use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::schema::{DataType, ReferentialGraph, RelationalSchema};
use crate::sql::{self, Source, Statement};
use crate::text::ident_eq;

use super::steiner::{resolve_terminals, steiner_tree};
use super::JoinError;

const MAX_VIEW_NAME: usize = 120;
const RESERVED_VIEW_NAMES: &[&str] = &[
    "order", "group", "select", "from", "where", "table", "view", "join", "limit", "user", "having", "index",
];

/// Naming knobs for synthesized views.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewConfig {
    /// Table-name prefixes dropped when building display names.
    pub strip_prefixes: Vec<String>,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self { strip_prefixes: vec!["Maintenance_".to_string()] }
    }
}

impl ViewConfig {
    /// `Maintenance_request` becomes `Request`.
    pub fn display_name(&self, table: &str) -> String {
        let stripped = self
            .strip_prefixes
            .iter()
            .find(|p| table.len() > p.len() && table.is_char_boundary(p.len()) && table[..p.len()].eq_ignore_ascii_case(p))
            .map_or(table, |p| &table[p.len()..]);
        let mut chars = stripped.chars();
        match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewTable {
    pub table: String,
    pub alias: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualifiedColumn {
    pub alias: String,
    pub column: String,
}

impl std::fmt::Display for QualifiedColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.alias, self.column)
    }
}

impl Serialize for QualifiedColumn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `left = right`, where `left` belongs to the table already in the join
/// block and `right` to the table being joined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JoinPredicate {
    pub left: QualifiedColumn,
    pub right: QualifiedColumn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ViewColumn {
    pub alias: String,
    pub column: String,
    #[serde(rename = "as")]
    pub output_name: String,
    #[serde(skip)]
    pub table: String,
    #[serde(skip)]
    pub data_type: Option<DataType>,
}

/// A per-question virtual table: the base tables of a Steiner tree joined by
/// the foreign keys on its edges, exposing every column as `<Table>_<column>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ViewDefinition {
    pub name: String,
    #[serde(rename = "tables")]
    pub base_tables: Vec<ViewTable>,
    /// One group per tree edge, aligned with `base_tables[1..]`.
    #[serde(rename = "joins")]
    pub join_conditions: Vec<Vec<JoinPredicate>>,
    #[serde(rename = "columns")]
    pub projected_columns: Vec<ViewColumn>,
}

impl ViewDefinition {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("view serializes")
    }

    pub fn table_for_alias(&self, alias: &str) -> Option<&str> {
        self.base_tables.iter().find(|t| ident_eq(&t.alias, alias)).map(|t| t.table.as_str())
    }

    pub fn contains_table(&self, table: &str) -> bool {
        self.base_tables.iter().any(|t| ident_eq(&t.table, table))
    }

    /// Output column exposing `table.column`, if the view carries it.
    pub fn output_for(&self, table: &str, column: &str) -> Option<&ViewColumn> {
        self.projected_columns
            .iter()
            .find(|c| ident_eq(&c.table, table) && ident_eq(&c.column, column))
    }

    /// The defining `SELECT ... FROM ... JOIN ...` body.
    pub fn select_sql(&self) -> String {
        let columns: Vec<String> = self
            .projected_columns
            .iter()
            .map(|c| format!("{}.{} AS {}", c.alias, c.column, c.output_name))
            .collect();
        let mut out = format!("SELECT {} FROM {} {}", columns.join(", "), self.base_tables[0].table, self.base_tables[0].alias);
        for (table, group) in self.base_tables[1..].iter().zip(&self.join_conditions) {
            let conds: Vec<String> = group.iter().map(|p| format!("{} = {}", p.left, p.right)).collect();
            out.push_str(&format!(" JOIN {} {} ON {}", table.table, table.alias, conds.join(" AND ")));
        }
        out
    }

    /// `CREATE VIEW <name> AS <select>`.
    pub fn render_sql(&self) -> String {
        format!("CREATE VIEW {} AS {}", self.name, self.select_sql())
    }

    /// The view presented as a plain table, for prompting.
    pub fn render_ddl(&self) -> String {
        let columns: Vec<String> = self
            .projected_columns
            .iter()
            .map(|c| match c.data_type {
                Some(t) => format!("{} {}", c.output_name, t.sql_name()),
                None => c.output_name.clone(),
            })
            .collect();
        format!("CREATE TABLE {} ({})", self.name, columns.join(", "))
    }

    /// Output columns backed by primary-key columns, in projection order.
    pub fn key_columns(&self, schema: &RelationalSchema) -> Vec<&str> {
        self.projected_columns
            .iter()
            .filter(|c| schema.column(&c.table, &c.column).is_some_and(|d| d.is_primary_key))
            .map(|c| c.output_name.as_str())
            .collect()
    }
}

pub fn synthesize_view<S: AsRef<str>>(
    schema: &RelationalSchema,
    terminals: &[S],
    name: Option<&str>,
) -> Result<ViewDefinition, JoinError> {
    let graph = ReferentialGraph::build(schema);
    synthesize_view_with(schema, &graph, terminals, name, &ViewConfig::default())
}

/// Builds the view over the Steiner tree of `terminals`. The first terminal
/// roots a breadth-first traversal that fixes table order, aliases and the
/// default name.
pub fn synthesize_view_with<S: AsRef<str>>(
    schema: &RelationalSchema,
    graph: &ReferentialGraph,
    terminals: &[S],
    name: Option<&str>,
    config: &ViewConfig,
) -> Result<ViewDefinition, JoinError> {
    let tree = steiner_tree(graph, terminals)?;
    let root = resolve_terminals(graph, terminals)?[0];

    // breadth-first order over tree edges
    let mut order: Vec<(usize, Option<usize>)> = vec![(root, None)];
    let mut queue = VecDeque::from([root]);
    let mut visited = vec![root];
    while let Some(v) = queue.pop_front() {
        let mut incident: Vec<usize> = tree
            .edges
            .iter()
            .copied()
            .filter(|&e| {
                let edge = &graph.edges()[e];
                edge.a == v || edge.b == v
            })
            .collect();
        incident.sort_by_key(|&e| graph.edge_key(e));
        for e in incident {
            let w = graph.edges()[e].other(v);
            if !visited.contains(&w) {
                visited.push(w);
                order.push((w, Some(e)));
                queue.push_back(w);
            }
        }
    }

    let tables: Vec<&str> = order
        .iter()
        .map(|&(n, _)| {
            let node = graph.nodes()[n].as_str();
            schema.canonical_table(node).ok_or_else(|| JoinError::UnknownTable(node.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let aliases = assign_aliases(&tables, config);
    let alias_of = |table: &str| -> &str {
        let i = tables.iter().position(|t| ident_eq(t, table)).expect("tree table");
        &aliases[i]
    };

    let base_tables: Vec<ViewTable> = tables
        .iter()
        .zip(&aliases)
        .map(|(t, a)| ViewTable { table: t.to_string(), alias: a.clone() })
        .collect();

    let mut join_conditions = Vec::new();
    for (i, &(_, via)) in order.iter().enumerate().skip(1) {
        let fk = &schema.foreign_keys[graph.edges()[via.expect("non-root has an edge")].fk];
        let child = tables[i];
        let child_is_from = ident_eq(&fk.from_table, child) && !tables[..i].iter().any(|t| ident_eq(t, child));
        let group = fk
            .column_pairs
            .iter()
            .map(|p| {
                let from = QualifiedColumn { alias: alias_of(&fk.from_table).to_string(), column: p.from.clone() };
                let to = QualifiedColumn { alias: alias_of(&fk.to_table).to_string(), column: p.to.clone() };
                if child_is_from {
                    JoinPredicate { left: to, right: from }
                } else {
                    JoinPredicate { left: from, right: to }
                }
            })
            .collect();
        join_conditions.push(group);
    }

    let projected_columns = project_columns(schema, &base_tables, config);
    let name = match name {
        Some(n) => n.to_string(),
        None => default_view_name(schema, &tables, config),
    };
    Ok(ViewDefinition { name, base_tables, join_conditions, projected_columns })
}

fn assign_aliases(tables: &[&str], config: &ViewConfig) -> Vec<String> {
    let mut aliases: Vec<String> = Vec::new();
    for t in tables {
        let first = initial(t);
        let second = initial(&config.display_name(t));
        let pick = [first.clone(), second]
            .into_iter()
            .find(|c| !aliases.contains(c))
            .unwrap_or_else(|| {
                (2..)
                    .map(|i| format!("{first}{i}"))
                    .find(|c| !aliases.contains(c))
                    .expect("unbounded")
            });
        aliases.push(pick);
    }
    aliases
}

fn initial(name: &str) -> String {
    name.chars()
        .find(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_lowercase().to_string())
        .unwrap_or_else(|| "t".to_string())
}

/// Primary-key columns of every table first (in table order), then the
/// remaining columns table by table.
fn project_columns(schema: &RelationalSchema, tables: &[ViewTable], config: &ViewConfig) -> Vec<ViewColumn> {
    let mut picks: Vec<(&ViewTable, &crate::schema::ColumnDef)> = Vec::new();
    for vt in tables {
        let def = schema.table(&vt.table).expect("tree table exists");
        picks.extend(def.columns.iter().filter(|c| c.is_primary_key).map(|c| (vt, c)));
    }
    for vt in tables {
        let def = schema.table(&vt.table).expect("tree table exists");
        picks.extend(def.columns.iter().filter(|c| !c.is_primary_key).map(|c| (vt, c)));
    }
    let mut used: Vec<String> = Vec::new();
    picks
        .into_iter()
        .map(|(vt, col)| {
            let mut out = format!("{}_{}", config.display_name(&vt.table), col.name);
            if used.iter().any(|u| u.eq_ignore_ascii_case(&out)) {
                out = format!("{}_{}", vt.table, col.name);
            }
            let base = out.clone();
            let mut i = 2;
            while used.iter().any(|u| u.eq_ignore_ascii_case(&out)) {
                out = format!("{base}_{i}");
                i += 1;
            }
            used.push(out.clone());
            ViewColumn {
                alias: vt.alias.clone(),
                column: col.name.clone(),
                output_name: out,
                table: vt.table.clone(),
                data_type: Some(col.data_type),
            }
        })
        .collect()
}

fn default_view_name(schema: &RelationalSchema, tables: &[&str], config: &ViewConfig) -> String {
    let mut name: String = tables.iter().map(|t| config.display_name(t)).collect::<Vec<_>>().join("_");
    truncate(&mut name, MAX_VIEW_NAME);
    let clashes = schema.table(&name).is_some() || RESERVED_VIEW_NAMES.iter().any(|r| r.eq_ignore_ascii_case(&name));
    if clashes {
        truncate(&mut name, MAX_VIEW_NAME - "_view".len());
        name.push_str("_view");
    }
    name
}

fn truncate(s: &mut String, max: usize) {
    if s.len() > max {
        let mut cut = max;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
}

/// Replaces every reference to `view` in `query` with the view's defining
/// join block as a derived table, yielding an equivalent query over base tables.
pub fn inline_view(query: &str, view: &ViewDefinition) -> Result<String, JoinError> {
    let stmt = sql::parse(query)?;
    let tables = stmt.tables();
    let others: Vec<String> = tables.iter().filter(|t| !ident_eq(t, &view.name)).cloned().collect();
    if tables.len() == others.len() {
        return Err(JoinError::ViewNotReferenced(view.name.clone()));
    }
    if !others.is_empty() {
        return Err(JoinError::ForeignTables { view: view.name.clone(), others });
    }
    let body = view.select_sql();
    let mut edits = Vec::new();
    collect_view_refs(&stmt, &view.name, &body, &mut edits);
    Ok(sql::splice(query, edits))
}

fn collect_view_refs(stmt: &Statement, view_name: &str, body: &str, edits: &mut Vec<(std::ops::Range<usize>, String)>) {
    for select in &stmt.selects {
        if let Some(from) = &select.from {
            for item in &from.items {
                match &item.source {
                    Source::Table(t) if ident_eq(t, view_name) => {
                        let replacement = match item.alias {
                            Some(_) => format!("({body})"),
                            None => format!("({body}) {view_name}"),
                        };
                        edits.push((item.source_span.clone(), replacement));
                    }
                    Source::Table(_) => {}
                    Source::Derived(inner) => collect_view_refs(inner, view_name, body, edits),
                }
            }
        }
        for sub in &select.subqueries {
            collect_view_refs(sub, view_name, body, edits);
        }
    }
}
