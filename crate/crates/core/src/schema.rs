//! Relational schema model: tables, columns, foreign keys, the undirected
//! referential graph over them, and simplified DDL rendering.
//!
//! Identifiers compare case-insensitively everywhere; the original casing of
//! the schema document is preserved for rendering.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{ident_eq, normalize};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read schema document: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed schema document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema has no tables")]
    NoTables,
    #[error("table name must not be empty")]
    EmptyTableName,
    #[error("duplicate table {0:?}")]
    DuplicateTable(String),
    #[error("table {0:?} has no columns")]
    NoColumns(String),
    #[error("table {table:?} has a column with an empty name")]
    EmptyColumnName { table: String },
    #[error("duplicate column {column:?} in table {table:?}")]
    DuplicateColumn { table: String, column: String },
    #[error("duplicate synonym {synonym:?} on {owner}")]
    DuplicateSynonym { owner: String, synonym: String },
    #[error("negative selection weight on {0}")]
    NegativeWeight(String),
    #[error("foreign key from {from:?} to {to:?} has no column pairs")]
    EmptyForeignKey { from: String, to: String },
    #[error("foreign key references unknown table {0:?}")]
    UnknownFkTable(String),
    #[error("foreign key references unknown column {table}.{column}")]
    UnknownFkColumn { table: String, column: String },
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("unknown column {table}.{column}")]
    UnknownColumn { table: String, column: String },
    #[error("no columns requested for table {0:?}")]
    EmptyColumnSelection(String),
}

/// The closed set of column types understood by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    String,
    Integer,
    Decimal,
    Date,
    Timestamp,
    Boolean,
}

impl DataType {
    pub const ALL: [DataType; 6] = [
        DataType::String,
        DataType::Integer,
        DataType::Decimal,
        DataType::Date,
        DataType::Timestamp,
        DataType::Boolean,
    ];

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Integer | DataType::Decimal)
    }

    pub fn sql_name(self) -> &'static str {
        match self {
            DataType::String => "VARCHAR",
            DataType::Integer => "INTEGER",
            DataType::Decimal => "DECIMAL",
            DataType::Date => "DATE",
            DataType::Timestamp => "TIMESTAMP",
            DataType::Boolean => "BOOLEAN",
        }
    }
}

fn default_weight() -> f64 {
    1.0
}

fn is_default_weight(w: &f64) -> bool {
    *w == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub data_type: DataType,
    #[serde(rename = "pk", default)]
    pub is_primary_key: bool,
    #[serde(rename = "indexed", default)]
    pub is_indexed_for_values: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synonyms: Vec<String>,
    #[serde(rename = "weight", default = "default_weight", skip_serializing_if = "is_default_weight")]
    pub selection_weight: f64,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, data_type: DataType) -> Self {
        Self {
            name: name.into(),
            data_type,
            is_primary_key: false,
            is_indexed_for_values: false,
            description: None,
            synonyms: Vec::new(),
            selection_weight: 1.0,
        }
    }

    pub fn primary_key(mut self) -> Self {
        self.is_primary_key = true;
        self
    }

    pub fn indexed(mut self) -> Self {
        self.is_indexed_for_values = true;
        self
    }

    pub fn weight(mut self, w: f64) -> Self {
        self.selection_weight = w;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synonyms: Vec<String>,
    #[serde(rename = "weight", default = "default_weight", skip_serializing_if = "is_default_weight")]
    pub selection_weight: f64,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnDef>) -> Self {
        Self {
            name: name.into(),
            description: None,
            synonyms: Vec::new(),
            selection_weight: 1.0,
            columns,
        }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| ident_eq(&c.name, name))
    }

    pub fn primary_key(&self) -> impl Iterator<Item = &ColumnDef> {
        self.columns.iter().filter(|c| c.is_primary_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnPair {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from_table: String,
    pub to_table: String,
    #[serde(rename = "columns")]
    pub column_pairs: Vec<ColumnPair>,
}

impl ForeignKey {
    pub fn new(from_table: &str, to_table: &str, pairs: &[(&str, &str)]) -> Self {
        Self {
            from_table: from_table.to_string(),
            to_table: to_table.to_string(),
            column_pairs: pairs
                .iter()
                .map(|(f, t)| ColumnPair { from: f.to_string(), to: t.to_string() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationalSchema {
    pub tables: Vec<TableDef>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl RelationalSchema {
    /// Builds a schema and checks every invariant.
    pub fn new(tables: Vec<TableDef>, foreign_keys: Vec<ForeignKey>) -> Result<Self, SchemaError> {
        let schema = Self { tables, foreign_keys };
        schema.validate()?;
        Ok(schema.canonicalized())
    }

    pub fn from_json(document: &str) -> Result<Self, SchemaError> {
        let raw: RelationalSchema = serde_json::from_str(document)?;
        raw.validate()?;
        Ok(raw.canonicalized())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| ident_eq(&t.name, name))
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| ident_eq(&t.name, name))
    }

    /// Canonical (declared) spelling of a table name.
    pub fn canonical_table(&self, name: &str) -> Option<&str> {
        self.table(name).map(|t| t.name.as_str())
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&ColumnDef> {
        self.table(table)?.column(column)
    }

    /// Whether `column` of `table` participates in any foreign key.
    pub fn is_fk_column(&self, table: &str, column: &str) -> bool {
        self.foreign_keys.iter().any(|fk| {
            (ident_eq(&fk.from_table, table) && fk.column_pairs.iter().any(|p| ident_eq(&p.from, column)))
                || (ident_eq(&fk.to_table, table) && fk.column_pairs.iter().any(|p| ident_eq(&p.to, column)))
        })
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if self.tables.is_empty() {
            return Err(SchemaError::NoTables);
        }
        let mut seen_tables = HashSet::new();
        for table in &self.tables {
            if table.name.trim().is_empty() {
                return Err(SchemaError::EmptyTableName);
            }
            if !seen_tables.insert(table.name.to_lowercase()) {
                return Err(SchemaError::DuplicateTable(table.name.clone()));
            }
            if table.columns.is_empty() {
                return Err(SchemaError::NoColumns(table.name.clone()));
            }
            if !(table.selection_weight >= 0.0) {
                return Err(SchemaError::NegativeWeight(table.name.clone()));
            }
            check_synonyms(&table.name, &table.synonyms)?;
            let mut seen_columns = HashSet::new();
            for column in &table.columns {
                if column.name.trim().is_empty() {
                    return Err(SchemaError::EmptyColumnName { table: table.name.clone() });
                }
                if !seen_columns.insert(column.name.to_lowercase()) {
                    return Err(SchemaError::DuplicateColumn {
                        table: table.name.clone(),
                        column: column.name.clone(),
                    });
                }
                let owner = format!("{}.{}", table.name, column.name);
                if !(column.selection_weight >= 0.0) {
                    return Err(SchemaError::NegativeWeight(owner));
                }
                check_synonyms(&owner, &column.synonyms)?;
            }
        }
        for fk in &self.foreign_keys {
            let from = self
                .table(&fk.from_table)
                .ok_or_else(|| SchemaError::UnknownFkTable(fk.from_table.clone()))?;
            let to = self
                .table(&fk.to_table)
                .ok_or_else(|| SchemaError::UnknownFkTable(fk.to_table.clone()))?;
            if fk.column_pairs.is_empty() {
                return Err(SchemaError::EmptyForeignKey {
                    from: fk.from_table.clone(),
                    to: fk.to_table.clone(),
                });
            }
            for pair in &fk.column_pairs {
                if from.column(&pair.from).is_none() {
                    return Err(SchemaError::UnknownFkColumn {
                        table: from.name.clone(),
                        column: pair.from.clone(),
                    });
                }
                if to.column(&pair.to).is_none() {
                    return Err(SchemaError::UnknownFkColumn {
                        table: to.name.clone(),
                        column: pair.to.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Rewrites FK references to the declared spelling of each identifier.
    fn canonicalized(mut self) -> Self {
        let fks = std::mem::take(&mut self.foreign_keys);
        self.foreign_keys = fks
            .into_iter()
            .map(|fk| {
                let from = self.table(&fk.from_table).expect("validated");
                let to = self.table(&fk.to_table).expect("validated");
                ForeignKey {
                    from_table: from.name.clone(),
                    to_table: to.name.clone(),
                    column_pairs: fk
                        .column_pairs
                        .iter()
                        .map(|p| ColumnPair {
                            from: from.column(&p.from).expect("validated").name.clone(),
                            to: to.column(&p.to).expect("validated").name.clone(),
                        })
                        .collect(),
                }
            })
            .collect();
        self
    }
}

fn check_synonyms(owner: &str, synonyms: &[String]) -> Result<(), SchemaError> {
    let mut seen = HashSet::new();
    for s in synonyms {
        if !seen.insert(normalize(s)) {
            return Err(SchemaError::DuplicateSynonym { owner: owner.to_string(), synonym: s.clone() });
        }
    }
    Ok(())
}

/// One undirected edge per foreign key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphEdge {
    /// Node index of the lexicographically smaller endpoint name.
    pub a: usize,
    pub b: usize,
    /// Ordinal of the foreign key in `RelationalSchema::foreign_keys`.
    pub fk: usize,
}

impl GraphEdge {
    pub fn other(&self, node: usize) -> usize {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// The referential dependencies graph: tables as nodes, foreign keys as edges.
#[derive(Debug, Clone)]
pub struct ReferentialGraph {
    nodes: Vec<String>,
    edges: Vec<GraphEdge>,
    adjacency: Vec<Vec<usize>>,
}

impl ReferentialGraph {
    pub fn build(schema: &RelationalSchema) -> Self {
        let nodes: Vec<String> = schema.tables.iter().map(|t| t.name.clone()).collect();
        let edges = schema
            .foreign_keys
            .iter()
            .enumerate()
            .map(|(ordinal, fk)| {
                let from = schema.table_index(&fk.from_table).expect("validated fk");
                let to = schema.table_index(&fk.to_table).expect("validated fk");
                let (a, b) = if nodes[from].to_lowercase() <= nodes[to].to_lowercase() {
                    (from, to)
                } else {
                    (to, from)
                };
                GraphEdge { a, b, fk: ordinal }
            })
            .collect();
        Self::from_parts(nodes, edges)
    }

    /// Builds a graph directly from node names and `(a, b)` index pairs; the
    /// pair position is used as the FK ordinal.
    pub fn from_edges(nodes: Vec<String>, pairs: &[(usize, usize)]) -> Self {
        let edges = pairs
            .iter()
            .enumerate()
            .map(|(fk, &(x, y))| {
                let (a, b) = if nodes[x].to_lowercase() <= nodes[y].to_lowercase() { (x, y) } else { (y, x) };
                GraphEdge { a, b, fk }
            })
            .collect();
        Self::from_parts(nodes, edges)
    }

    fn from_parts(nodes: Vec<String>, edges: Vec<GraphEdge>) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.a].push(i);
            if e.b != e.a {
                adjacency[e.b].push(i);
            }
        }
        Self { nodes, edges, adjacency }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, table: &str) -> Option<usize> {
        self.nodes.iter().position(|n| ident_eq(n, table))
    }

    /// Edge indices incident to `node`.
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Ordering key used for deterministic tie-breaking between edges.
    pub fn edge_key(&self, edge: usize) -> (String, String, usize) {
        let e = &self.edges[edge];
        (self.nodes[e.a].to_lowercase(), self.nodes[e.b].to_lowercase(), e.fk)
    }

    pub(crate) fn component_indices(&self, start: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for &e in &self.adjacency[n] {
                let m = self.edges[e].other(n);
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// All tables reachable from `table`.
    pub fn connected_component(&self, table: &str) -> Result<BTreeSet<String>, SchemaError> {
        let start = self
            .node_index(table)
            .ok_or_else(|| SchemaError::UnknownTable(table.to_string()))?;
        Ok(self
            .component_indices(start)
            .into_iter()
            .map(|i| self.nodes[i].clone())
            .collect())
    }
}

/// Renders one `CREATE TABLE` statement per requested table, restricted to the
/// requested columns. Tables and columns follow schema declaration order.
pub fn render_ddl(
    schema: &RelationalSchema,
    columns: &BTreeMap<String, BTreeSet<String>>,
) -> Result<String, SchemaError> {
    for (table, cols) in columns {
        let def = schema
            .table(table)
            .ok_or_else(|| SchemaError::UnknownTable(table.clone()))?;
        if cols.is_empty() {
            return Err(SchemaError::EmptyColumnSelection(def.name.clone()));
        }
        for c in cols {
            if def.column(c).is_none() {
                return Err(SchemaError::UnknownColumn { table: def.name.clone(), column: c.clone() });
            }
        }
    }
    let mut out = String::new();
    for table in &schema.tables {
        let Some(cols) = columns.iter().find(|(t, _)| ident_eq(t, &table.name)).map(|(_, c)| c) else {
            continue;
        };
        let rendered: Vec<String> = table
            .columns
            .iter()
            .filter(|c| cols.iter().any(|r| ident_eq(r, &c.name)))
            .map(|c| {
                let mut s = format!("{} {}", c.name, c.data_type.sql_name());
                if c.is_primary_key {
                    s.push_str(" PRIMARY KEY");
                }
                s
            })
            .collect();
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = write!(out, "CREATE TABLE {} ({});", table.name, rendered.join(", "));
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn maintenance_schema() -> RelationalSchema {
        let installation = TableDef::new(
            "Installation",
            vec![ColumnDef::new("name", DataType::String).primary_key().indexed(), ColumnDef::new("type", DataType::String)],
        );
        let order = TableDef::new(
            "Maintenance_order",
            vec![
                ColumnDef::new("id", DataType::Integer).primary_key(),
                ColumnDef::new("installation_name", DataType::String),
                ColumnDef::new("status", DataType::String),
            ],
        );
        let request = TableDef::new(
            "Maintenance_request",
            vec![ColumnDef::new("id", DataType::Integer).primary_key(), ColumnDef::new("description", DataType::String)],
        );
        let recommendation = TableDef::new(
            "Maintenance_recommendation",
            vec![
                ColumnDef::new("id", DataType::Integer).primary_key(),
                ColumnDef::new("situation", DataType::String),
                ColumnDef::new("installation_name", DataType::String),
                ColumnDef::new("note_id", DataType::Integer),
                ColumnDef::new("order_id", DataType::Integer),
            ],
        );
        RelationalSchema::new(
            vec![installation, order, request, recommendation],
            vec![
                ForeignKey::new("Maintenance_order", "Installation", &[("installation_name", "name")]),
                ForeignKey::new("Maintenance_recommendation", "Installation", &[("installation_name", "name")]),
                ForeignKey::new("Maintenance_recommendation", "Maintenance_request", &[("note_id", "id")]),
                ForeignKey::new("Maintenance_recommendation", "Maintenance_order", &[("order_id", "id")]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn dangling_fk_names_the_missing_table() {
        let doc = r#"{"tables":[{"name":"Orders","columns":[{"name":"id","type":"integer","pk":true}]}],
            "foreign_keys":[{"from_table":"Orders","to_table":"Orderz","columns":[{"from":"id","to":"id"}]}]}"#;
        let err = RelationalSchema::from_json(doc).unwrap_err();
        assert!(matches!(err, SchemaError::UnknownFkTable(ref t) if t == "Orderz"));
        assert!(err.to_string().contains("Orderz"));
    }

    #[test]
    fn empty_tables_rejected() {
        let err = RelationalSchema::from_json(r#"{"tables":[],"foreign_keys":[]}"#).unwrap_err();
        assert_eq!(err.to_string(), "schema has no tables");
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        assert!(matches!(RelationalSchema::from_json("{\"tables\": ["), Err(SchemaError::Parse(_))));
    }

    #[test]
    fn duplicate_table_case_insensitive() {
        let doc = r#"{"tables":[{"name":"A","columns":[{"name":"x","type":"string"}]},
                                {"name":"a","columns":[{"name":"y","type":"string"}]}]}"#;
        assert!(matches!(RelationalSchema::from_json(doc), Err(SchemaError::DuplicateTable(_))));
    }

    #[test]
    fn duplicate_column_and_synonym() {
        let doc = r#"{"tables":[{"name":"A","columns":[{"name":"x","type":"string"},{"name":"X","type":"string"}]}]}"#;
        assert!(matches!(RelationalSchema::from_json(doc), Err(SchemaError::DuplicateColumn { .. })));
        let doc = r#"{"tables":[{"name":"A","synonyms":["Work Order","work-order"],"columns":[{"name":"x","type":"string"}]}]}"#;
        assert!(matches!(RelationalSchema::from_json(doc), Err(SchemaError::DuplicateSynonym { .. })));
    }

    #[test]
    fn weight_defaults_to_one() {
        let doc = r#"{"tables":[{"name":"A","columns":[{"name":"x","type":"date"}]}]}"#;
        let s = RelationalSchema::from_json(doc).unwrap();
        assert_eq!(s.tables[0].selection_weight, 1.0);
        assert_eq!(s.tables[0].columns[0].selection_weight, 1.0);
    }

    #[test]
    fn fk_references_are_canonicalized() {
        let doc = r#"{"tables":[{"name":"Parent","columns":[{"name":"Id","type":"integer","pk":true}]},
                                {"name":"Child","columns":[{"name":"parent_id","type":"integer"}]}],
                      "foreign_keys":[{"from_table":"child","to_table":"PARENT","columns":[{"from":"PARENT_ID","to":"id"}]}]}"#;
        let s = RelationalSchema::from_json(doc).unwrap();
        assert_eq!(s.foreign_keys[0], ForeignKey::new("Child", "Parent", &[("parent_id", "Id")]));
    }

    #[test]
    fn fixture_graph_counts() {
        let s = maintenance_schema();
        let g = ReferentialGraph::build(&s);
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edges().len(), 4);
        let comp = g.connected_component("maintenance_request").unwrap();
        assert_eq!(comp.len(), 4);
        assert!(g.connected_component("Nope").is_err());
    }

    #[test]
    fn single_table_graph_and_parallel_edges() {
        let s = RelationalSchema::new(vec![TableDef::new("A", vec![ColumnDef::new("x", DataType::Integer)])], vec![]).unwrap();
        let g = ReferentialGraph::build(&s);
        assert_eq!((g.node_count(), g.edges().len()), (1, 0));
        assert_eq!(g.connected_component("A").unwrap(), BTreeSet::from(["A".to_string()]));

        let s = RelationalSchema::new(
            vec![
                TableDef::new("Person", vec![ColumnDef::new("id", DataType::Integer).primary_key()]),
                TableDef::new(
                    "Transfer",
                    vec![ColumnDef::new("sender", DataType::Integer), ColumnDef::new("receiver", DataType::Integer)],
                ),
            ],
            vec![
                ForeignKey::new("Transfer", "Person", &[("sender", "id")]),
                ForeignKey::new("Transfer", "Person", &[("receiver", "id")]),
            ],
        )
        .unwrap();
        let g = ReferentialGraph::build(&s);
        assert_eq!(g.edges().len(), 2);
        assert_ne!(g.edges()[0].fk, g.edges()[1].fk);
        assert_eq!(g.incident(0).len(), 2);
    }

    #[test]
    fn two_components() {
        let nodes: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let g = ReferentialGraph::from_edges(nodes, &[(0, 1), (2, 3), (3, 4)]);
        let first = g.connected_component("a").unwrap();
        assert_eq!(first, BTreeSet::from(["a".to_string(), "b".to_string()]));
        assert_eq!(g.connected_component("e").unwrap().len(), 3);
    }

    #[test]
    fn ddl_renders_requested_columns_in_schema_order() {
        let s = maintenance_schema();
        let mut cols = BTreeMap::new();
        cols.insert("Installation".to_string(), BTreeSet::from(["type".to_string(), "name".to_string()]));
        let ddl = render_ddl(&s, &cols).unwrap();
        assert_eq!(ddl, "CREATE TABLE Installation (name VARCHAR PRIMARY KEY, type VARCHAR);");

        cols.insert("Maintenance_order".to_string(), BTreeSet::from(["status".to_string()]));
        let ddl = render_ddl(&s, &cols).unwrap();
        let lines: Vec<&str> = ddl.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("CREATE TABLE Installation"));
        assert!(lines[1].starts_with("CREATE TABLE Maintenance_order (status VARCHAR)"));
        assert_eq!(ddl, render_ddl(&s, &cols).unwrap());
    }

    #[test]
    fn ddl_errors() {
        let s = maintenance_schema();
        let mut cols = BTreeMap::new();
        cols.insert("Installation".to_string(), BTreeSet::new());
        assert!(matches!(render_ddl(&s, &cols), Err(SchemaError::EmptyColumnSelection(_))));
        cols.insert("Installation".to_string(), BTreeSet::from(["bogus".to_string()]));
        assert!(matches!(render_ddl(&s, &cols), Err(SchemaError::UnknownColumn { .. })));
        let mut cols = BTreeMap::new();
        cols.insert("Nope".to_string(), BTreeSet::from(["x".to_string()]));
        assert!(matches!(render_ddl(&s, &cols), Err(SchemaError::UnknownTable(_))));
    }

    fn arb_schema() -> impl Strategy<Value = RelationalSchema> {
        (1usize..6, proptest::collection::vec((0usize..6, 0usize..6), 0..8)).prop_map(|(n, fks)| {
            let tables = (0..n)
                .map(|i| {
                    TableDef::new(
                        format!("T{i}"),
                        vec![ColumnDef::new("id", DataType::Integer).primary_key(), ColumnDef::new("ref", DataType::Integer)],
                    )
                })
                .collect();
            let fks = fks
                .into_iter()
                .map(|(a, b)| ForeignKey::new(&format!("T{}", a % n), &format!("T{}", b % n), &[("ref", "id")]))
                .collect();
            RelationalSchema::new(tables, fks).unwrap()
        })
    }

    proptest! {
        #[test]
        fn json_round_trip(s in arb_schema()) {
            let back = RelationalSchema::from_json(&s.to_json()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn edges_biject_foreign_keys(s in arb_schema()) {
            let g = ReferentialGraph::build(&s);
            prop_assert_eq!(g.edges().len(), s.foreign_keys.len());
            prop_assert_eq!(g.node_count(), s.tables.len());
        }

        #[test]
        fn components_partition_nodes(s in arb_schema()) {
            let g = ReferentialGraph::build(&s);
            for a in g.nodes() {
                for b in g.nodes() {
                    let ca = g.connected_component(a).unwrap();
                    let cb = g.connected_component(b).unwrap();
                    prop_assert!(ca == cb || ca.is_disjoint(&cb));
                }
            }
        }
    }
}
