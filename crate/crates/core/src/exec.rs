//! Query execution against an embedded SQLite database.

use std::path::Path;
use std::sync::Mutex;

use rusqlite::types::ValueRef;
use rusqlite::Connection;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConnectionError {
    #[error("cannot open database {target}: {message}")]
    Open { target: String, message: String },
    #[error("cannot load script {path}: {message}")]
    Script { path: String, message: String },
    #[error("unsupported connection string {0:?}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Value>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == columns.len()));
        Self { columns, rows }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Compact text rendering for prompts.
    pub fn to_text(&self) -> String {
        let mut out = self.columns.join(" | ");
        for row in &self.rows {
            out.push('\n');
            out.push_str(&row.iter().map(Value::to_string).collect::<Vec<_>>().join(" | "));
        }
        out
    }
}

/// Result of running one statement: rows, or the engine's error message.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ExecOutcome {
    Rows(ResultTable),
    Failed { message: String },
}

impl ExecOutcome {
    pub fn rows(&self) -> Option<&ResultTable> {
        match self {
            ExecOutcome::Rows(t) => Some(t),
            ExecOutcome::Failed { .. } => None,
        }
    }
}

pub trait ExecutionBackend: Send + Sync {
    /// Query failures come back as [`ExecOutcome::Failed`]; `Err` is reserved
    /// for a broken connection.
    fn execute(&self, sql: &str) -> Result<ExecOutcome, ConnectionError>;
}

/// One connection behind a mutex, so concurrent callers are serialized.
pub struct SqliteBackend {
    conn: Mutex<Connection>,
    target: String,
}

impl std::fmt::Debug for SqliteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SqliteBackend").field("target", &self.target).finish()
    }
}

impl SqliteBackend {
    /// Accepts `sqlite::memory:`, `sqlite:<file.db>`, or a `.sql` script path
    /// (optionally `sqlite:`-prefixed) loaded into a fresh in-memory database.
    pub fn connect(connection: &str) -> Result<Self, ConnectionError> {
        let target = connection.strip_prefix("sqlite:").unwrap_or(connection);
        if target == ":memory:" {
            return Self::in_memory();
        }
        if target.ends_with(".sql") {
            let script = std::fs::read_to_string(target)
                .map_err(|e| ConnectionError::Script { path: target.to_string(), message: e.to_string() })?;
            let backend = Self::in_memory()?;
            backend.run_script(&script).map_err(|message| ConnectionError::Script { path: target.to_string(), message })?;
            return Ok(backend);
        }
        if !connection.starts_with("sqlite:") && connection.contains("://") {
            return Err(ConnectionError::Unsupported(connection.to_string()));
        }
        if !Path::new(target).exists() {
            return Err(ConnectionError::Open { target: target.to_string(), message: "file not found".into() });
        }
        let conn = Connection::open(target)
            .map_err(|e| ConnectionError::Open { target: target.to_string(), message: e.to_string() })?;
        Ok(Self { conn: Mutex::new(conn), target: target.to_string() })
    }

    pub fn in_memory() -> Result<Self, ConnectionError> {
        let conn = Connection::open_in_memory()
            .map_err(|e| ConnectionError::Open { target: ":memory:".into(), message: e.to_string() })?;
        Ok(Self { conn: Mutex::new(conn), target: ":memory:".into() })
    }

    pub fn from_script(script: &str) -> Result<Self, ConnectionError> {
        let backend = Self::in_memory()?;
        backend
            .run_script(script)
            .map_err(|message| ConnectionError::Script { path: "<inline>".into(), message })?;
        Ok(backend)
    }

    /// Runs DDL/DML statements; used for seeding.
    pub fn run_script(&self, script: &str) -> Result<(), String> {
        self.conn.lock().expect("connection lock").execute_batch(script).map_err(|e| e.to_string())
    }
}

impl ExecutionBackend for SqliteBackend {
    fn execute(&self, sql: &str) -> Result<ExecOutcome, ConnectionError> {
        let conn = self.conn.lock().expect("connection lock");
        let mut stmt = match conn.prepare(sql) {
            Ok(s) => s,
            Err(e) => return Ok(ExecOutcome::Failed { message: e.to_string() }),
        };
        if !stmt.readonly() {
            return Ok(ExecOutcome::Failed { message: "only read-only statements are executed".into() });
        }
        let columns: Vec<String> = stmt.column_names().into_iter().map(str::to_string).collect();
        let width = columns.len();
        let mut rows = Vec::new();
        let mut cursor = match stmt.query([]) {
            Ok(c) => c,
            Err(e) => return Ok(ExecOutcome::Failed { message: e.to_string() }),
        };
        loop {
            match cursor.next() {
                Ok(Some(row)) => {
                    let mut values = Vec::with_capacity(width);
                    for i in 0..width {
                        let v = match row.get_ref(i) {
                            Ok(ValueRef::Null) => Value::Null,
                            Ok(ValueRef::Integer(n)) => Value::Integer(n),
                            Ok(ValueRef::Real(r)) => Value::Real(r),
                            Ok(ValueRef::Text(t)) => Value::Text(String::from_utf8_lossy(t).into_owned()),
                            Ok(ValueRef::Blob(b)) => Value::Text(hex::encode(b)),
                            Err(e) => return Ok(ExecOutcome::Failed { message: e.to_string() }),
                        };
                        values.push(v);
                    }
                    rows.push(values);
                }
                Ok(None) => break,
                Err(e) => return Ok(ExecOutcome::Failed { message: e.to_string() }),
            }
        }
        Ok(ExecOutcome::Rows(ResultTable::new(columns, rows)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db() -> SqliteBackend {
        SqliteBackend::from_script(
            "CREATE TABLE t (id INTEGER PRIMARY KEY, name VARCHAR, amount DECIMAL);
             INSERT INTO t VALUES (1, 'a', 1.5), (2, 'b', NULL);",
        )
        .unwrap()
    }

    #[test]
    fn select_one() {
        let out = db().execute("SELECT 1").unwrap();
        let t = out.rows().unwrap();
        assert_eq!((t.width(), t.rows.len()), (1, 1));
        assert_eq!(t.rows[0][0], Value::Integer(1));
    }

    #[test]
    fn typed_values() {
        let out = db().execute("SELECT id, name, amount FROM t ORDER BY id").unwrap();
        let t = out.rows().unwrap();
        assert_eq!(t.columns, ["id", "name", "amount"]);
        assert_eq!(t.rows[0], vec![Value::Integer(1), Value::Text("a".into()), Value::Real(1.5)]);
        assert_eq!(t.rows[1][2], Value::Null);
    }

    #[test]
    fn failures_are_verdicts() {
        match db().execute("SELEC oops").unwrap() {
            ExecOutcome::Failed { message } => assert!(message.contains("syntax"), "{message}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(db().execute("DELETE FROM t").unwrap(), ExecOutcome::Failed { .. }));
        assert!(matches!(db().execute("SELECT * FROM missing").unwrap(), ExecOutcome::Failed { .. }));
    }

    #[test]
    fn connection_strings() {
        assert!(SqliteBackend::connect("sqlite::memory:").is_ok());
        assert!(matches!(SqliteBackend::connect("sqlite:/nonexistent/x.db"), Err(ConnectionError::Open { .. })));
        assert!(matches!(SqliteBackend::connect("postgres://h/db"), Err(ConnectionError::Unsupported(_))));
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("seed.sql");
        std::fs::write(&script, "CREATE TABLE x (a INTEGER); INSERT INTO x VALUES (3);").unwrap();
        let b = SqliteBackend::connect(script.to_str().unwrap()).unwrap();
        assert_eq!(b.execute("SELECT a FROM x").unwrap().rows().unwrap().rows[0][0], Value::Integer(3));
        std::fs::write(&script, "CREATE TABLE").unwrap();
        assert!(matches!(SqliteBackend::connect(script.to_str().unwrap()), Err(ConnectionError::Script { .. })));
    }
}
