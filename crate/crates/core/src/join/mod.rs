//! Join synthesis: Steiner trees over the referential graph and the single
//! equijoin view built from them.

mod steiner;
mod view;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::sql::SqlError;

pub use steiner::{steiner_tree, SteinerTree};
pub use view::{
    inline_view, synthesize_view, synthesize_view_with, JoinPredicate, QualifiedColumn, ViewColumn, ViewConfig,
    ViewDefinition, ViewTable,
};

#[derive(Debug, Error)]
pub enum JoinError {
    #[error("no terminal tables given")]
    NoTerminals,
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("tables span disconnected components {components:?}; a Steiner forest would be required")]
    Disconnected { components: Vec<BTreeSet<String>> },
    #[error("query does not reference view {0:?}")]
    ViewNotReferenced(String),
    #[error("query references tables other than view {view:?}: {others:?}")]
    ForeignTables { view: String, others: Vec<String> },
    #[error(transparent)]
    Sql(#[from] SqlError),
}
