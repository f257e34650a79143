pub mod eval;
pub mod exec;
pub mod join;
pub mod keyword;
pub mod llm;
pub mod pipeline;
pub mod schema;
pub mod sql;
pub mod store;
pub mod synth;
pub mod text;
