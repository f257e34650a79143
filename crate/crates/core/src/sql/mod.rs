//! Shallow SQL analyzer for the supported query subset.
//!
//! The analyzer tokenizes a statement and tracks clause boundaries, table
//! references, aliases, column references, aggregates and nested sub-queries.
//! It does not build a full expression grammar. Every node keeps byte spans
//! into the source text so rewrites can splice replacements while leaving
//! the rest of the statement verbatim.
//!
//! Supported: a single `SELECT` (optionally compounded with set operators,
//! which are analyzed but not otherwise interpreted) with `WHERE`,
//! `GROUP BY`, `HAVING`, `ORDER BY`, `LIMIT`/`OFFSET`/`FETCH`, comma and
//! `[INNER|LEFT|RIGHT|FULL|CROSS] JOIN ... ON` joins, derived tables, scalar
//! and `IN`/`EXISTS` sub-queries, and function calls. CTEs and window
//! functions are rejected.

mod lexer;

use std::collections::BTreeSet;
use std::ops::Range;

use thiserror::Error;

pub use lexer::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SqlError {
    #[error("lexical error at byte {pos}: {message}")]
    Lex { pos: usize, message: String },
    #[error("unexpected {found} at byte {pos}, expected {expected}")]
    Unexpected { pos: usize, found: String, expected: String },
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("empty statement")]
    Empty,
}

const AGGREGATES: &[&str] = &["COUNT", "SUM", "AVG", "MIN", "MAX"];

/// Words that terminate a clause at nesting depth zero.
const CLAUSE_WORDS: &[&str] = &[
    "FROM", "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT", "OFFSET", "FETCH", "UNION", "INTERSECT", "EXCEPT",
    "WINDOW",
];

const JOIN_WORDS: &[&str] = &["JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "OUTER"];

/// Reserved words never read as column references or implicit aliases.
const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "LIMIT", "OFFSET", "FETCH", "FIRST", "NEXT",
    "ROWS", "ROW", "ONLY", "JOIN", "INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL", "ON", "USING",
    "AS", "AND", "OR", "NOT", "IN", "IS", "NULL", "LIKE", "ILIKE", "GLOB", "BETWEEN", "CASE", "WHEN", "THEN",
    "ELSE", "END", "DISTINCT", "ALL", "ANY", "SOME", "ASC", "DESC", "UNION", "INTERSECT", "EXCEPT", "EXISTS",
    "TRUE", "FALSE", "CAST", "DATE", "TIMESTAMP", "INTERVAL", "WITH", "ESCAPE", "NULLS", "OVER", "WINDOW",
    "PERCENT", "TIES",
];

fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

fn in_list(tok: &Token, list: &[&str]) -> bool {
    tok.kind == TokenKind::Word && list.iter().any(|w| tok.text.eq_ignore_ascii_case(w))
}

/// A statement: one or more `SELECT`s joined by set operators.
#[derive(Debug, Clone)]
pub struct Statement {
    pub selects: Vec<Select>,
    pub set_operators: usize,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Select {
    pub span: Range<usize>,
    pub items: Vec<SelectItem>,
    pub from: Option<FromClause>,
    pub has_where: bool,
    pub group_by: bool,
    pub having: bool,
    pub order_by: bool,
    pub limit: bool,
    pub aggregates: usize,
    /// Column references of this scope, excluding nested statements.
    pub column_refs: Vec<ColumnRef>,
    /// Sub-queries nested in expressions (not derived tables).
    pub subqueries: Vec<Statement>,
}

#[derive(Debug, Clone)]
pub struct SelectItem {
    pub span: Range<usize>,
    pub alias: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FromClause {
    pub span: Range<usize>,
    pub items: Vec<FromItem>,
}

#[derive(Debug, Clone)]
pub struct FromItem {
    pub source: Source,
    /// Span of the table name token(s) or of the parenthesized derived table.
    pub source_span: Range<usize>,
    pub alias: Option<String>,
    /// Column references inside this item's `ON` condition.
    pub on_refs: Vec<ColumnRef>,
}

impl FromItem {
    /// Name the item is referred to by inside its scope.
    pub fn exposed_name(&self) -> Option<&str> {
        self.alias.as_deref().or(match &self.source {
            Source::Table(t) => Some(t.as_str()),
            Source::Derived(_) => None,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    Table(String),
    Derived(Box<Statement>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub column: String,
    pub span: Range<usize>,
}

impl Statement {
    /// Table names in FROM/JOIN clauses at any depth, in first-seen order,
    /// deduplicated case-insensitively. Aliases are not included.
    pub fn tables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.collect_tables(&mut out);
        out
    }

    fn collect_tables(&self, out: &mut Vec<String>) {
        for select in &self.selects {
            if let Some(from) = &select.from {
                for item in &from.items {
                    match &item.source {
                        Source::Table(t) => {
                            if !out.iter().any(|o| o.eq_ignore_ascii_case(t)) {
                                out.push(t.clone());
                            }
                        }
                        Source::Derived(inner) => inner.collect_tables(out),
                    }
                }
            }
            for sub in &select.subqueries {
                sub.collect_tables(out);
            }
        }
    }

    /// Visits every `SELECT` scope, outermost first.
    pub fn for_each_select<'a>(&'a self, f: &mut dyn FnMut(&'a Select)) {
        for select in &self.selects {
            f(select);
            if let Some(from) = &select.from {
                for item in &from.items {
                    if let Source::Derived(inner) = &item.source {
                        inner.for_each_select(f);
                    }
                }
            }
            for sub in &select.subqueries {
                sub.for_each_select(f);
            }
        }
    }

    /// Number of nested statements (derived tables plus expression sub-queries).
    pub fn nested_count(&self) -> usize {
        let mut n = 0;
        for select in &self.selects {
            if let Some(from) = &select.from {
                for item in &from.items {
                    if let Source::Derived(inner) = &item.source {
                        n += 1 + inner.nested_count();
                    }
                }
            }
            for sub in &select.subqueries {
                n += 1 + sub.nested_count();
            }
        }
        n
    }

    pub fn total_set_operators(&self) -> usize {
        let mut n = self.set_operators;
        let mut add = |s: &Statement| n += s.total_set_operators();
        for select in &self.selects {
            if let Some(from) = &select.from {
                for item in &from.items {
                    if let Source::Derived(inner) = &item.source {
                        add(inner);
                    }
                }
            }
            for sub in &select.subqueries {
                add(sub);
            }
        }
        n
    }

    /// Whether the outermost query orders its result.
    pub fn top_level_order_by(&self) -> bool {
        self.selects.last().is_some_and(|s| s.order_by)
    }
}

/// Parses a single statement of the supported subset.
pub fn parse(sql: &str) -> Result<Statement, SqlError> {
    let tokens = tokenize(sql)?;
    let mut p = Parser { tokens: &tokens, pos: 0, src_len: sql.len() };
    if p.tokens.is_empty() || p.tokens.iter().all(|t| t.kind == TokenKind::Semicolon) {
        return Err(SqlError::Empty);
    }
    if p.peek().is_some_and(|t| t.is_word("WITH")) {
        return Err(SqlError::Unsupported("common table expressions (WITH)".into()));
    }
    let stmt = p.statement()?;
    while p.peek().is_some_and(|t| t.kind == TokenKind::Semicolon) {
        p.pos += 1;
    }
    if let Some(t) = p.peek() {
        return Err(SqlError::Unexpected { pos: t.span.start, found: describe(t), expected: "end of statement".into() });
    }
    Ok(stmt)
}

/// Convenience: the FROM/JOIN table set of a statement.
pub fn from_tables(sql: &str) -> Result<BTreeSet<String>, SqlError> {
    Ok(parse(sql)?.tables().into_iter().collect())
}

/// Applies non-overlapping `(span, replacement)` edits to `src`.
pub fn splice(src: &str, mut edits: Vec<(Range<usize>, String)>) -> String {
    edits.sort_by_key(|e| std::cmp::Reverse(e.0.start));
    let mut out = src.to_string();
    let mut last_start = usize::MAX;
    for (span, text) in edits {
        if span.end > last_start {
            continue;
        }
        out.replace_range(span.clone(), &text);
        last_start = span.start;
    }
    out
}

fn describe(t: &Token) -> String {
    format!("{:?}", t.text)
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    src_len: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&'t Token> {
        self.tokens.get(self.pos + offset)
    }

    fn next(&mut self) -> Option<&'t Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|t| t.span.start).unwrap_or(self.src_len)
    }

    fn prev_end(&self) -> usize {
        self.tokens[self.pos - 1].span.end
    }

    fn unexpected<T>(&self, expected: &str) -> Result<T, SqlError> {
        match self.peek() {
            Some(t) => Err(SqlError::Unexpected { pos: t.span.start, found: describe(t), expected: expected.into() }),
            None => Err(SqlError::Unexpected { pos: self.src_len, found: "end of input".into(), expected: expected.into() }),
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<(), SqlError> {
        if self.peek().is_some_and(|t| t.is_word(word)) {
            self.pos += 1;
            Ok(())
        } else {
            self.unexpected(word)
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if self.peek().is_some_and(|t| t.is_word(word)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn statement(&mut self) -> Result<Statement, SqlError> {
        let start = self.here();
        let mut selects = vec![self.select()?];
        let mut set_operators = 0;
        while self.peek().is_some_and(|t| in_list(t, &["UNION", "INTERSECT", "EXCEPT"])) {
            self.pos += 1;
            let _ = self.eat_word("ALL") || self.eat_word("DISTINCT");
            set_operators += 1;
            selects.push(self.select()?);
        }
        Ok(Statement { selects, set_operators, span: start..self.prev_end() })
    }

    fn select(&mut self) -> Result<Select, SqlError> {
        let start = self.here();
        self.expect_word("SELECT")?;
        let _ = self.eat_word("DISTINCT") || self.eat_word("ALL");
        let mut scope = Select::default();

        loop {
            let item_start = self.pos;
            let before = scope.column_refs.len();
            self.expression(&mut scope, &|t| t.kind == TokenKind::Comma || in_list(t, CLAUSE_WORDS))?;
            if self.pos == item_start {
                return self.unexpected("select item");
            }
            let item_tokens = &self.tokens[item_start..self.pos];
            let alias = implicit_or_explicit_alias(item_tokens);
            if let Some((alias, alias_span)) = &alias {
                // an implicit alias was recorded as a column reference
                if let Some(i) = scope.column_refs[before..].iter().position(|r| &r.span == alias_span) {
                    scope.column_refs.remove(before + i);
                }
                let _ = alias;
            }
            scope.items.push(SelectItem {
                span: item_tokens[0].span.start..item_tokens[item_tokens.len() - 1].span.end,
                alias: alias.map(|(a, _)| a),
            });
            if self.peek().is_some_and(|t| t.kind == TokenKind::Comma) {
                self.pos += 1;
            } else {
                break;
            }
        }

        if self.eat_word("FROM") {
            scope.from = Some(self.from_clause(&mut scope)?);
        }
        let clause_end = |t: &Token| in_list(t, CLAUSE_WORDS);
        if self.eat_word("WHERE") {
            scope.has_where = true;
            self.expression(&mut scope, &clause_end)?;
        }
        if self.eat_word("GROUP") {
            self.expect_word("BY")?;
            scope.group_by = true;
            self.expression(&mut scope, &clause_end)?;
        }
        if self.eat_word("HAVING") {
            scope.having = true;
            self.expression(&mut scope, &clause_end)?;
        }
        if self.eat_word("ORDER") {
            self.expect_word("BY")?;
            scope.order_by = true;
            self.expression(&mut scope, &clause_end)?;
        }
        loop {
            if self.eat_word("LIMIT") || self.eat_word("FETCH") {
                scope.limit = true;
                self.expression(&mut scope, &clause_end)?;
            } else if self.eat_word("OFFSET") {
                self.expression(&mut scope, &clause_end)?;
            } else {
                break;
            }
        }
        // select aliases are not column references wherever they're reused
        let aliases: Vec<String> = scope.items.iter().filter_map(|i| i.alias.clone()).collect();
        scope
            .column_refs
            .retain(|r| r.qualifier.is_some() || !aliases.iter().any(|a| a.eq_ignore_ascii_case(&r.column)));
        scope.span = start..self.prev_end();
        Ok(scope)
    }

    fn from_clause(&mut self, scope: &mut Select) -> Result<FromClause, SqlError> {
        let start = self.here();
        let mut items = vec![self.from_item()?];
        loop {
            let Some(t) = self.peek() else { break };
            if t.kind == TokenKind::Comma {
                self.pos += 1;
                items.push(self.from_item()?);
                continue;
            }
            if in_list(t, JOIN_WORDS) {
                while self.peek().is_some_and(|t| in_list(t, &["INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "OUTER"])) {
                    self.pos += 1;
                }
                self.expect_word("JOIN")?;
                let mut item = self.from_item()?;
                if self.eat_word("ON") {
                    let mut on_scope = Select::default();
                    self.expression(&mut on_scope, &|t| {
                        t.kind == TokenKind::Comma || in_list(t, CLAUSE_WORDS) || in_list(t, JOIN_WORDS)
                    })?;
                    item.on_refs = on_scope.column_refs;
                    scope.aggregates += on_scope.aggregates;
                    scope.subqueries.extend(on_scope.subqueries);
                } else if self.eat_word("USING") {
                    let mut using_scope = Select::default();
                    self.expression(&mut using_scope, &|t| {
                        t.kind == TokenKind::Comma || in_list(t, CLAUSE_WORDS) || in_list(t, JOIN_WORDS)
                    })?;
                    item.on_refs = using_scope.column_refs;
                }
                items.push(item);
                continue;
            }
            break;
        }
        Ok(FromClause { span: start..self.prev_end(), items })
    }

    fn from_item(&mut self) -> Result<FromItem, SqlError> {
        let Some(t) = self.peek() else { return self.unexpected("table reference") };
        let start = t.span.start;
        let source = if t.kind == TokenKind::LParen {
            if !self.peek_at(1).is_some_and(|n| n.is_word("SELECT")) {
                return Err(SqlError::Unsupported("parenthesized join groups".into()));
            }
            self.pos += 1;
            let inner = self.statement()?;
            if !self.peek().is_some_and(|t| t.kind == TokenKind::RParen) {
                return self.unexpected("')'");
            }
            self.pos += 1;
            Source::Derived(Box::new(inner))
        } else if t.is_identifier_like() && !(t.kind == TokenKind::Word && t.is_word("SELECT")) {
            self.pos += 1;
            let mut name = t.text.clone();
            // schema-qualified names keep only the table part
            while self.peek().is_some_and(|d| d.kind == TokenKind::Dot)
                && self.peek_at(1).is_some_and(Token::is_identifier_like)
            {
                self.pos += 1;
                name = self.next().expect("peeked").text.clone();
            }
            Source::Table(name)
        } else {
            return self.unexpected("table reference");
        };
        let source_span = start..self.prev_end();
        let alias = if self.eat_word("AS") {
            match self.next() {
                Some(a) if a.is_identifier_like() => Some(a.text.clone()),
                _ => {
                    self.pos -= 1;
                    return self.unexpected("alias");
                }
            }
        } else {
            match self.peek() {
                Some(a) if a.kind == TokenKind::QuotedIdent => {
                    self.pos += 1;
                    Some(a.text.clone())
                }
                Some(a) if a.kind == TokenKind::Word && !is_reserved(&a.text) && !in_list(a, JOIN_WORDS) => {
                    self.pos += 1;
                    Some(a.text.clone())
                }
                _ => None,
            }
        };
        Ok(FromItem { source, source_span, alias, on_refs: Vec::new() })
    }

    /// Consumes an expression up to a stop token at depth zero (or an
    /// unbalanced `)` / `;` / end of input), recording column references,
    /// aggregates and sub-queries into `scope`.
    fn expression(&mut self, scope: &mut Select, stop: &dyn Fn(&Token) -> bool) -> Result<(), SqlError> {
        let mut depth = 0usize;
        let mut after_as = false;
        while let Some(t) = self.peek() {
            if depth == 0 && (stop(t) || t.kind == TokenKind::RParen || t.kind == TokenKind::Semicolon) {
                break;
            }
            match t.kind {
                TokenKind::LParen => {
                    if self.peek_at(1).is_some_and(|n| n.is_word("SELECT")) {
                        self.pos += 1;
                        let inner = self.statement()?;
                        if !self.peek().is_some_and(|t| t.kind == TokenKind::RParen) {
                            return self.unexpected("')'");
                        }
                        self.pos += 1;
                        scope.subqueries.push(inner);
                    } else {
                        depth += 1;
                        self.pos += 1;
                    }
                    after_as = false;
                }
                TokenKind::RParen => {
                    depth -= 1;
                    self.pos += 1;
                }
                TokenKind::Word | TokenKind::QuotedIdent => {
                    self.pos += 1;
                    let is_word = t.kind == TokenKind::Word;
                    if is_word && t.is_word("AS") {
                        after_as = true;
                        continue;
                    }
                    if after_as {
                        after_as = false;
                        continue;
                    }
                    if is_word && t.is_word("OVER") {
                        return Err(SqlError::Unsupported("window functions (OVER)".into()));
                    }
                    let next = self.peek();
                    if next.is_some_and(|n| n.kind == TokenKind::LParen) && is_word {
                        if in_list(t, AGGREGATES) {
                            scope.aggregates += 1;
                        }
                        continue;
                    }
                    if next.is_some_and(|n| n.kind == TokenKind::Dot) {
                        match self.peek_at(1) {
                            Some(col) if col.is_identifier_like() => {
                                self.pos += 2;
                                scope.column_refs.push(ColumnRef {
                                    qualifier: Some(t.text.clone()),
                                    column: col.text.clone(),
                                    span: t.span.start..col.span.end,
                                });
                            }
                            Some(star) if star.kind == TokenKind::Star => {
                                self.pos += 2;
                            }
                            _ => return self.unexpected("column name after '.'"),
                        }
                        continue;
                    }
                    if is_word && is_reserved(&t.text) {
                        continue;
                    }
                    scope.column_refs.push(ColumnRef { qualifier: None, column: t.text.clone(), span: t.span.clone() });
                }
                _ => {
                    self.pos += 1;
                    after_as = false;
                }
            }
        }
        if depth != 0 {
            return self.unexpected("')'");
        }
        Ok(())
    }
}

/// Detects `expr AS alias` or `expr alias` at the end of a select item.
fn implicit_or_explicit_alias(item: &[Token]) -> Option<(String, Range<usize>)> {
    let n = item.len();
    if n < 2 {
        return None;
    }
    let last = &item[n - 1];
    let prev = &item[n - 2];
    if !last.is_identifier_like() || (last.kind == TokenKind::Word && is_reserved(&last.text)) {
        return None;
    }
    if prev.is_word("AS") {
        return Some((last.text.clone(), last.span.clone()));
    }
    let prev_is_value = matches!(prev.kind, TokenKind::RParen | TokenKind::Number | TokenKind::Str | TokenKind::QuotedIdent)
        || (prev.kind == TokenKind::Word && !is_reserved(&prev.text))
        || prev.is_word("END");
    if prev_is_value {
        Some((last.text.clone(), last.span.clone()))
    } else {
        None
    }
}
