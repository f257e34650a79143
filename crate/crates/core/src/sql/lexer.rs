use std::ops::Range;

use super::SqlError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Bare word: keyword or identifier.
    Word,
    /// `"quoted"` or `` `quoted` `` identifier; `text` holds the unquoted name.
    QuotedIdent,
    Number,
    Str,
    LParen,
    RParen,
    Comma,
    Dot,
    Semicolon,
    Star,
    Operator,
    Param,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: Range<usize>,
}

impl Token {
    pub fn is_word(&self, upper: &str) -> bool {
        self.kind == TokenKind::Word && self.text.eq_ignore_ascii_case(upper)
    }

    pub fn is_identifier_like(&self) -> bool {
        matches!(self.kind, TokenKind::Word | TokenKind::QuotedIdent)
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        // comments
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let end = src[i + 2..]
                .find("*/")
                .ok_or(SqlError::Lex { pos: i, message: "unterminated comment".into() })?;
            i += end + 4;
            continue;
        }
        let start = i;
        let (kind, text) = match c {
            b'\'' => {
                i += 1;
                let mut value = String::new();
                loop {
                    let Some(rel) = src[i..].find('\'') else {
                        return Err(SqlError::Lex { pos: start, message: "unterminated string literal".into() });
                    };
                    value.push_str(&src[i..i + rel]);
                    i += rel + 1;
                    if bytes.get(i) == Some(&b'\'') {
                        value.push('\'');
                        i += 1;
                    } else {
                        break;
                    }
                }
                (TokenKind::Str, value)
            }
            b'"' | b'`' => {
                let close = if c == b'"' { '"' } else { '`' };
                let rel = src[i + 1..]
                    .find(close)
                    .ok_or(SqlError::Lex { pos: start, message: "unterminated quoted identifier".into() })?;
                let name = src[i + 1..i + 1 + rel].to_string();
                i += rel + 2;
                (TokenKind::QuotedIdent, name)
            }
            b'[' => {
                let rel = src[i + 1..]
                    .find(']')
                    .ok_or(SqlError::Lex { pos: start, message: "unterminated bracketed identifier".into() })?;
                let name = src[i + 1..i + 1 + rel].to_string();
                i += rel + 2;
                (TokenKind::QuotedIdent, name)
            }
            b'(' => {
                i += 1;
                (TokenKind::LParen, "(".into())
            }
            b')' => {
                i += 1;
                (TokenKind::RParen, ")".into())
            }
            b',' => {
                i += 1;
                (TokenKind::Comma, ",".into())
            }
            b';' => {
                i += 1;
                (TokenKind::Semicolon, ";".into())
            }
            b'*' => {
                i += 1;
                (TokenKind::Star, "*".into())
            }
            b'?' => {
                i += 1;
                (TokenKind::Param, "?".into())
            }
            b'.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i += 1;
                (TokenKind::Dot, ".".into())
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                (TokenKind::Number, src[start..i].to_string())
            }
            b'<' | b'>' | b'=' | b'!' | b'|' | b'+' | b'-' | b'/' | b'%' | b':' => {
                let two = src.get(i..i + 2).unwrap_or("");
                let len = if matches!(two, "<=" | ">=" | "<>" | "!=" | "||" | "::" | "==") { 2 } else { 1 };
                i += len;
                (TokenKind::Operator, src[start..i].to_string())
            }
            _ if c == b'_' || c == b'$' || c == b'@' || c.is_ascii_alphabetic() || c >= 0x80 => {
                while i < bytes.len() {
                    let b = bytes[i];
                    if b == b'_' || b == b'$' || b.is_ascii_alphanumeric() || b >= 0x80 {
                        i += 1;
                    } else {
                        break;
                    }
                }
                (TokenKind::Word, src[start..i].to_string())
            }
            _ => {
                return Err(SqlError::Lex {
                    pos: start,
                    message: format!("unexpected character {:?}", src[start..].chars().next().unwrap_or(' ')),
                })
            }
        };
        tokens.push(Token { kind, text, span: start..i });
    }
    Ok(tokens)
}
