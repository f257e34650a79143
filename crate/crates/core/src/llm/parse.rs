use serde::Serialize;

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    JsonArrayOfStrings,
    FencedSql,
    JsonObject,
}

impl Expected {
    pub fn repair_instruction(self) -> &'static str {
        match self {
            Expected::JsonArrayOfStrings => "Return only a JSON array of strings, with no other text.",
            Expected::FencedSql => "Return only one SQL statement inside a ```sql fenced block, with no other text.",
            Expected::JsonObject => "Return only a JSON object, with no other text.",
        }
    }
}

impl std::fmt::Display for Expected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Expected::JsonArrayOfStrings => "a JSON array of strings",
            Expected::FencedSql => "a fenced SQL statement",
            Expected::JsonObject => "a JSON object",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Parsed {
    #[default]
    Nothing,
    Strings(Vec<String>),
    Sql(String),
    Object(serde_json::Map<String, serde_json::Value>),
}

impl Parsed {
    pub fn into_strings(self) -> Vec<String> {
        match self {
            Parsed::Strings(v) => v,
            _ => Vec::new(),
        }
    }

    pub fn into_sql(self) -> String {
        match self {
            Parsed::Sql(s) => s,
            _ => String::new(),
        }
    }

    pub fn into_object(self) -> serde_json::Map<String, serde_json::Value> {
        match self {
            Parsed::Object(o) => o,
            _ => serde_json::Map::new(),
        }
    }
}

/// Pulls the expected payload out of a model response, ignoring prose around
/// the first fenced block or the first JSON value.
pub fn parse_structured(response: &str, expected: Expected) -> Result<Parsed, LlmError> {
    let fail = || LlmError::Parse { expected, raw: response.to_string() };
    match expected {
        Expected::FencedSql => {
            let sql = match first_fence(response) {
                Some(body) => body.trim().to_string(),
                None => {
                    let t = response.trim();
                    let head: String = t.chars().take(6).collect();
                    if head.eq_ignore_ascii_case("select") {
                        t.to_string()
                    } else {
                        return Err(fail());
                    }
                }
            };
            let sql = sql.trim_end_matches(|c: char| c == ';' || c.is_whitespace()).to_string();
            if sql.is_empty() {
                return Err(fail());
            }
            Ok(Parsed::Sql(sql))
        }
        Expected::JsonArrayOfStrings => {
            let value = first_json(response, '[').ok_or_else(fail)?;
            let items = value.as_array().ok_or_else(fail)?;
            let strings = items
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(fail)?;
            Ok(Parsed::Strings(strings))
        }
        Expected::JsonObject => {
            let value = first_json(response, '{').ok_or_else(fail)?;
            match value {
                serde_json::Value::Object(map) => Ok(Parsed::Object(map)),
                _ => Err(fail()),
            }
        }
    }
}

fn first_fence(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    // skip the info string (e.g. `sql`)
    let body_start = after.find('\n').map(|i| i + 1)?;
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

fn first_json(text: &str, open: char) -> Option<serde_json::Value> {
    let search = |s: &str| -> Option<serde_json::Value> {
        for (i, _) in s.match_indices(open) {
            let mut stream = serde_json::Deserializer::from_str(&s[i..]).into_iter::<serde_json::Value>();
            if let Some(Ok(v)) = stream.next() {
                return Some(v);
            }
        }
        None
    };
    first_fence(text).and_then(search).or_else(|| search(text))
}
