use crate::exec::{ResultTable, Value};

/// Column mappings are searched exhaustively up to this many predicted columns.
pub const EXHAUSTIVE_COLUMN_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NormValue {
    Null,
    Number(String),
    Text(String),
}

/// Canonical form used for comparison: integers and reals share one numeric
/// form (12 significant digits), text is trimmed, and ISO dates/timestamps
/// are rewritten as `YYYY-MM-DD[ HH:MM:SS]`.
pub fn normalize_value(v: &Value) -> NormValue {
    match v {
        Value::Null => NormValue::Null,
        Value::Integer(i) => NormValue::Number(i.to_string()),
        Value::Real(r) => NormValue::Number(canonical_real(*r)),
        Value::Text(s) => {
            let t = s.trim();
            NormValue::Text(canonical_datetime(t).unwrap_or_else(|| t.to_string()))
        }
    }
}

fn canonical_real(r: f64) -> String {
    if r.is_finite() && r.fract() == 0.0 && r.abs() < 9.0e15 {
        return (r as i64).to_string();
    }
    if !r.is_finite() {
        return r.to_string();
    }
    let s = format!("{r:.11e}");
    // parse again so 2.50000000000e0 and 2.5 collapse
    let back: f64 = s.parse().unwrap_or(r);
    if back.fract() == 0.0 && back.abs() < 9.0e15 {
        (back as i64).to_string()
    } else {
        format!("{back}")
    }
}

fn canonical_datetime(t: &str) -> Option<String> {
    let b = t.as_bytes();
    let digits = |r: std::ops::Range<usize>| b.get(r.clone()).is_some_and(|s| s.iter().all(u8::is_ascii_digit));
    if b.len() < 10 || !digits(0..4) || b[4] != b'-' || !digits(5..7) || b[7] != b'-' || !digits(8..10) {
        return None;
    }
    let date = &t[..10];
    if b.len() == 10 {
        return Some(date.to_string());
    }
    if !(b[10] == b' ' || b[10] == b'T') || b.len() < 19 || !digits(11..13) || b[13] != b':' || !digits(14..16) || b[16] != b':' || !digits(17..19) {
        return None;
    }
    let rest = &t[19..];
    let frac_ok = rest.is_empty()
        || (rest.starts_with('.') && rest[1..].bytes().all(|c| c.is_ascii_digit()))
        || rest == "Z";
    if !frac_ok {
        return None;
    }
    let time = &t[11..19];
    let fraction = rest.strip_prefix('.').map(|f| f.trim_end_matches('0')).unwrap_or("");
    Some(match (time, fraction) {
        ("00:00:00", "") => date.to_string(),
        (_, "") => format!("{date} {time}"),
        (_, f) => format!("{date} {time}.{f}"),
    })
}

fn normalized_rows(t: &ResultTable) -> Vec<Vec<NormValue>> {
    t.rows.iter().map(|r| r.iter().map(normalize_value).collect()).collect()
}

/// True when every gold column can be mapped to a distinct predicted column
/// so that the projected predicted rows equal the gold rows, as multisets or,
/// with `order_sensitive`, as sequences. Column names are ignored and extra
/// predicted columns are allowed.
pub fn results_equivalent(gold: &ResultTable, predicted: &ResultTable, order_sensitive: bool) -> bool {
    let (g, p) = (gold.width(), predicted.width());
    if g > p || gold.rows.len() != predicted.rows.len() {
        return false;
    }
    let gold_rows = normalized_rows(gold);
    let pred_rows = normalized_rows(predicted);
    let column = |rows: &[Vec<NormValue>], c: usize| -> Vec<NormValue> {
        let mut col: Vec<NormValue> = rows.iter().map(|r| r[c].clone()).collect();
        if !order_sensitive {
            col.sort();
        }
        col
    };
    let gold_cols: Vec<Vec<NormValue>> = (0..g).map(|c| column(&gold_rows, c)).collect();
    let pred_cols: Vec<Vec<NormValue>> = (0..p).map(|c| column(&pred_rows, c)).collect();
    let candidates: Vec<Vec<usize>> =
        gold_cols.iter().map(|gc| (0..p).filter(|&j| &pred_cols[j] == gc).collect()).collect();
    if candidates.iter().any(Vec::is_empty) {
        return false;
    }

    let mut gold_sorted = gold_rows.clone();
    if !order_sensitive {
        gold_sorted.sort();
    }
    let verify = |mapping: &[usize]| -> bool {
        let mut projected: Vec<Vec<NormValue>> =
            pred_rows.iter().map(|r| mapping.iter().map(|&j| r[j].clone()).collect()).collect();
        if !order_sensitive {
            projected.sort();
        }
        projected == gold_sorted
    };

    if p <= EXHAUSTIVE_COLUMN_LIMIT {
        let mut mapping = Vec::with_capacity(g);
        let mut used = vec![false; p];
        search(&candidates, &mut mapping, &mut used, &verify)
    } else {
        let mut used = vec![false; p];
        let mut mapping = Vec::with_capacity(g);
        for cands in &candidates {
            match cands.iter().find(|&&j| !used[j]) {
                Some(&j) => {
                    used[j] = true;
                    mapping.push(j);
                }
                None => return false,
            }
        }
        verify(&mapping)
    }
}

fn search(candidates: &[Vec<usize>], mapping: &mut Vec<usize>, used: &mut [bool], verify: &dyn Fn(&[usize]) -> bool) -> bool {
    let i = mapping.len();
    if i == candidates.len() {
        return verify(mapping);
    }
    for &j in &candidates[i] {
        if used[j] {
            continue;
        }
        used[j] = true;
        mapping.push(j);
        if search(candidates, mapping, used, verify) {
            return true;
        }
        mapping.pop();
        used[j] = false;
    }
    false
}
