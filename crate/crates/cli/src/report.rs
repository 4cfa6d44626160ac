//! Deterministic report rendering.

use serde_json::{Map, Value};

/// Decimal places kept for every float in a report.
const DIGITS: i32 = 9;

/// Rounds floats to 1e-9 and maps non-finite floats to `null`. Matrix
/// payloads (objects with an `re` field) keep full precision so that emitted
/// operators reload exactly.
pub fn normalize(v: Value) -> Value {
    match v {
        Value::Object(o) if o.contains_key("re") => Value::Object(o),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => round(x),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

fn round(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let s = 10f64.powi(DIGITS);
    let r = (x * s).round() / s;
    // avoid "-0.0"
    let r = if r == 0.0 { 0.0 } else { r };
    serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
}

pub fn to_json(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&normalize(v)).expect("JSON values always serialise");
    s.push('\n');
    s
}

/// Header and one row of the scalar top-level fields.
pub fn to_csv(v: &Value) -> String {
    let v = normalize(v.clone());
    let Value::Object(o) = v else {
        return String::new();
    };
    let mut keys = Vec::new();
    let mut vals = Vec::new();
    for (k, x) in &o {
        let cell = match x {
            Value::Null => String::new(),
            Value::Bool(b) => b.to_string(),
            Value::Number(n) => n.to_string(),
            Value::String(s) => s.clone(),
            _ => continue,
        };
        keys.push(k.clone());
        vals.push(cell);
    }
    format!("{}\n{}\n", keys.join(","), vals.join(","))
}
