//! Byte-stable JSON and CSV rendering.

use serde::Serialize;
use serde_json::Value;

/// A float with 17 significant digits, trailing zeros trimmed, always with a
/// decimal point or exponent. Negative zero prints as `0.0`.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        return "0.0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let mut s = format!("{v:.decimals$}");
        if s.contains('.') {
            let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
            s.truncate(trimmed);
        }
        if !s.contains('.') {
            s.push_str(".0");
        }
        s
    } else {
        let mut m = mantissa.trim_end_matches('0').to_string();
        if m.ends_with('.') {
            m.push('0');
        }
        format!("{m}e{exp}")
    }
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().expect("f64")));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("key"));
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

/// Compact JSON on one line.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable output");
    let mut out = String::new();
    write_value(&mut out, &v);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
}

impl Header {
    pub fn new(command: &'static str, seed: u64) -> Header {
        Header {
            tool: "saddlekit",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
        }
    }
}

/// `{"header": ..., <fields of payload>}`.
pub fn with_header<T: Serialize>(header: &Header, payload: &T) -> Value {
    let mut map = serde_json::Map::new();
    map.insert("header".into(), serde_json::to_value(header).expect("header"));
    match serde_json::to_value(payload).expect("serializable output") {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("result".into(), other);
        }
    }
    Value::Object(map)
}

pub fn cell(v: f64) -> String {
    format_float(v)
}

pub fn opt_cell(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}
