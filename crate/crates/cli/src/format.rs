//! Number formatting and report serialization.
//!
//! Every number leaves the tool with at most 12 significant digits, in CSV
//! and JSON alike, so outputs are stable across platforms and easy to diff.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u64 = 1;

/// `x` with 12 significant digits, like C's `%.12g`. Non-finite values
/// print as `inf`, `-inf` and `nan`.
pub fn sig12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        trim_zeros(format!("{:.*}", (11 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Rounds every non-integer number in `value` to 12 significant digits.
pub fn round_json(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            if let Some(r) = sig12(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

pub fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Output(e.to_string()))
}

/// Pretty JSON of `fields` with `"schema": 1` added and numbers rounded.
pub fn json_document(mut fields: Map<String, Value>) -> String {
    fields.insert("schema".into(), Value::from(SCHEMA_VERSION));
    let mut doc = Value::Object(fields);
    round_json(&mut doc);
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv_document(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Output(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.9), "0.9");
        assert_eq!(sig12(96.0), "96");
        assert_eq!(sig12(-0.0), "0");
        assert_eq!(sig12(0.7320550528229), "0.732055052823");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(1e-7), "1e-7");
        assert_eq!(sig12(123456789012345.0), "1.23456789012e14");
        assert_eq!(sig12(9.999999999999999), "10");
        assert_eq!(sig12(f64::INFINITY), "inf");
        assert_eq!(sig12(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn rounding_error_is_below_half_a_unit_in_the_twelfth_digit() {
        let mut x = 1.2345e-9f64;
        while x < 1e15 {
            for y in [x, -x, x * 1.000000000007, x * 0.99999999999913] {
                let back: f64 = sig12(y).parse().unwrap();
                assert!(((back - y) / y).abs() <= 5e-12, "{y} -> {}", sig12(y));
            }
            x *= 1.7;
        }
    }

    #[test]
    fn json_numbers_are_rounded() {
        let mut fields = Map::new();
        fields.insert("x".into(), Value::from(1.0 / 3.0));
        fields.insert("n".into(), Value::from(7));
        let doc = json_document(fields);
        assert!(doc.contains("\"x\": 0.333333333333"), "{doc}");
        assert!(doc.contains("\"schema\": 1"));
        assert!(doc.contains("\"n\": 7"));
    }
}
