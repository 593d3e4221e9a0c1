//! Result rendering: JSON with floats at 17 significant digits, CSV tables,
//! and plot-data text files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

/// Pretty JSON in which every non-integer number is written as `{:.16e}`.
///
/// The default float formatting picks the shortest round-trip form, which
/// is exact but varies in width; a fixed digit count keeps output stable
/// across platforms and easy to diff.
pub fn render_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        // keeps "-0" out of the output
        "0.0000000000000000e0".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.push_str(&"  ".repeat(d));
    match value {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&value.to_string()),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => write!(out, "{u}").unwrap(),
            (None, Some(i), _) => write!(out, "{i}").unwrap(),
            (_, _, Some(f)) => out.push_str(&format_float(f)),
            _ => out.push_str(&n.to_string()),
        },
        Value::Array(items) if items.iter().all(|v| !v.is_array() && !v.is_object()) => {
            // scalar arrays on one line
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write_value(out, item, depth);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (k, (key, item)) in map.iter().enumerate() {
                pad(out, depth + 1);
                write!(out, "{}: ", Value::String(key.clone())).unwrap();
                write_value(out, item, depth + 1);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

/// Comma-separated table with a header row; integers stay integral.
pub fn render_csv(headers: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = headers.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|&x| {
                if x.fract() == 0.0 && x.abs() < 1e15 && x != 0.0 {
                    format!("{}", x as i64)
                } else {
                    format_float(x)
                }
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Two-column `x value` lines.
pub fn xy_lines(x: &[f64], y: &[f64]) -> String {
    let mut out = String::new();
    for (a, b) in x.iter().zip(y) {
        writeln!(out, "{} {}", format_float(*a), format_float(*b)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_use_seventeen_digits() {
        let text = render_json(&json!({"a": 0.1, "b": 3, "c": [1.5, -2.0], "d": "x"}));
        assert!(text.contains("\"a\": 1.0000000000000001e-1"));
        assert!(text.contains("\"b\": 3"));
        assert!(text.contains("[1.5000000000000000e0, -2.0000000000000000e0]"));
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn csv_keeps_counts_integral() {
        let text = render_csv(&["n", "value"], &[vec![1500.0, 0.25]]);
        assert_eq!(text, "n,value\n1500,2.5000000000000000e-1\n");
    }
}
