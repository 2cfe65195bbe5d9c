//! Canonical report encoding: sorted keys, 17 significant digits for
//! floats, two-space indentation and a trailing newline.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::CliError;

/// `v` with 17 significant digits in scientific notation.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        // one spelling for both signed zeros
        return "0.0000000000000000e0".to_string();
    }
    format!("{v:.16e}")
}

fn push_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n(' ', n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => write!(out, "{u}").unwrap(),
            (None, Some(i)) => write!(out, "{i}").unwrap(),
            _ => out.push_str(&format_f64(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::String(s) => push_string(out, s),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 2);
                write_value(out, item, indent + 2);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                pad(out, indent + 2);
                push_string(out, key);
                out.push_str(": ");
                write_value(out, &map[*key], indent + 2);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

/// Canonical form of any serializable value. Floats pass through
/// `serde_json::Value`, which maps non-finite values to `null`.
pub fn to_canonical<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    Ok(canonical_json(&to_value(v)?))
}

pub fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(format!("serialization failed: {e}")))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().ok_or_else(|| CliError::Usage(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn csv_cell(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

/// Trace CSV with header `round,x0,..,x{n-1},dist,ratio,fs`; missing values
/// are empty cells.
pub fn trace_csv(trace: &iterfield::fedsim::FedAvgTrace, dim: usize) -> String {
    let mut out = String::from("round");
    for i in 0..dim {
        write!(out, ",x{i}").unwrap();
    }
    out.push_str(",dist,ratio,fs\n");
    for r in &trace.rounds {
        write!(out, "{}", r.round).unwrap();
        for v in r.x.iter() {
            write!(out, ",{}", format_f64(*v)).unwrap();
        }
        writeln!(out, ",{},{},{}", csv_cell(r.dist), csv_cell(r.ratio), csv_cell(r.fs)).unwrap();
    }
    out
}
