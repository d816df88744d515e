//! Shared helpers for the integration suites.
#![allow(dead_code)] // each test target uses a different subset

use std::path::Path;
use std::process::Command;

/// The `legopt` binary under test.
pub fn legopt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_legopt"))
}

/// Drop the documented wall-clock column(s) from a CSV (header names
/// containing "seconds"), keeping everything else byte-exact.
pub fn mask_csv_timing(text: &str) -> String {
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let names: Vec<&str> = header.split(',').collect();
    let keep: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| !n.contains("seconds"))
        .map(|(i, _)| i)
        .collect();
    let project = |line: &str| -> String {
        let fields: Vec<&str> = line.split(',').collect();
        keep.iter()
            .map(|&i| fields.get(i).copied().unwrap_or(""))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = project(header);
    for line in lines {
        out.push('\n');
        out.push_str(&project(line));
    }
    out
}

/// Recursively remove JSON object keys that carry wall-clock values
/// ("seconds" / "wall_clock" in the key name) and re-serialize canonically.
pub fn mask_json_timing(text: &str) -> String {
    let mut value: serde_json::Value = serde_json::from_str(text).expect("valid JSON");
    strip_timing(&mut value);
    serde_json::to_string(&value).expect("serializable")
}

fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !(k.contains("seconds") || k.contains("wall_clock")));
            for v in map.values_mut() {
                strip_timing(v);
            }
        }
        serde_json::Value::Array(items) => {
            for v in items.iter_mut() {
                strip_timing(v);
            }
        }
        _ => {}
    }
}

/// Read a file as a string, with a clearer panic message.
pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}
