//! CSV and JSON report writers.
//!
//! Rows are serialized once to JSON values. The CSV keeps the struct's field
//! order as its column order; arrays become `;`-joined cells and missing
//! values become empty cells.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(cell).collect::<Vec<_>>().join(";"),
        Value::Object(_) => v.to_string(),
    }
}

/// Renders rows as CSV text with a header row.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let values: Vec<Value> = rows.iter().map(serde_json::to_value).collect::<serde_json::Result<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(Value::Object(first)) = values.first() {
        w.write_record(first.keys())?;
    }
    for v in &values {
        let obj = v.as_object().context("report rows must be structs")?;
        w.write_record(obj.values().map(cell))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Writes `<stem>.csv` and `<stem>.json` under `dir`, returning the CSV path.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, rows: &[T]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, to_csv(rows)?).with_context(|| format!("writing {}", csv_path.display()))?;
    let json_path = dir.join(format!("{stem}.json"));
    let mut json = serde_json::to_string_pretty(rows)?;
    json.push('\n');
    fs::write(&json_path, json).with_context(|| format!("writing {}", json_path.display()))?;
    Ok(csv_path)
}

/// Writes `text` to `path` via a temporary file so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        zeta: u32,
        alpha: Option<f64>,
        list: Vec<f64>,
        name: &'static str,
    }

    #[test]
    fn columns_follow_field_order() {
        let rows = [
            Row { zeta: 1, alpha: Some(0.1), list: vec![1.0, 0.25], name: "a,b" },
            Row { zeta: 2, alpha: None, list: vec![], name: "c" },
        ];
        let text = to_csv(&rows).unwrap();
        assert_eq!(text, "zeta,alpha,list,name\n1,0.1,1.0;0.25,\"a,b\"\n2,,,c\n");
    }
}
