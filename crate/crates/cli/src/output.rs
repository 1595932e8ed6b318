use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

/// A header plus string rows, written as CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip form; `inf` for infinities.
pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes `<command>-NNN.json` per record, `<command>-summary.csv` and,
/// when present, `<command>-plot.csv`. Stale record files of the same
/// command are removed first so reruns leave identical directories.
pub fn write_outputs(
    dir: &Path,
    command: &str,
    records: &[Value],
    summary: &Table,
    plot: Option<&Table>,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let prefix = format!("{command}-");
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if name.starts_with(&prefix) && name.ends_with(".json") {
            fs::remove_file(&path)?;
        }
    }
    for (i, rec) in records.iter().enumerate() {
        let path = dir.join(format!("{command}-{i:03}.json"));
        let mut text = serde_json::to_string_pretty(rec)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    summary.write(&dir.join(format!("{command}-summary.csv")))?;
    if let Some(p) = plot {
        p.write(&dir.join(format!("{command}-plot.csv")))?;
    }
    Ok(())
}
