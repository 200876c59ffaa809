//! CSV tables with JSON metadata sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Header plus rows of already formatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Convenience for all-numeric rows.
    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| num(x)).collect());
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Shortest round-trip representation, so identical runs give identical
/// files.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Metadata block: code version, experiment kind, the full configuration
/// and any extra fields.
pub fn metadata<T: Serialize>(kind: &str, config: &T, extra: Value) -> Result<Value> {
    Ok(json!({
        "code": env!("CARGO_PKG_NAME"),
        "code_version": env!("CARGO_PKG_VERSION"),
        "kind": kind,
        "units": {"energy": "GHz (cyclic)", "time": "ns", "phase": "rad"},
        "config": serde_json::to_value(config)?,
        "extra": extra,
    }))
}

/// Write `table` to `path` and its metadata next to it.
pub fn write_table(path: &Path, table: &Table, meta: &Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, table.to_csv_string()?)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.push_numbers(&[1.0, 0.25]);
        t.push_numbers(&[-2.5, 1e-12]);
        assert_eq!(t.to_csv_string().unwrap(), "a,b\n1,0.25\n-2.5,1e-12\n");
        assert_eq!(t.column("a").unwrap(), vec![1.0, -2.5]);
    }

    #[test]
    fn sidecar_next_to_csv() {
        let p = Path::new("/tmp/x/run.csv");
        assert_eq!(sidecar_path(p), Path::new("/tmp/x/run.json"));
    }
}
