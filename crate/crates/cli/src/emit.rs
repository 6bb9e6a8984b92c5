//! Long-format result tables: one `(k, label, value)` row per entry.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::args::Format;

#[derive(Debug, Default)]
pub struct Table {
    rows: Vec<(usize, String, f64)>,
}

#[derive(Serialize)]
struct Row<'a> {
    k: usize,
    label: &'a str,
    value: f64,
}

impl Table {
    pub fn push(&mut self, k: usize, label: &str, value: f64) {
        self.rows.push((k, label.to_string(), value));
    }

    /// Entries `k = 1, 2, …` of a per-step sequence.
    pub fn push_series(&mut self, label: &str, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.push(i + 1, label, v);
        }
    }

    /// Write `dir/<name>.<ext>`.
    pub fn write(&self, dir: &Path, name: &str, format: Format) -> std::io::Result<()> {
        let path = dir.join(format!("{name}.{}", format.extension()));
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["k", "label", "value"])?;
                for (k, label, v) in &self.rows {
                    w.write_record([k.to_string(), label.clone(), fmt_f64(*v)])?;
                }
                w.flush()?;
            }
            Format::JsonLines => {
                let mut w = BufWriter::new(File::create(&path)?);
                for (k, label, value) in &self.rows {
                    serde_json::to_writer(&mut w, &Row { k: *k, label, value: *value })?;
                    w.write_all(b"\n")?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 12345.678901234567] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            let digits = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(digits.len(), 17);
        }
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::default();
        t.push_series("I-PF-E", &[1.5, 2.0]);
        t.write(dir.path(), "x", Format::Csv).unwrap();
        let text = std::fs::read_to_string(dir.path().join("x.csv")).unwrap();
        assert_eq!(
            text,
            "k,label,value\n1,I-PF-E,1.5000000000000000e0\n2,I-PF-E,2.0000000000000000e0\n"
        );
    }
}
