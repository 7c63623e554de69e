//! Tabular output in the three supported formats.

use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::evalmetrics::MeanStd;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
    JsonLines,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
    Stat(MeanStd),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<MeanStd> for Cell {
    fn from(v: MeanStd) -> Self {
        Cell::Stat(v)
    }
}

/// Rows under named columns. In CSV and JSON a `Stat` cell expands to
/// `<column>_mean` and `<column>_std`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn is_stat_column(&self, c: usize) -> bool {
        self.rows.iter().any(|r| matches!(r[c], Cell::Stat(_)))
    }

    fn flat_header(&self) -> Vec<String> {
        let mut h = Vec::new();
        for (c, name) in self.columns.iter().enumerate() {
            if self.is_stat_column(c) {
                h.push(format!("{name}_mean"));
                h.push(format!("{name}_std"));
            } else {
                h.push(name.clone());
            }
        }
        h
    }

    fn flat_row(&self, row: &[Cell]) -> Vec<String> {
        let mut out = Vec::new();
        for (c, cell) in row.iter().enumerate() {
            match cell {
                Cell::Text(s) => out.push(s.clone()),
                Cell::Int(v) => out.push(v.to_string()),
                Cell::Num(v) => out.push(v.to_string()),
                Cell::Stat(s) => {
                    out.push(s.mean.to_string());
                    out.push(s.std.to_string());
                }
            }
            if self.is_stat_column(c) && !matches!(cell, Cell::Stat(_)) {
                out.push(String::new());
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.flat_header())?;
        for r in &self.rows {
            w.write_record(self.flat_row(r))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let mut obj = Map::new();
            for (name, cell) in self.columns.iter().zip(r) {
                let v = match cell {
                    Cell::Text(s) => json!(s),
                    Cell::Int(v) => json!(v),
                    Cell::Num(v) => json!(v),
                    Cell::Stat(s) => json!({"mean": s.mean, "std": s.std}),
                };
                obj.insert(name.clone(), v);
            }
            out.push_str(&Value::Object(obj).to_string());
            out.push('\n');
        }
        out
    }

    pub fn to_pretty(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        Cell::Text(s) => s.clone(),
                        Cell::Int(v) => v.to_string(),
                        Cell::Num(v) => format!("{v:.5}"),
                        Cell::Stat(s) => s.to_string(),
                    })
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.columns[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |items: &[String]| -> String {
            let parts: Vec<String> = items
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.columns);
        out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
        for r in &cells {
            out.push_str(&line(r));
        }
        out
    }

    pub fn render(&self, format: Format) -> Result<String> {
        Ok(match format {
            Format::Csv => self.to_csv()?,
            Format::Table => self.to_pretty(),
            Format::JsonLines => self.to_json_lines(),
        })
    }

    /// Writes the CSV form under a `# provenance` line.
    pub fn save_csv(&self, path: &Path, provenance: &str) -> Result<()> {
        write_text(path, &format!("# {provenance}\n{}", self.to_csv()?))
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["model", "n", "acc"]);
        t.push(vec!["a".into(), 3usize.into(), MeanStd { mean: 0.5, std: 0.25 }.into()]);
        t.push(vec![
            "bb".into(),
            10usize.into(),
            MeanStd { mean: 0.125, std: 0.0 }.into(),
        ]);
        t
    }

    #[test]
    fn csv_expands_stat_columns() {
        assert_eq!(
            sample().to_csv().unwrap(),
            "model,n,acc_mean,acc_std\na,3,0.5,0.25\nbb,10,0.125,0\n"
        );
    }

    #[test]
    fn json_lines_nest_stats() {
        let j = sample().to_json_lines();
        assert_eq!(
            j.lines().next().unwrap(),
            r#"{"acc":{"mean":0.5,"std":0.25},"model":"a","n":3}"#
        );
    }

    #[test]
    fn pretty_aligns_columns() {
        let p = sample().to_pretty();
        let lines: Vec<&str> = p.lines().collect();
        assert_eq!(lines[0], "model   n             acc");
        assert_eq!(lines[2], "a       3  0.50000(0.250)");
    }
}
