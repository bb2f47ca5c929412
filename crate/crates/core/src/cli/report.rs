//! One tabular payload, rendered as CSV, JSON or aligned text.

use clap::ValueEnum;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    #[default]
    Text,
}

/// A verb's output. `json` carries the library value itself; `header` and
/// `rows` are its flat projection.
#[derive(Debug, Clone)]
pub struct Report {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub json: Value,
    /// Extra lines printed after the table in text mode only.
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(header: &[&str], json: Value) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), json, notes: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<String, String> {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.json).map(|s| s + "\n").map_err(|e| e.to_string()),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.header).map_err(|e| e.to_string())?;
                for r in &self.rows {
                    w.write_record(r).map_err(|e| e.to_string())?;
                }
                String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
            }
            Format::Text => Ok(self.text()),
        }
    }

    fn text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for r in &self.rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for r in &self.rows {
            out += &line(r);
        }
        for n in &self.notes {
            out += n;
            out.push('\n');
        }
        out
    }
}

/// Blank for absent optional cells.
pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_formats() {
        let mut r = Report::new(&["a", "bb"], serde_json::json!({"a": 1}));
        r.push(vec!["10".into(), "x,y".into()]);
        assert_eq!(r.render(Format::Csv).unwrap(), "a,bb\n10,\"x,y\"\n");
        assert_eq!(r.render(Format::Text).unwrap(), " a   bb\n10  x,y\n");
        assert!(r.render(Format::Json).unwrap().contains("\"a\": 1"));
    }
}
