//! Typed results tables with CSV and Markdown emitters.
//!
//! Cells are rounded when constructed, so a table parsed back from its CSV
//! compares equal to the in-memory one.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Text,
    Integer,
    /// Three decimals.
    Real,
    /// Percentage points, one decimal.
    Percent,
    /// mean ± std over n runs, reals to three decimals.
    RealStat,
    /// mean ± std over n runs, percentages to one decimal.
    PercentStat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        Self { name: name.to_string(), kind }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Text(String),
    Integer(i64),
    Real(f64),
    Percent(f64),
    Stat { mean: f64, std: f64, n: usize },
    Missing,
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    let r = (v * s).round() / s;
    if r == 0.0 { 0.0 } else { r }
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn real(v: f64) -> Self {
        Cell::Real(round_to(v, 3))
    }

    /// From a fraction in [0, 1].
    pub fn percent(fraction: f64) -> Self {
        Cell::Percent(round_to(fraction * 100.0, 1))
    }

    pub fn real_stat(mean: f64, std: f64, n: usize) -> Self {
        Cell::Stat { mean: round_to(mean, 3), std: round_to(std, 3), n }
    }

    /// From fractions in [0, 1].
    pub fn percent_stat(mean: f64, std: f64, n: usize) -> Self {
        Cell::Stat { mean: round_to(mean * 100.0, 1), std: round_to(std * 100.0, 1), n }
    }

    fn csv_fields(&self, kind: ColumnKind) -> Vec<String> {
        let stat = matches!(kind, ColumnKind::RealStat | ColumnKind::PercentStat);
        let dec = if matches!(kind, ColumnKind::Percent | ColumnKind::PercentStat) { 1 } else { 3 };
        match self {
            Cell::Missing if stat => vec![String::new(); 3],
            Cell::Missing => vec![String::new()],
            Cell::Text(s) => vec![s.clone()],
            Cell::Integer(i) => vec![i.to_string()],
            Cell::Real(v) | Cell::Percent(v) => vec![format!("{v:.dec$}")],
            Cell::Stat { mean, std, n } => vec![format!("{mean:.dec$}"), format!("{std:.dec$}"), n.to_string()],
        }
    }

    fn markdown(&self, kind: ColumnKind) -> String {
        match (self, kind) {
            (Cell::Missing, _) => "n/a".into(),
            (Cell::Text(s), _) => s.clone(),
            (Cell::Integer(i), _) => i.to_string(),
            (Cell::Real(v), _) => format!("{v:.3}"),
            (Cell::Percent(v), _) => format!("{v:.1}%"),
            (Cell::Stat { mean, std, n }, ColumnKind::PercentStat) if *n > 1 => format!("{mean:.1} ± {std:.1}% (n={n})"),
            (Cell::Stat { mean, .. }, ColumnKind::PercentStat) => format!("{mean:.1}% (n=1)"),
            (Cell::Stat { mean, std, n }, _) if *n > 1 => format!("{mean:.3} ± {std:.3} (n={n})"),
            (Cell::Stat { mean, .. }, _) => format!("{mean:.3} (n=1)"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub git_hash: String,
    pub seeds: Vec<u64>,
    pub param_counts: Vec<(String, usize)>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub title: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    pub provenance: Provenance,
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("row has {got} cells, table has {want} columns")]
    Width { got: usize, want: usize },
    #[error("csv line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl ResultsTable {
    pub fn new(title: &str, columns: Vec<Column>) -> Self {
        Self { title: title.to_string(), columns, rows: Vec::new(), provenance: Provenance::default() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<(), TableError> {
        if row.len() != self.columns.len() {
            return Err(TableError::Width { got: row.len(), want: self.columns.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    fn csv_header(&self) -> Vec<String> {
        let mut h = Vec::new();
        for c in &self.columns {
            h.push(c.name.clone());
            if matches!(c.kind, ColumnKind::RealStat | ColumnKind::PercentStat) {
                h.push(format!("{}_std", c.name));
                h.push(format!("{}_n", c.name));
            }
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.csv_header()).expect("in-memory write");
        for row in &self.rows {
            let fields: Vec<String> = row.iter().zip(&self.columns).flat_map(|(cell, col)| cell.csv_fields(col.kind)).collect();
            w.write_record(fields).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    /// Parses CSV produced by [`ResultsTable::to_csv`] against this table's
    /// column schema. Title and provenance are kept from `self`.
    pub fn parse_csv(&self, text: &str) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| TableError::Parse { line: 1, msg: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if header != self.csv_header() {
            return Err(TableError::Parse { line: 1, msg: format!("header {header:?} does not match schema") });
        }
        let mut out = Self { rows: Vec::new(), ..self.clone() };
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| TableError::Parse { line, msg: e.to_string() })?;
            let err = |msg: String| TableError::Parse { line, msg };
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
            let mut fields = rec.iter();
            let mut row = Vec::new();
            for col in &self.columns {
                let f = fields.next().ok_or_else(|| err("too few fields".into()))?;
                let cell = match col.kind {
                    _ if f.is_empty() && col.kind != ColumnKind::Text => {
                        if matches!(col.kind, ColumnKind::RealStat | ColumnKind::PercentStat) {
                            fields.next();
                            fields.next();
                        }
                        Cell::Missing
                    }
                    ColumnKind::Text => Cell::Text(f.to_string()),
                    ColumnKind::Integer => Cell::Integer(f.parse().map_err(|e| err(format!("'{f}': {e}")))?),
                    ColumnKind::Real => Cell::Real(num(f)?),
                    ColumnKind::Percent => Cell::Percent(num(f)?),
                    ColumnKind::RealStat | ColumnKind::PercentStat => {
                        let std = fields.next().ok_or_else(|| err("missing std field".into()))?;
                        let n = fields.next().ok_or_else(|| err("missing n field".into()))?;
                        Cell::Stat { mean: num(f)?, std: num(std)?, n: n.parse().map_err(|e| err(format!("'{n}': {e}")))? }
                    }
                };
                row.push(cell);
            }
            out.rows.push(row);
        }
        Ok(out)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("## {}\n\n", self.title);
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        let _ = writeln!(s, "| {} |", names.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(names.len()));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().zip(&self.columns).map(|(c, col)| c.markdown(col.kind)).collect();
            let _ = writeln!(s, "| {} |", cells.join(" | "));
        }
        let p = &self.provenance;
        let _ = write!(s, "\n- git: {}\n- seeds: {:?}\n", p.git_hash, p.seeds);
        if !p.param_counts.is_empty() {
            let counts: Vec<String> = p.param_counts.iter().map(|(m, c)| format!("{m}={c}")).collect();
            let _ = writeln!(s, "- parameters: {}", counts.join(", "));
        }
        for n in &p.notes {
            let _ = writeln!(s, "- {n}");
        }
        s
    }
}
