//! Report emission: summary trees as JSON, tables as CSV and plot-data files.
//! Output bytes depend only on the record: keys are sorted and every float is
//! rounded to 12 significant digits.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};

/// Significant digits kept in every emitted float.
pub const SIG_DIGITS: usize = 12;

/// Rounds to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest text that reads back as `round_sig(x)`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    if r == 0.0 {
        "0".into()
    } else if r.abs() < 1e-4 || r.abs() >= 1e15 {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Text(String::new()), Cell::Num)
    }
}

/// Header plus rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Output format of [`emit_report`].
#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    /// JSON summary tree.
    Tree(&'a Value),
    Csv(&'a Table),
    /// Two- or three-column x–y series.
    Plotdata(&'a Table),
}

/// Serializes any record into a tree with rounded floats.
pub fn to_tree<T: Serialize>(record: &T) -> Result<Value> {
    let v = serde_json::to_value(record).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(canonical(v))
}

/// Rounds every float in the tree; maps are already key-sorted.
pub fn canonical(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, canonical(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

pub fn tree_bytes(tree: &Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&canonical(tree.clone())).map_err(|e| Error::Parse(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn csv_bytes(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        if row.len() != table.header.len() {
            return Err(Error::Config(format!("row has {} cells, header has {}", row.len(), table.header.len())));
        }
        w.write_record(row.iter().map(Cell::render)).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Bytes of a report in its format.
pub fn report_bytes(report: Report<'_>) -> Result<Vec<u8>> {
    match report {
        Report::Tree(v) => tree_bytes(v),
        Report::Csv(t) => csv_bytes(t),
        Report::Plotdata(t) => {
            if !(2..=3).contains(&t.header.len()) {
                return Err(Error::Config(format!("plot data needs 2 or 3 columns, got {}", t.header.len())));
            }
            csv_bytes(t)
        }
    }
}

/// Writes a report to `path`, creating parent directories.
pub fn emit_report(report: Report<'_>, path: &Path) -> Result<()> {
    let bytes = report_bytes(report)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(0.75), "0.75");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_float(24.364987921406946), "24.3649879214");
        assert_eq!(format_float(-0.0), "0");
        assert_eq!(format_float(1e-20), "1e-20");
        assert_eq!(format_float(2.220446049250313e-16), "2.22044604925e-16");
        assert_eq!(format_float(f64::NAN), "nan");
    }

    #[test]
    fn same_record_same_bytes() {
        let tree = serde_json::json!({"b": 1.0 / 3.0, "a": [0.1, 2], "c": {"z": 1, "y": f64::EPSILON}});
        let a = report_bytes(Report::Tree(&tree)).unwrap();
        let b = report_bytes(Report::Tree(&tree)).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        assert!(text.contains("0.333333333333"));
    }

    #[test]
    fn empty_tables_are_well_formed() {
        let t = Table::new(&["rollout_id", "payoff1"]);
        assert_eq!(csv_bytes(&t).unwrap(), b"rollout_id,payoff1\n");
    }

    #[test]
    fn plotdata_column_count() {
        let mut t = Table::new(&["step", "mean_gap", "bound"]);
        t.push(vec![Cell::from(1usize), 0.5.into(), 1.0.into()]);
        assert_eq!(report_bytes(Report::Plotdata(&t)).unwrap(), b"step,mean_gap,bound\n1,0.5,1\n");
        let wide = Table::new(&["a", "b", "c", "d"]);
        assert!(report_bytes(Report::Plotdata(&wide)).is_err());
    }
}
