use std::collections::BTreeMap;
use std::io::Write;

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i128),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i128)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i128)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i128)
    }
}

impl From<u128> for Cell {
    fn from(v: u128) -> Self {
        Cell::Int(v as i128)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// 17 significant digits; integral values print as integers.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => i64::try_from(*v).map(Value::from).unwrap_or_else(|_| Value::String(v.to_string())),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    /// A bare value in CSV mode, `{"value": v}` in JSON mode.
    Scalar,
    /// One row, flattened into a JSON object.
    Single,
    Table,
}

#[derive(Debug, Clone)]
pub struct Report {
    shape: Shape,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    meta: BTreeMap<String, Cell>,
    /// Lines printed after the CSV body, such as `rank=2`.
    trailer: Vec<(String, Cell)>,
}

impl Report {
    pub fn scalar(value: f64) -> Self {
        Report {
            shape: Shape::Scalar,
            columns: vec!["value".into()],
            rows: vec![vec![Cell::Float(value)]],
            meta: BTreeMap::new(),
            trailer: Vec::new(),
        }
    }

    pub fn table(columns: &[&str]) -> Self {
        Report {
            shape: Shape::Table,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            meta: BTreeMap::new(),
            trailer: Vec::new(),
        }
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Report { shape: Shape::Table, columns, rows: Vec::new(), meta: BTreeMap::new(), trailer: Vec::new() }
    }

    pub fn single(columns: &[&str], row: Vec<Cell>) -> Self {
        let mut r = Self::table(columns);
        r.shape = Shape::Single;
        r.push(row);
        r
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta(mut self, key: &str, value: impl Into<Cell>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn trailer(mut self, key: &str, value: impl Into<Cell>) -> Self {
        self.trailer.push((key.to_string(), value.into()));
        self
    }

    /// Records the library version; used by every stochastic command.
    pub fn versioned(self) -> Self {
        self.meta("version", env!("CARGO_PKG_VERSION"))
    }

    pub fn to_json(&self) -> Value {
        let row_obj = |row: &[Cell]| -> Map<String, Value> {
            self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect()
        };
        let meta: Map<String, Value> = self.meta.iter().map(|(k, v)| (k.clone(), v.json())).collect();
        match self.shape {
            Shape::Scalar => json!({ "value": self.rows[0][0].json() }),
            Shape::Single => {
                let mut obj = row_obj(&self.rows[0]);
                for (k, v) in &self.trailer {
                    obj.insert(k.clone(), v.json());
                }
                obj.insert("meta".into(), Value::Object(meta));
                Value::Object(obj)
            }
            Shape::Table => {
                let mut obj = Map::new();
                obj.insert("columns".into(), json!(self.columns));
                obj.insert("rows".into(), Value::Array(self.rows.iter().map(|r| Value::Object(row_obj(r))).collect()));
                for (k, v) in &self.trailer {
                    obj.insert(k.clone(), v.json());
                }
                obj.insert("meta".into(), Value::Object(meta));
                Value::Object(obj)
            }
        }
    }

    pub fn to_csv(&self) -> String {
        if self.shape == Shape::Scalar {
            return format!("{}\n", self.rows[0][0].csv());
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).expect("in-memory write");
        }
        let mut out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        for (k, v) in &self.trailer {
            out.push_str(&format!("{k}={}\n", v.csv()));
        }
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}={}\n", v.csv()));
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json()).expect("serialisable");
                s.push('\n');
                s
            }
        }
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> std::io::Result<()> {
        out.write_all(self.render(format).as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats() {
        assert_eq!(format_float(4.0), "4");
        assert_eq!(format_float(-0.0), "0");
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(format_float(f64::NAN), "NaN");
        assert_eq!(format_float(1e20), "1.0000000000000000e20");
    }

    #[test]
    fn header_only_table() {
        let r = Report::table(&["a", "b"]);
        assert_eq!(r.to_csv(), "a,b\n");
        assert_eq!(r.to_json()["rows"], json!([]));
    }

    #[test]
    fn json_and_csv_agree() {
        let r = Report::single(&["value", "stderr"], vec![Cell::Float(1.0 / 3.0), Cell::Float(2e-5)]).meta("seed", 7u64);
        let j = r.to_json();
        let csv = r.to_csv();
        let line = csv.lines().nth(1).unwrap();
        let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals[0], j["value"].as_f64().unwrap());
        assert_eq!(vals[1], j["stderr"].as_f64().unwrap());
        assert!(csv.contains("# seed=7"));
    }

    #[test]
    fn quoting() {
        let mut r = Report::table(&["blocks"]);
        r.push(vec![Cell::Text("(1,2)(3,4)".into())]);
        assert_eq!(r.to_csv(), "blocks\n\"(1,2)(3,4)\"\n");
    }
}
