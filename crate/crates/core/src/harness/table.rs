use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

use super::config::OutputFormat;

/// One cell of a result table.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Uint(u64),
    Float(f64),
    Text(String),
    Missing,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Uint(u) => Some(u as f64),
            Value::Float(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match *self {
            Value::Uint(u) => Some(u),
            _ => None,
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Uint(v as u64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Uint(v)
    }
}

impl From<Option<u64>> for Value {
    fn from(v: Option<u64>) -> Self {
        v.map_or(Value::Missing, Value::Uint)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

fn nonfinite_text(f: f64) -> &'static str {
    if f.is_nan() {
        "NaN"
    } else if f > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Uint(u) => s.serialize_u64(*u),
            Value::Float(f) if f.is_finite() => s.serialize_f64(*f),
            Value::Float(f) => s.serialize_str(nonfinite_text(*f)),
            Value::Text(t) => s.serialize_str(t),
            Value::Missing => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match serde_json::Value::deserialize(d)? {
            serde_json::Value::Null => Value::Missing,
            serde_json::Value::Number(n) => match n.as_u64() {
                Some(u) => Value::Uint(u),
                None => Value::Float(n.as_f64().unwrap_or(f64::NAN)),
            },
            serde_json::Value::String(t) => match t.as_str() {
                "inf" => Value::Float(f64::INFINITY),
                "-inf" => Value::Float(f64::NEG_INFINITY),
                "NaN" => Value::Float(f64::NAN),
                _ => Value::Text(t),
            },
            other => return Err(serde::de::Error::custom(format!("unexpected cell {other}"))),
        })
    }
}

/// Columns plus rows; every row has one cell per column.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cell `name` of row `r`.
    pub fn get(&self, r: usize, name: &str) -> Option<&Value> {
        self.column(name)
            .and_then(|c| self.rows.get(r).map(|row| &row[c]))
    }

    pub fn f64_at(&self, r: usize, name: &str) -> Option<f64> {
        self.get(r, name).and_then(Value::as_f64)
    }
}

/// Provenance written ahead of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct JsonDoc {
    meta: Meta,
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

fn csv_cell(v: &Value) -> Result<String> {
    Ok(match v {
        Value::Uint(u) => u.to_string(),
        Value::Float(f) if f.is_finite() => format!("{f:.16e}"),
        Value::Float(f) => nonfinite_text(*f).to_string(),
        Value::Text(t) => {
            if t.contains([',', '\n', '\r', '"']) || t.is_empty() || t.parse::<f64>().is_ok() {
                return Err(Error::Config(format!("text cell {t:?} is not CSV-safe")));
            }
            t.clone()
        }
        Value::Missing => String::new(),
    })
}

fn parse_csv_cell(s: &str) -> Value {
    if s.is_empty() {
        Value::Missing
    } else if s.bytes().all(|b| b.is_ascii_digit()) {
        s.parse().map_or(Value::Text(s.to_string()), Value::Uint)
    } else if let Ok(f) = s.parse::<f64>() {
        Value::Float(f)
    } else {
        Value::Text(s.to_string())
    }
}

/// Serializes a table. CSV opens with a `#` metadata line, then the header;
/// floats carry 17 significant digits. JSON is `{meta, columns, rows}`.
pub fn render(table: &Table, meta: &Meta, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut out = format!(
                "# l1stab version={} experiment={} config_hash={} seed={}\n",
                meta.version, meta.experiment, meta.config_hash, meta.seed
            );
            out.push_str(&table.columns.join(","));
            out.push('\n');
            for row in &table.rows {
                let cells = row.iter().map(csv_cell).collect::<Result<Vec<_>>>()?;
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            Ok(out)
        }
        OutputFormat::Json => {
            let doc = JsonDoc {
                meta: meta.clone(),
                columns: table.columns.clone(),
                rows: table.rows.clone(),
            };
            let mut s = serde_json::to_string(&doc).map_err(|e| Error::Numerical(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

pub fn emit(table: &Table, meta: &Meta, path: &Path, format: OutputFormat) -> Result<()> {
    let text = render(table, meta, format)?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_table(text: &str, format: OutputFormat) -> Result<(Meta, Table)> {
    match format {
        OutputFormat::Csv => {
            let mut lines = text.lines();
            let head = lines
                .next()
                .and_then(|l| l.strip_prefix("# l1stab "))
                .ok_or_else(|| Error::Config("missing metadata line".into()))?;
            let fields: BTreeMap<&str, &str> = head
                .split_whitespace()
                .filter_map(|t| t.split_once('='))
                .collect();
            let get = |k: &str| {
                fields
                    .get(k)
                    .map(|v| v.to_string())
                    .ok_or_else(|| Error::Config(format!("metadata lacks {k}")))
            };
            let meta = Meta {
                version: get("version")?,
                experiment: get("experiment")?,
                config_hash: get("config_hash")?,
                seed: get("seed")?
                    .parse()
                    .map_err(|_| Error::Config("bad seed in metadata".into()))?,
            };
            let header = lines
                .next()
                .ok_or_else(|| Error::Config("missing header line".into()))?;
            let columns: Vec<String> = if header.is_empty() {
                Vec::new()
            } else {
                header.split(',').map(str::to_string).collect()
            };
            let mut table = Table {
                columns,
                rows: Vec::new(),
            };
            for line in lines {
                let row: Vec<Value> = line.split(',').map(parse_csv_cell).collect();
                if row.len() != table.columns.len() {
                    return Err(Error::Config(format!(
                        "row width {} in {line:?}",
                        row.len()
                    )));
                }
                table.rows.push(row);
            }
            Ok((meta, table))
        }
        OutputFormat::Json => {
            let doc: JsonDoc =
                serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            Ok((
                doc.meta,
                Table {
                    columns: doc.columns,
                    rows: doc.rows,
                },
            ))
        }
    }
}

pub fn read_table(path: &Path, format: OutputFormat) -> Result<(Meta, Table)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_table(&text, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Meta {
        Meta {
            version: "0.1.0".into(),
            experiment: "test".into(),
            config_hash: "00ff".into(),
            seed: 7,
        }
    }

    fn sample() -> Table {
        let mut t = Table::new(&["a", "b", "c", "d"]);
        t.push(vec![
            3usize.into(),
            0.1.into(),
            "plain".into(),
            Value::Missing,
        ]);
        t.push(vec![
            u64::MAX.into(),
            f64::INFINITY.into(),
            "x".into(),
            (1.0 / 3.0).into(),
        ]);
        t.push(vec![
            0usize.into(),
            (-2.5e-300).into(),
            "y".into(),
            f64::NAN.into(),
        ]);
        t
    }

    fn same(a: &Table, b: &Table) -> bool {
        a.columns == b.columns
            && a.rows.iter().zip(&b.rows).all(|(r, s)| {
                r.iter().zip(s).all(|(x, y)| match (x, y) {
                    (Value::Float(p), Value::Float(q)) => {
                        p.to_bits() == q.to_bits() || (p.is_nan() && q.is_nan())
                    }
                    _ => x == y,
                })
            })
            && a.rows.len() == b.rows.len()
    }

    #[test]
    fn round_trips() {
        for f in [OutputFormat::Csv, OutputFormat::Json] {
            let text = render(&sample(), &meta(), f).unwrap();
            let (m, t) = parse_table(&text, f).unwrap();
            assert_eq!(m, meta());
            assert!(same(&t, &sample()), "{f:?}: {t:?}");
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(&["x", "y"]);
        let text = render(&t, &meta(), OutputFormat::Csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(parse_table(&text, OutputFormat::Csv).unwrap().1, t);
    }

    #[test]
    fn csv_floats_have_17_digits() {
        let mut t = Table::new(&["v"]);
        t.push(vec![0.1.into()]);
        let text = render(&t, &meta(), OutputFormat::Csv).unwrap();
        assert!(text.ends_with("1.0000000000000001e-1\n"), "{text}");
    }

    #[test]
    fn unsafe_text_rejected() {
        let mut t = Table::new(&["v"]);
        t.push(vec!["a,b".into()]);
        assert!(render(&t, &meta(), OutputFormat::Csv).is_err());
    }

    #[test]
    fn io_errors_carry_path() {
        let e = emit(
            &sample(),
            &meta(),
            Path::new("/nonexistent/dir/out.csv"),
            OutputFormat::Csv,
        )
        .unwrap_err();
        assert!(e.to_string().contains("/nonexistent/dir/out.csv"));
    }
}
