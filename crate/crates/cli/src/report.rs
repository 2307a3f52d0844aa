//! Report emission: versioned JSON or a flat CSV table.

use std::io::Write;

use orlicz_risk::io::{format_f64, write_rows_to};
use orlicz_risk::{Error, Result};
use serde::Serialize;

use crate::Format;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// One `value` column, so the table re-ingests as a scenario file.
    pub fn values(values: &[f64]) -> Self {
        Table {
            header: vec!["value"],
            rows: values.iter().map(|v| vec![format_f64(*v)]).collect(),
        }
    }

    pub fn pairs(rows: Vec<(String, String)>) -> Self {
        Table {
            header: vec!["key", "value"],
            rows: rows.into_iter().map(|(k, v)| vec![k, v]).collect(),
        }
    }
}

pub struct Report {
    pub json: String,
    pub table: Table,
}

impl Report {
    pub fn new<T: Serialize>(command: &str, body: &T, table: Table) -> Result<Self> {
        let json = serde_json::to_string_pretty(&Envelope {
            schema_version: SCHEMA_VERSION,
            command,
            body,
        })
        .map_err(|e| Error::Numerical(format!("cannot serialize report: {e}")))?;
        Ok(Report { json, table })
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> Result<()> {
        match format {
            Format::Json => {
                out.write_all(self.json.as_bytes())?;
                out.write_all(b"\n")?;
            }
            Format::Csv => write_rows_to(&mut *out, &self.table.header, &self.table.rows)?,
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Body {
        value: f64,
    }

    #[test]
    fn schema_version_comes_first() {
        let r = Report::new("es", &Body { value: 7.5 }, Table::values(&[7.5])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.json).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert!(r.json.trim_start_matches(['{', '\n', ' ']).starts_with("\"schema_version\""));
        let mut buf = Vec::new();
        r.write(Format::Csv, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("value\n"));
    }
}
