//! CSV ingestion and emission. Floats are written with 17 significant digits
//! so that every emitted file re-reads to identical values.

use std::io::{Read, Write};
use std::path::Path;

use crate::distributions::AtomicRV;
use crate::error::{Error, Result};
use crate::orlicz::TableFunction;
use crate::partitions::Partition;

/// Round-trip exact float formatting; infinities are written as `+inf`/`-inf`.
pub fn format_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Parses a decimal real, accepting the infinity spellings of [`format_f64`].
pub fn parse_f64(field: &str) -> Result<f64> {
    let s = field.trim();
    match s {
        "+inf" | "inf" | "Infinity" | "+Infinity" => Ok(f64::INFINITY),
        "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| Error::Parse(format!("`{s}` is not a decimal number"))),
    }
}

/// Columns of a headed CSV, selected by name.
struct Table {
    columns: Vec<Vec<String>>,
}

fn read_columns<R: Read>(reader: R, names: &[&str]) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut columns = vec![Vec::new(); names.len()];
    for record in rdr.records() {
        let record = record?;
        for (col, &i) in columns.iter_mut().zip(&idx) {
            let field = record
                .get(i)
                .ok_or_else(|| Error::Parse(format!("short row at line {}", record.position().map_or(0, |p| p.line()))))?;
            col.push(field.to_string());
        }
    }
    Ok(Table { columns })
}

fn floats(col: &[String]) -> Result<Vec<f64>> {
    col.iter().map(|s| parse_f64(s)).collect()
}

fn open(path: &Path) -> Result<std::fs::File> {
    Ok(std::fs::File::open(path)?)
}

/// Reads a scenario file with a `value` column, one row per atom.
pub fn read_values_from<R: Read>(reader: R) -> Result<AtomicRV> {
    let t = read_columns(reader, &["value"])?;
    let values = floats(&t.columns[0])?;
    AtomicRV::new(values).map_err(|e| match e {
        Error::EmptyInput | Error::NonFinite { .. } => Error::Parse(e.to_string()),
        other => other,
    })
}

pub fn read_values(path: &Path) -> Result<AtomicRV> {
    read_values_from(open(path)?)
}

pub fn write_values_to<W: Write>(writer: W, x: &AtomicRV) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["value"])?;
    for v in x.values() {
        w.write_record([format_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_values(path: &Path, x: &AtomicRV) -> Result<()> {
    write_values_to(std::fs::File::create(path)?, x)
}

/// Reads a partition file with a `block_id` column, one row per atom.
pub fn read_partition_from<R: Read>(reader: R) -> Result<Partition> {
    let t = read_columns(reader, &["block_id"])?;
    let labels = t.columns[0]
        .iter()
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Parse(format!("`{s}` is not a nonnegative block id")))
        })
        .collect::<Result<Vec<u64>>>()?;
    Partition::from_labels(&labels)
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    read_partition_from(open(path)?)
}

pub fn write_partition_to<W: Write>(writer: W, pi: &Partition) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["block_id"])?;
    for label in pi.labels() {
        w.write_record([label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the raw `z` column of a density file; validation is left to the caller.
pub fn read_z_column(path: &Path) -> Result<Vec<f64>> {
    let t = read_columns(open(path)?, &["z"])?;
    floats(&t.columns[0])
}

/// One row of a Kusuoka candidate file.
#[derive(Clone, Debug, PartialEq)]
pub struct KusuokaRow {
    pub candidate_id: String,
    pub alpha: f64,
    pub weight: f64,
    pub gamma: f64,
}

pub fn read_kusuoka_rows_from<R: Read>(reader: R) -> Result<Vec<KusuokaRow>> {
    let t = read_columns(reader, &["candidate_id", "alpha", "weight", "gamma"])?;
    let alpha = floats(&t.columns[1])?;
    let weight = floats(&t.columns[2])?;
    let gamma = floats(&t.columns[3])?;
    Ok(t.columns[0]
        .iter()
        .enumerate()
        .map(|(i, id)| KusuokaRow {
            candidate_id: id.clone(),
            alpha: alpha[i],
            weight: weight[i],
            gamma: gamma[i],
        })
        .collect())
}

pub fn read_kusuoka_rows(path: &Path) -> Result<Vec<KusuokaRow>> {
    read_kusuoka_rows_from(open(path)?)
}

/// Reads a tabulated Orlicz function with columns `t` and `phi_t`.
pub fn read_phi_table(path: &Path) -> Result<TableFunction> {
    let t = read_columns(open(path)?, &["t", "phi_t"])?;
    TableFunction::new(floats(&t.columns[0])?, floats(&t.columns[1])?)
}

/// Writes rows of floats under the given header.
pub fn write_rows_to<W: Write>(writer: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes a float as a JSON number, or as `"+inf"`/`"-inf"` when infinite.
pub fn serialize_extended<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(&format_f64(*v))
    } else {
        s.serialize_f64(*v)
    }
}

pub fn serialize_extended_vec<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct Ext(f64);
    impl serde::Serialize for Ext {
        fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            serialize_extended(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Ext(*x))?;
    }
    seq.end()
}
