//! Plain-text dataset format.
//!
//! ```text
//! a:i64,b:f64,c:i64
//! 1,2.5,
//! 2,,7
//! ```
//!
//! The first line declares `name:type` pairs (`i64` or `f64`). Every other
//! line holds one row; fields are split on commas without quoting and an
//! empty field is null.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ColumnDef, ColumnType, IdScheme, Table, Value};
use crate::error::{Error, Result};

pub fn parse_header(line: &str) -> Result<Vec<ColumnDef>> {
    line.trim_end_matches(['\r', '\n'])
        .split(',')
        .map(|field| {
            let (name, ty) = field
                .split_once(':')
                .ok_or_else(|| Error::parse(1, format!("header field `{field}` is not name:type")))?;
            let ty = match ty {
                "i64" => ColumnType::I64,
                "f64" => ColumnType::F64,
                other => return Err(Error::parse(1, format!("unknown column type `{other}`"))),
            };
            if name.is_empty() {
                return Err(Error::parse(1, "empty column name"));
            }
            Ok(ColumnDef::new(name, ty))
        })
        .collect()
}

pub fn parse_row(line: &str, schema: &[ColumnDef], lineno: usize) -> Result<Vec<Value>> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != schema.len() {
        return Err(Error::parse(
            lineno,
            format!("expected {} fields, found {}", schema.len(), fields.len()),
        ));
    }
    fields
        .iter()
        .zip(schema)
        .map(|(f, def)| {
            if f.is_empty() {
                return Ok(Value::Null);
            }
            match def.ty {
                ColumnType::I64 => f
                    .parse::<i64>()
                    .map(Value::Int)
                    .map_err(|e| Error::parse(lineno, format!("`{f}`: {e}"))),
                ColumnType::F64 => {
                    let v = f
                        .parse::<f64>()
                        .map_err(|e| Error::parse(lineno, format!("`{f}`: {e}")))?;
                    if v.is_nan() {
                        return Err(Error::parse(lineno, "NaN is not allowed"));
                    }
                    Ok(Value::Float(v))
                }
            }
        })
        .collect()
}

pub fn read_table(reader: impl BufRead, primary_key_column: usize, scheme: IdScheme) -> Result<Table> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::parse(1, e.to_string()))?,
        None => return Err(Error::parse(1, "missing header line")),
    };
    let schema = parse_header(&header)?;
    let mut table = Table::create(schema, primary_key_column, scheme)?;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let row = parse_row(&line, table.schema(), lineno)?;
        table
            .insert(&row)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
    }
    Ok(table)
}

pub fn load(path: &Path, primary_key_column: usize, scheme: IdScheme) -> Result<Table> {
    let f = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_table(BufReader::new(f), primary_key_column, scheme)
}

pub fn write_header(schema: &[ColumnDef], out: &mut impl Write) -> std::io::Result<()> {
    let header: Vec<String> = schema
        .iter()
        .map(|c| format!("{}:{}", c.name, c.ty.name()))
        .collect();
    writeln!(out, "{}", header.join(","))
}

pub fn write_row(row: &[Value], out: &mut impl Write) -> std::io::Result<()> {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.write_all(b",")?;
        }
        match v {
            Value::Null => {}
            Value::Int(x) => write!(out, "{x}")?,
            // Display for f64 is the shortest string that parses back exactly.
            Value::Float(x) => write!(out, "{x}")?,
        }
    }
    out.write_all(b"\n")
}

/// Writes live rows in slot order.
pub fn write_table(table: &Table, out: &mut impl Write) -> std::io::Result<()> {
    write_header(table.schema(), out)?;
    for slot in table.live_slots() {
        write_row(&table.row(slot), out)?;
    }
    Ok(())
}

pub fn save(table: &Table, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let f = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(f);
    write_table(table, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_nulls() {
        let text = "a:i64,b:f64,c:i64\n1,2.5,\n2,,7\n";
        let t = read_table(text.as_bytes(), 0, IdScheme::Logical).unwrap();
        assert_eq!(t.live_count(), 2);
        assert_eq!(t.row(0), vec![Value::Int(1), Value::Float(2.5), Value::Null]);
        assert_eq!(t.row(1), vec![Value::Int(2), Value::Null, Value::Int(7)]);

        let mut out = Vec::new();
        write_table(&t, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn parse_errors() {
        assert!(read_table("".as_bytes(), 0, IdScheme::Logical).is_err());
        assert!(read_table("a:i32\n".as_bytes(), 0, IdScheme::Logical).is_err());
        assert!(read_table("a\n".as_bytes(), 0, IdScheme::Logical).is_err());
        let e = read_table("a:i64,b:f64\n1,2\n3\n".as_bytes(), 0, IdScheme::Logical).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        assert!(read_table("a:i64,b:f64\n1,NaN\n".as_bytes(), 0, IdScheme::Logical).is_err());
        assert!(read_table("a:i64,b:f64\n1,x\n".as_bytes(), 0, IdScheme::Logical).is_err());
        assert!(read_table("a:i64\n1\n1\n".as_bytes(), 0, IdScheme::Logical).is_err());
    }

    #[test]
    fn float_text_round_trips() {
        let vals = [0.1, 1e300, -2.5e-310, 123456789.12345679, 1.0 / 3.0];
        for v in vals {
            let mut out = Vec::new();
            write_row(&[Value::Float(v)], &mut out).unwrap();
            let s = String::from_utf8(out).unwrap();
            assert_eq!(s.trim().parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
