use std::path::PathBuf;

use thiserror::Error;

use crate::table::TupleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema must contain at least one column")]
    EmptySchema,
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column ordinal {0} out of range")]
    ColumnOutOfRange(usize),
    #[error("primary key column {0} must be an i64 column")]
    InvalidPrimaryKey(usize),
    #[error("row has {got} values, schema has {expected} columns")]
    ArityMismatch { expected: usize, got: usize },
    #[error("NaN is not a storable value (column {0})")]
    NanValue(usize),
    #[error("value for column {column} does not match its declared type")]
    TypeMismatch { column: usize },
    #[error("primary key must not be null")]
    NullPrimaryKey,
    #[error("duplicate primary key {0}")]
    DuplicateKey(i64),
    #[error("primary key {0} not found")]
    KeyNotFound(i64),
    #[error("tuple {0:?} refers to a deleted slot")]
    Tombstoned(TupleId),
    #[error("tuple {0:?} does not resolve to a slot")]
    Unresolvable(TupleId),
    #[error("tuple id scheme does not match the table")]
    SchemeMismatch,
    #[error("invalid value range [{lb}, {ub}]")]
    InvalidRange { lb: f64, ub: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("target and host column must differ (both {0})")]
    SameColumn(usize),
    #[error("unknown index {0}")]
    UnknownIndex(usize),
    #[error("table is empty")]
    EmptyTable,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
