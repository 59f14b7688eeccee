//! Succinct secondary indexing through column correlation.
//!
//! A [`trs::TrsTree`] models the mapping from a target column to a host
//! column that already carries a complete index. The [`engine`] turns the
//! tree's approximate answers into exact rows.

pub mod baselines;
pub mod bench;
pub mod engine;
pub mod datagen;
pub mod error;
pub mod memory;
pub mod ordered_index;
pub mod range;
pub mod table;
pub mod trs;

pub use error::{Error, Result};
pub use range::{union_ranges, ValueRange};
pub use table::{ColumnDef, ColumnType, IdScheme, Pair, SlotLocation, Table, TupleId, Value};
