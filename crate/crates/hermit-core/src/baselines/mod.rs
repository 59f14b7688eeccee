//! Comparison structures: a complete ordered index and correlation maps.

mod cm;

pub use cm::{CorrelationMap, CM_LIST_ENTRY_BYTES, CM_MAP_ENTRY_BYTES};

use crate::ordered_index::OrderedIndex;
use crate::range::ValueRange;
use crate::table::{Table, TupleId};

/// Ordered map from every live, non-null target value to its tuples.
#[derive(Debug, Clone)]
pub struct CompleteSecondaryIndex {
    column: usize,
    index: OrderedIndex,
}

impl CompleteSecondaryIndex {
    pub fn build(table: &Table, column: usize) -> crate::Result<Self> {
        table.check_column(column)?;
        Ok(CompleteSecondaryIndex {
            column,
            index: OrderedIndex::build(table, column),
        })
    }

    pub fn column(&self) -> usize {
        self.column
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn insert(&mut self, value: f64, tid: TupleId) {
        self.index.insert(value, tid);
    }

    pub fn remove(&mut self, value: f64, tid: TupleId) {
        self.index.remove(value, tid);
    }

    pub fn lookup(&self, pred: &ValueRange) -> Vec<TupleId> {
        self.index.scan(pred).collect()
    }

    pub fn memory_bytes(&self) -> usize {
        self.index.memory_bytes()
    }
}
