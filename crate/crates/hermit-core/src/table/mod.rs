//! Columnar in-memory base table.
//!
//! Slots are append-only: deleting a tuple sets a tombstone and removes its
//! primary-index entry, so physical tuple identifiers never move.

mod bitmap;
pub mod ingest;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

pub use bitmap::Bitmap;

use crate::error::{Error, Result};
use crate::memory::{ordered_map_bytes, MemoryReport};
use crate::range::ValueRange;

/// Slots per block for physical tuple identifiers.
pub const BLOCK_SLOTS: usize = 4096;
/// Fixed table header (schema pointer, counters, scheme tag).
pub const TABLE_HEADER_BYTES: usize = 64;
/// Per-column descriptor (name pointer, type tag, vector header).
pub const COLUMN_HEADER_BYTES: usize = 32;
/// Every stored value occupies one 8-byte cell.
pub const CELL_BYTES: usize = 8;
/// Primary index entry: i64 key plus slot ordinal.
pub const PRIMARY_ENTRY_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    I64,
    F64,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::I64 => "i64",
            ColumnType::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub ty: ColumnType,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        ColumnDef {
            name: name.into(),
            ty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Null,
    Int(i64),
    Float(f64),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Null => None,
            Value::Int(v) => Some(v as f64),
            Value::Float(v) => Some(v),
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdScheme {
    /// Identifier is the primary key; fetches go through the primary index.
    Logical,
    /// Identifier is the slot location.
    Physical,
}

/// Physical tuple location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotLocation {
    pub block: u32,
    pub offset: u32,
}

impl SlotLocation {
    pub fn from_slot(slot: usize) -> Self {
        SlotLocation {
            block: (slot / BLOCK_SLOTS) as u32,
            offset: (slot % BLOCK_SLOTS) as u32,
        }
    }

    pub fn slot(self) -> usize {
        self.block as usize * BLOCK_SLOTS + self.offset as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TupleId {
    Logical(i64),
    Physical(SlotLocation),
}

impl TupleId {
    /// Smallest identifier in the total order (used as a range-scan bound).
    pub const MIN: TupleId = TupleId::Logical(i64::MIN);
    /// Largest identifier in the total order.
    pub const MAX: TupleId = TupleId::Physical(SlotLocation {
        block: u32::MAX,
        offset: u32::MAX,
    });

    pub fn scheme(&self) -> IdScheme {
        match self {
            TupleId::Logical(_) => IdScheme::Logical,
            TupleId::Physical(_) => IdScheme::Physical,
        }
    }
}

/// One projected `(target, host, tid)` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub m: f64,
    pub n: f64,
    pub tid: TupleId,
}

/// Live, non-null `(target, host)` rows of a table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectedPairs {
    pub rows: Vec<Pair>,
}

impl ProjectedPairs {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone)]
enum ColumnData {
    Int(Vec<i64>),
    Float(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Column {
    data: ColumnData,
    valid: Bitmap,
}

impl Column {
    fn new(ty: ColumnType) -> Self {
        let data = match ty {
            ColumnType::I64 => ColumnData::Int(Vec::new()),
            ColumnType::F64 => ColumnData::Float(Vec::new()),
        };
        Column {
            data,
            valid: Bitmap::new(),
        }
    }

    #[inline]
    fn get_f64(&self, slot: usize) -> Option<f64> {
        if !self.valid.get(slot) {
            return None;
        }
        Some(match &self.data {
            ColumnData::Int(v) => v[slot] as f64,
            ColumnData::Float(v) => v[slot],
        })
    }

    fn get(&self, slot: usize) -> Value {
        if !self.valid.get(slot) {
            return Value::Null;
        }
        match &self.data {
            ColumnData::Int(v) => Value::Int(v[slot]),
            ColumnData::Float(v) => Value::Float(v[slot]),
        }
    }

    fn push(&mut self, v: Value) {
        self.valid.push(!v.is_null());
        match (&mut self.data, v) {
            (ColumnData::Int(col), Value::Int(x)) => col.push(x),
            (ColumnData::Int(col), _) => col.push(0),
            (ColumnData::Float(col), Value::Float(x)) => col.push(x),
            (ColumnData::Float(col), Value::Int(x)) => col.push(x as f64),
            (ColumnData::Float(col), Value::Null) => col.push(0.0),
        }
    }
}

/// Columnar base table with a primary index on an i64 column.
#[derive(Debug, Clone)]
pub struct Table {
    schema: Vec<ColumnDef>,
    columns: Vec<Column>,
    pk: usize,
    scheme: IdScheme,
    primary: BTreeMap<i64, usize>,
    live: Bitmap,
}

impl Table {
    pub fn create(schema: Vec<ColumnDef>, primary_key_column: usize, scheme: IdScheme) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::EmptySchema);
        }
        let mut seen = HashSet::new();
        for c in &schema {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        match schema.get(primary_key_column) {
            None => return Err(Error::ColumnOutOfRange(primary_key_column)),
            Some(c) if c.ty != ColumnType::I64 => {
                return Err(Error::InvalidPrimaryKey(primary_key_column))
            }
            Some(_) => {}
        }
        let columns = schema.iter().map(|c| Column::new(c.ty)).collect();
        Ok(Table {
            schema,
            columns,
            pk: primary_key_column,
            scheme,
            primary: BTreeMap::new(),
            live: Bitmap::new(),
        })
    }

    pub fn schema(&self) -> &[ColumnDef] {
        &self.schema
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn primary_key_column(&self) -> usize {
        self.pk
    }

    pub fn id_scheme(&self) -> IdScheme {
        self.scheme
    }

    /// Number of slots ever allocated, including tombstoned ones.
    pub fn slot_count(&self) -> usize {
        self.live.len()
    }

    pub fn live_count(&self) -> usize {
        self.primary.len()
    }

    pub fn is_live(&self, slot: usize) -> bool {
        slot < self.live.len() && self.live.get(slot)
    }

    pub fn live_slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.live.len()).filter(|&s| self.live.get(s))
    }

    pub fn check_column(&self, col: usize) -> Result<()> {
        if col < self.schema.len() {
            Ok(())
        } else {
            Err(Error::ColumnOutOfRange(col))
        }
    }

    fn validate_row(&self, values: &[Value]) -> Result<i64> {
        if values.len() != self.schema.len() {
            return Err(Error::ArityMismatch {
                expected: self.schema.len(),
                got: values.len(),
            });
        }
        for (i, (v, def)) in values.iter().zip(&self.schema).enumerate() {
            match (v, def.ty) {
                (Value::Float(x), _) if x.is_nan() => return Err(Error::NanValue(i)),
                (Value::Float(_), ColumnType::I64) => return Err(Error::TypeMismatch { column: i }),
                _ => {}
            }
        }
        let key = match values[self.pk] {
            Value::Int(k) => k,
            Value::Null => return Err(Error::NullPrimaryKey),
            Value::Float(_) => return Err(Error::TypeMismatch { column: self.pk }),
        };
        if self.primary.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        Ok(key)
    }

    /// Appends a row and returns its identifier under the table's scheme.
    pub fn insert(&mut self, values: &[Value]) -> Result<TupleId> {
        let key = self.validate_row(values)?;
        let slot = self.live.len();
        for (col, v) in self.columns.iter_mut().zip(values) {
            col.push(*v);
        }
        self.live.push(true);
        self.primary.insert(key, slot);
        Ok(self.tuple_id(slot))
    }

    /// Tombstones the row with primary key `key`, returning the removed id.
    pub fn delete(&mut self, key: i64) -> Result<TupleId> {
        let slot = self.primary.remove(&key).ok_or(Error::KeyNotFound(key))?;
        self.live.set(slot, false);
        Ok(self.tuple_id(slot))
    }

    /// Identifier of `slot` under the table's scheme.
    pub fn tuple_id(&self, slot: usize) -> TupleId {
        match self.scheme {
            IdScheme::Physical => TupleId::Physical(SlotLocation::from_slot(slot)),
            IdScheme::Logical => {
                let key = match &self.columns[self.pk].data {
                    ColumnData::Int(v) => v[slot],
                    ColumnData::Float(_) => unreachable!("primary key column is i64"),
                };
                TupleId::Logical(key)
            }
        }
    }

    pub fn slot_of_key(&self, key: i64) -> Option<usize> {
        self.primary.get(&key).copied()
    }

    /// Resolves an identifier to a live slot. Logical ids go through the
    /// primary index.
    pub fn resolve(&self, tid: TupleId) -> Result<usize> {
        match (tid, self.scheme) {
            (TupleId::Logical(k), IdScheme::Logical) => {
                self.slot_of_key(k).ok_or(Error::Unresolvable(tid))
            }
            (TupleId::Physical(loc), IdScheme::Physical) => {
                let slot = loc.slot();
                if slot >= self.live.len() {
                    Err(Error::Unresolvable(tid))
                } else if !self.live.get(slot) {
                    Err(Error::Tombstoned(tid))
                } else {
                    Ok(slot)
                }
            }
            _ => Err(Error::SchemeMismatch),
        }
    }

    pub fn fetch(&self, tid: TupleId) -> Result<Vec<Value>> {
        let slot = self.resolve(tid)?;
        Ok(self.row(slot))
    }

    /// Row at `slot` regardless of liveness.
    pub fn row(&self, slot: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.get(slot)).collect()
    }

    pub fn primary_key_at(&self, slot: usize) -> i64 {
        match &self.columns[self.pk].data {
            ColumnData::Int(v) => v[slot],
            ColumnData::Float(_) => unreachable!("primary key column is i64"),
        }
    }

    #[inline]
    pub fn value_f64(&self, col: usize, slot: usize) -> Option<f64> {
        self.columns[col].get_f64(slot)
    }

    /// Live rows with non-null target and host values whose target lies in `range`.
    pub fn project_pairs(&self, target: usize, host: usize, range: &ValueRange) -> Result<ProjectedPairs> {
        self.project_pairs_where(target, host, |m| range.contains(m))
    }

    /// Like [`Table::project_pairs`] with an arbitrary target filter.
    pub fn project_pairs_where(
        &self,
        target: usize,
        host: usize,
        mut keep: impl FnMut(f64) -> bool,
    ) -> Result<ProjectedPairs> {
        self.check_column(target)?;
        self.check_column(host)?;
        let mut rows = Vec::new();
        for slot in self.live_slots() {
            let (Some(m), Some(n)) = (self.value_f64(target, slot), self.value_f64(host, slot)) else {
                continue;
            };
            if keep(m) {
                rows.push(Pair {
                    m,
                    n,
                    tid: self.tuple_id(slot),
                });
            }
        }
        Ok(ProjectedPairs { rows })
    }

    /// Min and max over live non-null values of `col`.
    pub fn column_range(&self, col: usize) -> Result<Option<ValueRange>> {
        self.check_column(col)?;
        let mut acc: Option<(f64, f64)> = None;
        for slot in self.live_slots() {
            if let Some(v) = self.value_f64(col, slot) {
                acc = Some(match acc {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
        }
        acc.map(|(lo, hi)| ValueRange::new(lo, hi)).transpose()
    }

    /// Sorted non-null values of `col` over live rows.
    pub fn sorted_values(&self, col: usize) -> Result<Vec<f64>> {
        self.check_column(col)?;
        let mut v: Vec<f64> = self
            .live_slots()
            .filter_map(|s| self.value_f64(col, s))
            .collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    /// Slots of live rows whose `col` value lies in `range`.
    pub fn scan(&self, col: usize, range: &ValueRange) -> Vec<usize> {
        self.live_slots()
            .filter(|&s| self.value_f64(col, s).is_some_and(|v| range.contains(v)))
            .collect()
    }

    /// Accounting for the table's own structures. Secondary structures are
    /// added by their owners.
    pub fn memory_report(&self) -> MemoryReport {
        let mut r = MemoryReport::new();
        r.add(
            "table_header",
            TABLE_HEADER_BYTES + COLUMN_HEADER_BYTES * self.schema.len(),
        );
        r.add("base_columns", self.slot_count() * self.schema.len() * CELL_BYTES);
        r.add(
            "validity_bitmaps",
            self.columns.iter().map(|c| c.valid.storage_bytes()).sum(),
        );
        r.add("tombstones", self.live.storage_bytes());
        r.add(
            "primary_index",
            ordered_map_bytes(self.primary.len(), PRIMARY_ENTRY_BYTES),
        );
        r
    }
}
