use std::collections::HashMap;

use crate::range::ValueRange;
use crate::table::TupleId;

/// Bytes per buffered `(m, tid)` entry.
pub const OUTLIER_ENTRY_BYTES: usize = 16;

#[inline]
fn key(m: f64) -> u64 {
    // -0.0 and 0.0 share a bucket
    if m == 0.0 {
        0
    } else {
        m.to_bits()
    }
}

/// Hash multimap from target value to the identifiers of outlier tuples.
#[derive(Debug, Clone, Default)]
pub struct OutlierBuffer {
    map: HashMap<u64, Vec<TupleId>>,
    len: usize,
}

impl OutlierBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Adds `(m, tid)`; returns false if it was already present.
    pub fn insert(&mut self, m: f64, tid: TupleId) -> bool {
        let ids = self.map.entry(key(m)).or_default();
        if ids.contains(&tid) {
            return false;
        }
        ids.push(tid);
        self.len += 1;
        true
    }

    pub fn remove(&mut self, m: f64, tid: TupleId) -> bool {
        let k = key(m);
        let Some(ids) = self.map.get_mut(&k) else {
            return false;
        };
        let Some(pos) = ids.iter().position(|t| *t == tid) else {
            return false;
        };
        ids.swap_remove(pos);
        if ids.is_empty() {
            self.map.remove(&k);
        }
        self.len -= 1;
        true
    }

    /// Appends identifiers whose target value lies in `r`.
    pub fn collect_in(&self, r: &ValueRange, out: &mut Vec<TupleId>) {
        if r.is_point() {
            if let Some(ids) = self.map.get(&key(r.lb())) {
                out.extend_from_slice(ids);
            }
            return;
        }
        for (k, ids) in &self.map {
            if r.contains(f64::from_bits(*k)) {
                out.extend_from_slice(ids);
            }
        }
    }

    /// All entries sorted by `(m, tid)`.
    pub fn entries(&self) -> Vec<(f64, TupleId)> {
        let mut v: Vec<(f64, TupleId)> = self
            .map
            .iter()
            .flat_map(|(k, ids)| ids.iter().map(move |t| (f64::from_bits(*k), *t)))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v
    }

    pub fn memory_bytes(&self) -> usize {
        self.len * OUTLIER_ENTRY_BYTES
    }
}
