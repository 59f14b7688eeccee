use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::memory::ordered_map_bytes;
use crate::range::ValueRange;
use crate::table::Table;

/// Target-bucket key plus the list header of its host buckets.
pub const CM_MAP_ENTRY_BYTES: usize = 32;
/// One host-bucket ordinal.
pub const CM_LIST_ENTRY_BYTES: usize = 8;

/// Bucket-level mapping from target values to host values.
///
/// Invariant: for every indexed pair `(m, n)`, `bucket(n)` is listed under
/// `bucket(m)`. Deletions never remove mappings, so the invariant survives
/// them at the cost of stale entries until [`CorrelationMap::rebuild`].
#[derive(Debug, Clone)]
pub struct CorrelationMap {
    target: usize,
    host: usize,
    target_width: f64,
    host_width: f64,
    /// Target bucket to sorted, distinct host buckets.
    mapping: BTreeMap<i64, Vec<i64>>,
}

fn bucket(v: f64, width: f64) -> i64 {
    (v / width).floor() as i64
}

impl CorrelationMap {
    pub fn new(target: usize, host: usize, target_width: f64, host_width: f64) -> Result<Self> {
        for w in [target_width, host_width] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParam(format!("bucket width must be positive, got {w}")));
            }
        }
        if target == host {
            return Err(Error::SameColumn(target));
        }
        Ok(CorrelationMap {
            target,
            host,
            target_width,
            host_width,
            mapping: BTreeMap::new(),
        })
    }

    pub fn build(table: &Table, target: usize, host: usize, target_width: f64, host_width: f64) -> Result<Self> {
        let mut cm = Self::new(target, host, target_width, host_width)?;
        cm.rebuild(table)?;
        Ok(cm)
    }

    /// Recomputes the mapping from live rows, dropping stale entries.
    pub fn rebuild(&mut self, table: &Table) -> Result<()> {
        self.mapping.clear();
        for p in table.project_pairs_where(self.target, self.host, |_| true)?.rows {
            self.insert(p.m, p.n);
        }
        Ok(())
    }

    pub fn target_column(&self) -> usize {
        self.target
    }

    pub fn host_column(&self) -> usize {
        self.host
    }

    pub fn widths(&self) -> (f64, f64) {
        (self.target_width, self.host_width)
    }

    pub fn insert(&mut self, m: f64, n: f64) {
        let hb = bucket(n, self.host_width);
        let list = self.mapping.entry(bucket(m, self.target_width)).or_default();
        if let Err(pos) = list.binary_search(&hb) {
            list.insert(pos, hb);
        }
    }

    /// Conservative: mappings are kept.
    pub fn delete(&mut self, _m: f64, _n: f64) {}

    /// Whether `bucket(n)` is mapped from `bucket(m)`.
    pub fn maps(&self, m: f64, n: f64) -> bool {
        self.mapping
            .get(&bucket(m, self.target_width))
            .is_some_and(|l| l.binary_search(&bucket(n, self.host_width)).is_ok())
    }

    /// Half-open host intervals `[lo, hi)` covering every host bucket mapped
    /// from a target bucket that intersects `pred`. Adjacent buckets merge.
    pub fn host_spans(&self, pred: &ValueRange) -> Vec<(f64, f64)> {
        // float-to-int casts saturate, so infinite bounds map to the extremes
        let lo = bucket(pred.lb(), self.target_width);
        let hi = bucket(pred.ub(), self.target_width);
        let mut hbs: Vec<i64> = self
            .mapping
            .range(lo..=hi)
            .flat_map(|(_, l)| l.iter().copied())
            .collect();
        hbs.sort_unstable();
        hbs.dedup();
        let mut spans: Vec<(i64, i64)> = Vec::new();
        for b in hbs {
            match spans.last_mut() {
                Some((_, end)) if *end + 1 == b => *end = b,
                _ => spans.push((b, b)),
            }
        }
        spans
            .into_iter()
            .map(|(a, b)| (a as f64 * self.host_width, (b + 1) as f64 * self.host_width))
            .collect()
    }

    pub fn bucket_count(&self) -> usize {
        self.mapping.len()
    }

    pub fn memory_bytes(&self) -> usize {
        let lists: usize = self.mapping.values().map(Vec::len).sum();
        ordered_map_bytes(self.mapping.len(), CM_MAP_ENTRY_BYTES) + lists * CM_LIST_ENTRY_BYTES
    }
}
