use std::collections::BTreeSet;
use std::ops::Bound;

use ordered_float::OrderedFloat;

use crate::memory::ordered_map_bytes;
use crate::range::ValueRange;
use crate::table::{Table, TupleId};

/// Key (8 bytes) plus tuple identifier (8 bytes).
pub const ORDERED_ENTRY_BYTES: usize = 16;

/// Complete ordered index from a column value to tuple identifiers.
///
/// Duplicate keys are stored as distinct `(key, tid)` entries, so a range scan
/// returns one identifier per indexed row.
#[derive(Debug, Clone, Default)]
pub struct OrderedIndex {
    entries: BTreeSet<(OrderedFloat<f64>, TupleId)>,
}

impl OrderedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Indexes every live, non-null value of `col`.
    pub fn build(table: &Table, col: usize) -> Self {
        let entries = table
            .live_slots()
            .filter_map(|s| {
                table
                    .value_f64(col, s)
                    .map(|v| (OrderedFloat(v), table.tuple_id(s)))
            })
            .collect();
        OrderedIndex { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: f64, tid: TupleId) -> bool {
        self.entries.insert((OrderedFloat(key), tid))
    }

    pub fn remove(&mut self, key: f64, tid: TupleId) -> bool {
        self.entries.remove(&(OrderedFloat(key), tid))
    }

    /// Identifiers whose key lies in the closed range.
    pub fn scan(&self, range: &ValueRange) -> impl Iterator<Item = TupleId> + '_ {
        self.scan_bounds(Bound::Included(range.lb()), Bound::Included(range.ub()))
    }

    pub fn scan_bounds(&self, lo: Bound<f64>, hi: Bound<f64>) -> impl Iterator<Item = TupleId> + '_ {
        let lo = match lo {
            Bound::Included(v) => Bound::Included((OrderedFloat(v), TupleId::MIN)),
            Bound::Excluded(v) => Bound::Excluded((OrderedFloat(v), TupleId::MAX)),
            Bound::Unbounded => Bound::Unbounded,
        };
        let hi = match hi {
            Bound::Included(v) => Bound::Included((OrderedFloat(v), TupleId::MAX)),
            Bound::Excluded(v) => Bound::Excluded((OrderedFloat(v), TupleId::MIN)),
            Bound::Unbounded => Bound::Unbounded,
        };
        // BTreeSet::range panics on inverted bounds
        let empty = match (&lo, &hi) {
            (Bound::Included(a) | Bound::Excluded(a), Bound::Included(b) | Bound::Excluded(b)) => {
                a > b || (a == b && !(matches!(lo, Bound::Included(_)) && matches!(hi, Bound::Included(_))))
            }
            _ => false,
        };
        let iter = (!empty).then(|| self.entries.range((lo, hi)).map(|(_, t)| *t));
        iter.into_iter().flatten()
    }

    pub fn memory_bytes(&self) -> usize {
        ordered_map_bytes(self.entries.len(), ORDERED_ENTRY_BYTES)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::SlotLocation;

    fn tid(s: usize) -> TupleId {
        TupleId::Physical(SlotLocation::from_slot(s))
    }

    #[test]
    fn duplicates_and_bounds() {
        let mut idx = OrderedIndex::new();
        idx.insert(5.0, tid(0));
        idx.insert(5.0, tid(1));
        idx.insert(7.0, tid(2));
        idx.insert(-0.0, tid(3));
        let r = |a, b| ValueRange::new(a, b).unwrap();
        assert_eq!(idx.scan(&r(5.0, 5.0)).count(), 2);
        assert_eq!(idx.scan(&r(5.0, 7.0)).count(), 3);
        assert_eq!(idx.scan(&r(6.0, 6.5)).count(), 0);
        assert_eq!(idx.scan(&r(0.0, 0.0)).count(), 1);
        assert_eq!(
            idx.scan_bounds(Bound::Included(5.0), Bound::Excluded(7.0)).count(),
            2
        );
        assert_eq!(
            idx.scan_bounds(Bound::Excluded(5.0), Bound::Excluded(5.0)).count(),
            0
        );
        assert!(idx.remove(5.0, tid(1)));
        assert_eq!(idx.scan(&r(5.0, 5.0)).collect::<Vec<_>>(), vec![tid(0)]);
    }
}
