//! Deterministic memory accounting.
//!
//! Sizes are computed from element counts with fixed per-structure layouts,
//! not from allocator statistics, so two runs over the same data always
//! report the same byte counts.

use serde::{Deserialize, Serialize};

/// Entries held by one leaf of the modelled ordered map.
pub const MAP_LEAF_CAPACITY: usize = 11;
/// Child pointers per internal node of the modelled ordered map.
pub const MAP_FANOUT: usize = 12;
/// Per-node bookkeeping (parent pointer, lengths).
pub const MAP_NODE_HEADER: usize = 16;
pub const POINTER_BYTES: usize = 8;

/// Bytes used by an ordered map (B-tree layout, densely packed) holding
/// `entries` entries of `entry_bytes` each.
pub fn ordered_map_bytes(entries: usize, entry_bytes: usize) -> usize {
    if entries == 0 {
        return 0;
    }
    let leaves = entries.div_ceil(MAP_LEAF_CAPACITY);
    let mut internal = 0;
    let mut level = leaves;
    while level > 1 {
        level = level.div_ceil(MAP_FANOUT);
        internal += level;
    }
    entries * entry_bytes
        + leaves * MAP_NODE_HEADER
        + internal * (MAP_NODE_HEADER + MAP_FANOUT * POINTER_BYTES)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryComponent {
    pub name: String,
    pub bytes: usize,
}

/// Named byte counts whose sum is the reported total.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub components: Vec<MemoryComponent>,
    /// Fanout assumed for ordered-map accounting.
    pub ordered_map_fanout: usize,
}

impl MemoryReport {
    pub fn new() -> Self {
        MemoryReport {
            components: Vec::new(),
            ordered_map_fanout: MAP_FANOUT,
        }
    }

    /// Adds `bytes` to the component `name`, creating it if needed.
    pub fn add(&mut self, name: &str, bytes: usize) {
        match self.components.iter_mut().find(|c| c.name == name) {
            Some(c) => c.bytes += bytes,
            None => self.components.push(MemoryComponent {
                name: name.to_string(),
                bytes,
            }),
        }
    }

    pub fn merge(&mut self, other: &MemoryReport) {
        for c in &other.components {
            self.add(&c.name, c.bytes);
        }
    }

    pub fn get(&self, name: &str) -> usize {
        self.components
            .iter()
            .find(|c| c.name == name)
            .map_or(0, |c| c.bytes)
    }

    pub fn total(&self) -> usize {
        self.components.iter().map(|c| c.bytes).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_accounting() {
        assert_eq!(ordered_map_bytes(0, 16), 0);
        // one leaf, no internal nodes
        assert_eq!(ordered_map_bytes(11, 16), 11 * 16 + MAP_NODE_HEADER);
        // 12 leaves -> one root
        let twelve = ordered_map_bytes(132, 16);
        assert_eq!(
            twelve,
            132 * 16 + 12 * MAP_NODE_HEADER + MAP_NODE_HEADER + MAP_FANOUT * 8
        );
    }

    #[test]
    fn components_sum_to_total() {
        let mut r = MemoryReport::new();
        r.add("a", 10);
        r.add("b", 5);
        r.add("a", 1);
        assert_eq!(r.get("a"), 11);
        assert_eq!(r.total(), 16);
    }
}
