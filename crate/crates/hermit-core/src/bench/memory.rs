use serde::{Deserialize, Serialize};

use super::{index_columns, register_indexes, REPORT_SCHEMA_VERSION};
use crate::engine::{Engine, IndexKind};
use crate::error::{Error, Result};
use crate::memory::MemoryReport;
use crate::table::Table;
use crate::trs::TrsParams;

/// Engine memory grouped by structure. The fields sum to `total`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBreakdown {
    /// Column storage, validity bitmaps, tombstones and headers.
    pub base_table: usize,
    pub primary_index: usize,
    pub host_index: usize,
    /// TRS-Tree nodes and tree headers, excluding outlier buffers.
    pub trs_nodes: usize,
    pub outlier_buffers: usize,
    pub baseline_index: usize,
    pub correlation_map: usize,
    pub total: usize,
}

impl MemoryBreakdown {
    pub fn from_report(r: &MemoryReport) -> Self {
        let mut b = MemoryBreakdown::default();
        for c in &r.components {
            let slot = match c.name.as_str() {
                "primary_index" => &mut b.primary_index,
                "host_index" => &mut b.host_index,
                "trs_nodes" => &mut b.trs_nodes,
                "outlier_buffers" => &mut b.outlier_buffers,
                "baseline_index" => &mut b.baseline_index,
                "correlation_map" => &mut b.correlation_map,
                _ => &mut b.base_table,
            };
            *slot += c.bytes;
        }
        b.total = r.total();
        b
    }

    pub fn components_sum(&self) -> usize {
        self.base_table
            + self.primary_index
            + self.host_index
            + self.trs_nodes
            + self.outlier_buffers
            + self.baseline_index
            + self.correlation_map
    }

    /// Bytes spent on secondary structures beyond the base table, its
    /// primary index and the host indexes.
    pub fn secondary(&self) -> usize {
        self.trs_nodes + self.outlier_buffers + self.baseline_index + self.correlation_map
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPoint {
    pub kind: IndexKind,
    pub indexes: usize,
    pub memory: MemoryBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryScaling {
    pub schema_version: u32,
    pub rows: usize,
    pub params: TrsParams,
    pub cm_widths: (f64, f64),
    pub points: Vec<MemoryPoint>,
}

impl MemoryScaling {
    pub fn point(&self, kind: IndexKind, indexes: usize) -> Option<&MemoryPoint> {
        self.points.iter().find(|p| p.kind == kind && p.indexes == indexes)
    }
}

/// Memory after registering 1, 2, ..., `max_indexes` indexes of each kind
/// on copies of `table`.
pub fn memory_scaling(
    table: &Table,
    kinds: &[IndexKind],
    max_indexes: usize,
    params: &TrsParams,
    cm_widths: (f64, f64),
) -> Result<MemoryScaling> {
    if max_indexes == 0 {
        return Err(Error::InvalidParam("at least one index is required".into()));
    }
    params.validate()?;
    let pairs = index_columns(table, None, None, max_indexes)?;
    let mut points = Vec::new();
    for &kind in kinds {
        let engine = Engine::new(table.clone());
        for (i, pair) in pairs.iter().enumerate() {
            register_indexes(&engine, kind, std::slice::from_ref(pair), params, cm_widths)?;
            points.push(MemoryPoint {
                kind,
                indexes: i + 1,
                memory: MemoryBreakdown::from_report(&engine.memory_report()),
            });
        }
    }
    Ok(MemoryScaling {
        schema_version: REPORT_SCHEMA_VERSION,
        rows: table.live_count(),
        params: params.clone(),
        cm_widths,
        points,
    })
}
