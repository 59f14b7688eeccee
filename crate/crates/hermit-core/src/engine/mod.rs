//! Exact lookups on top of approximate and complete secondary structures.
//!
//! Every lookup runs the same four steps: the index answers with host
//! ranges and/or identifiers, host ranges are scanned on the host index,
//! logical identifiers are resolved through the primary index, and the
//! fetched rows are checked against the original predicates.

mod agent;

pub use agent::ReorgAgent;

use std::collections::HashMap;
use std::ops::Bound;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::baselines::{CompleteSecondaryIndex, CorrelationMap};
use crate::error::{Error, Result};
use crate::memory::MemoryReport;
use crate::ordered_index::OrderedIndex;
use crate::range::ValueRange;
use crate::table::{IdScheme, Pair, Table, TupleId, Value};
use crate::trs::{PairSource, ReorgStats, TrsParams, TrsTree};

pub type IndexId = usize;
pub type Row = Vec<Value>;

/// Range condition on one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Predicate {
    pub column: usize,
    pub range: ValueRange,
}

impl Predicate {
    pub fn new(column: usize, range: ValueRange) -> Self {
        Predicate { column, range }
    }

    fn matches(&self, row: &[Value]) -> bool {
        row[self.column].as_f64().is_some_and(|v| self.range.contains(v))
    }

    fn matches_slot(&self, table: &Table, slot: usize) -> bool {
        table.value_f64(self.column, slot).is_some_and(|v| self.range.contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Hermit,
    Baseline,
    Cm,
}

impl IndexKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Hermit => "hermit",
            IndexKind::Baseline => "baseline",
            IndexKind::Cm => "cm",
        }
    }
}

type SharedIndex = Arc<RwLock<OrderedIndex>>;

pub struct HermitIndex {
    pub trs: TrsTree,
    host_index: SharedIndex,
}

struct CmIndex {
    cm: RwLock<CorrelationMap>,
    host_index: SharedIndex,
}

enum Structure {
    Hermit(Box<HermitIndex>),
    Baseline(RwLock<CompleteSecondaryIndex>),
    Cm(CmIndex),
}

struct IndexSlot {
    target: usize,
    host: Option<usize>,
    structure: Structure,
}

impl IndexSlot {
    fn kind(&self) -> IndexKind {
        match self.structure {
            Structure::Hermit(_) => IndexKind::Hermit,
            Structure::Baseline(_) => IndexKind::Baseline,
            Structure::Cm(_) => IndexKind::Cm,
        }
    }
}

/// Registered index as reported by [`Engine::indexes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexInfo {
    pub id: IndexId,
    pub kind: IndexKind,
    pub target: usize,
    pub host: Option<usize>,
}

/// Per-step costs of one lookup.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LookupMetrics {
    /// Step 1: the index structure itself.
    pub index_time: Duration,
    /// Step 2: host-index scans (zero for the complete index).
    pub host_time: Duration,
    /// Step 3: primary-index resolution; `None` under physical identifiers.
    pub primary_time: Option<Duration>,
    /// Step 4: fetch and validation.
    pub fetch_time: Duration,
    pub host_ranges: usize,
    pub outlier_ids: usize,
    /// Distinct identifiers entering step 3.
    pub candidates: usize,
    pub results: usize,
    /// Candidates whose tuple was deleted or never resolved.
    pub unresolved: usize,
}

impl LookupMetrics {
    pub fn false_positives(&self) -> usize {
        self.candidates - self.results
    }

    /// `(candidates - results) / candidates`, or 0 without candidates.
    pub fn false_positive_ratio(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.false_positives() as f64 / self.candidates as f64
        }
    }
}

/// Per-structure costs of one insert or delete.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MutationMetrics {
    pub table_time: Duration,
    /// Complete host indexes.
    pub host_time: Duration,
    /// Registered secondary structures.
    pub index_time: Duration,
}

/// Reads the shared table one projection at a time.
struct LockedTable<'a>(&'a RwLock<Table>);

impl PairSource for LockedTable<'_> {
    fn pairs_where(&self, target: usize, host: usize, keep: &mut dyn FnMut(f64) -> bool) -> Result<Vec<Pair>> {
        self.0.read().pairs_where(target, host, keep)
    }

    fn target_range(&self, target: usize) -> Result<Option<ValueRange>> {
        self.0.read().column_range(target)
    }
}

/// Base table plus every registered secondary structure.
///
/// Lookups may run from any number of threads. Mutations go through one
/// writer lane; no lock is held across steps of a lookup.
pub struct Engine {
    table: RwLock<Table>,
    hosts: RwLock<HashMap<usize, SharedIndex>>,
    indexes: RwLock<Vec<Arc<IndexSlot>>>,
    writer: Mutex<()>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("rows", &self.table.read().live_count())
            .field("indexes", &self.indexes())
            .finish()
    }
}

impl Engine {
    pub fn new(table: Table) -> Self {
        Engine {
            table: RwLock::new(table),
            hosts: RwLock::new(HashMap::new()),
            indexes: RwLock::new(Vec::new()),
            writer: Mutex::new(()),
        }
    }

    /// Shared read access to the base table.
    pub fn table(&self) -> parking_lot::RwLockReadGuard<'_, Table> {
        self.table.read()
    }

    pub fn id_scheme(&self) -> IdScheme {
        self.table.read().id_scheme()
    }

    /// Builds (or returns) the complete index on `column`.
    pub fn ensure_host_index(&self, column: usize) -> Result<()> {
        self.host_index_for(column).map(|_| ())
    }

    pub fn host_columns(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.hosts.read().keys().copied().collect();
        v.sort_unstable();
        v
    }

    fn host_index_for(&self, column: usize) -> Result<SharedIndex> {
        let _w = self.writer.lock();
        if let Some(h) = self.hosts.read().get(&column) {
            return Ok(h.clone());
        }
        let table = self.table.read();
        table.check_column(column)?;
        let idx = Arc::new(RwLock::new(OrderedIndex::build(&table, column)));
        self.hosts.write().insert(column, idx.clone());
        Ok(idx)
    }

    fn register(&self, slot: IndexSlot) -> IndexId {
        let mut idx = self.indexes.write();
        idx.push(Arc::new(slot));
        idx.len() - 1
    }

    /// Builds a TRS-Tree from `target` to `host`, creating the host index
    /// when it does not exist yet.
    pub fn create_hermit_index(&self, target: usize, host: usize, params: TrsParams) -> Result<IndexId> {
        self.create_hermit_index_with(target, host, params, 1)
    }

    /// As [`Engine::create_hermit_index`], building on `workers` threads.
    pub fn create_hermit_index_with(
        &self,
        target: usize,
        host: usize,
        params: TrsParams,
        workers: usize,
    ) -> Result<IndexId> {
        self.create_hermit_index_over(target, host, None, params, workers)
    }

    /// As [`Engine::create_hermit_index_with`], with the root modelling
    /// `range` instead of the current target-column range.
    pub fn create_hermit_index_over(
        &self,
        target: usize,
        host: usize,
        range: Option<ValueRange>,
        params: TrsParams,
        workers: usize,
    ) -> Result<IndexId> {
        if target == host {
            return Err(Error::SameColumn(target));
        }
        self.table.read().check_column(target)?;
        let host_index = self.host_index_for(host)?;
        let _w = self.writer.lock();
        let trs = {
            let table = self.table.read();
            let range = match range {
                Some(r) => r,
                None => table.column_range(target)?.unwrap_or(ValueRange::point(0.0)?),
            };
            if workers > 1 {
                TrsTree::build_parallel(&table, target, host, range, params, workers)?
            } else {
                TrsTree::build(&table, target, host, range, params)?
            }
        };
        Ok(self.register(IndexSlot {
            target,
            host: Some(host),
            structure: Structure::Hermit(Box::new(HermitIndex { trs, host_index })),
        }))
    }

    pub fn create_baseline_index(&self, target: usize) -> Result<IndexId> {
        let _w = self.writer.lock();
        let idx = CompleteSecondaryIndex::build(&self.table.read(), target)?;
        Ok(self.register(IndexSlot {
            target,
            host: None,
            structure: Structure::Baseline(RwLock::new(idx)),
        }))
    }

    pub fn create_cm_index(&self, target: usize, host: usize, target_width: f64, host_width: f64) -> Result<IndexId> {
        if target == host {
            return Err(Error::SameColumn(target));
        }
        self.table.read().check_column(target)?;
        let host_index = self.host_index_for(host)?;
        let _w = self.writer.lock();
        let cm = CorrelationMap::build(&self.table.read(), target, host, target_width, host_width)?;
        Ok(self.register(IndexSlot {
            target,
            host: Some(host),
            structure: Structure::Cm(CmIndex {
                cm: RwLock::new(cm),
                host_index,
            }),
        }))
    }

    pub fn indexes(&self) -> Vec<IndexInfo> {
        self.indexes
            .read()
            .iter()
            .enumerate()
            .map(|(id, s)| IndexInfo {
                id,
                kind: s.kind(),
                target: s.target,
                host: s.host,
            })
            .collect()
    }

    fn slot(&self, id: IndexId) -> Result<Arc<IndexSlot>> {
        self.indexes.read().get(id).cloned().ok_or(Error::UnknownIndex(id))
    }

    /// Runs `f` against the TRS-Tree of a HERMIT index.
    pub fn with_trs<R>(&self, id: IndexId, f: impl FnOnce(&TrsTree) -> R) -> Result<R> {
        let slot = self.slot(id)?;
        match &slot.structure {
            Structure::Hermit(h) => Ok(f(&h.trs)),
            _ => Err(Error::InvalidParam(format!("index {id} is not a hermit index"))),
        }
    }

    /// Inserts a row and maintains every index.
    pub fn insert(&self, values: &[Value]) -> Result<TupleId> {
        self.insert_with_metrics(values).map(|(tid, _)| tid)
    }

    pub fn insert_with_metrics(&self, values: &[Value]) -> Result<(TupleId, MutationMetrics)> {
        let _w = self.writer.lock();
        let mut metrics = MutationMetrics::default();
        let t = Instant::now();
        let tid = self.table.write().insert(values)?;
        metrics.table_time = t.elapsed();
        let t = Instant::now();
        let value = |c: usize| values[c].as_f64();
        for (&col, idx) in self.hosts.read().iter() {
            if let Some(v) = value(col) {
                idx.write().insert(v, tid);
            }
        }
        metrics.host_time = t.elapsed();
        let t = Instant::now();
        for slot in self.indexes.read().iter() {
            let m = value(slot.target);
            match &slot.structure {
                Structure::Hermit(h) => {
                    if let (Some(m), Some(n)) = (m, value(h.trs.host_column())) {
                        h.trs.insert(m, n, tid);
                    }
                }
                Structure::Baseline(b) => {
                    if let Some(m) = m {
                        b.write().insert(m, tid);
                    }
                }
                Structure::Cm(c) => {
                    if let (Some(m), Some(n)) = (m, slot.host.and_then(value)) {
                        c.cm.write().insert(m, n);
                    }
                }
            }
        }
        metrics.index_time = t.elapsed();
        Ok((tid, metrics))
    }

    /// Deletes the row with primary key `key` and maintains every index.
    pub fn delete(&self, key: i64) -> Result<TupleId> {
        self.delete_with_metrics(key).map(|(tid, _)| tid)
    }

    pub fn delete_with_metrics(&self, key: i64) -> Result<(TupleId, MutationMetrics)> {
        let _w = self.writer.lock();
        let mut metrics = MutationMetrics::default();
        let t = Instant::now();
        let (tid, row) = {
            let mut table = self.table.write();
            let slot = table.slot_of_key(key).ok_or(Error::KeyNotFound(key))?;
            let row = table.row(slot);
            (table.delete(key)?, row)
        };
        metrics.table_time = t.elapsed();
        let t = Instant::now();
        let value = |c: usize| row[c].as_f64();
        for (&col, idx) in self.hosts.read().iter() {
            if let Some(v) = value(col) {
                idx.write().remove(v, tid);
            }
        }
        metrics.host_time = t.elapsed();
        let t = Instant::now();
        for slot in self.indexes.read().iter() {
            let m = value(slot.target);
            match &slot.structure {
                Structure::Hermit(h) => {
                    if let (Some(m), Some(_)) = (m, value(h.trs.host_column())) {
                        h.trs.delete(m, tid);
                    }
                }
                Structure::Baseline(b) => {
                    if let Some(m) = m {
                        b.write().remove(m, tid);
                    }
                }
                Structure::Cm(c) => {
                    if let (Some(m), Some(n)) = (m, slot.host.and_then(value)) {
                        c.cm.write().delete(m, n);
                    }
                }
            }
        }
        metrics.index_time = t.elapsed();
        Ok((tid, metrics))
    }

    /// Exact rows whose target column satisfies `range` (and `second`, when
    /// given), found through index `id`.
    pub fn lookup(&self, id: IndexId, range: &ValueRange, second: Option<&Predicate>) -> Result<Vec<Row>> {
        self.lookup_with_metrics(id, range, second).map(|(rows, _)| rows)
    }

    pub fn lookup_with_metrics(
        &self,
        id: IndexId,
        range: &ValueRange,
        second: Option<&Predicate>,
    ) -> Result<(Vec<Row>, LookupMetrics)> {
        let slot = self.slot(id)?;
        let mut metrics = LookupMetrics::default();

        // Step 1
        let t = Instant::now();
        let (spans, mut ids, host_index) = match &slot.structure {
            Structure::Hermit(h) => {
                let ans = h.trs.lookup(range);
                let spans: Vec<(Bound<f64>, Bound<f64>)> = ans
                    .host_ranges
                    .iter()
                    .map(|r| (Bound::Included(r.lb()), Bound::Included(r.ub())))
                    .collect();
                metrics.outlier_ids = ans.outlier_ids.len();
                (spans, ans.outlier_ids, Some(&h.host_index))
            }
            Structure::Cm(c) => {
                let spans = c
                    .cm
                    .read()
                    .host_spans(range)
                    .into_iter()
                    .map(|(lo, hi)| (Bound::Included(lo), Bound::Excluded(hi)))
                    .collect();
                (spans, Vec::new(), Some(&c.host_index))
            }
            Structure::Baseline(b) => (Vec::new(), b.read().lookup(range), None),
        };
        metrics.index_time = t.elapsed();
        metrics.host_ranges = spans.len();

        // Step 2
        if let Some(host) = host_index {
            let t = Instant::now();
            let host = host.read();
            for (lo, hi) in spans {
                ids.extend(host.scan_bounds(lo, hi));
            }
            drop(host);
            ids.sort_unstable();
            ids.dedup();
            metrics.host_time = t.elapsed();
        }
        metrics.candidates = ids.len();

        let table = self.table.read();
        // Step 3
        let slots: Vec<Option<usize>> = match table.id_scheme() {
            IdScheme::Logical => {
                let t = Instant::now();
                let s = ids.iter().map(|&tid| table.resolve(tid).ok()).collect();
                metrics.primary_time = Some(t.elapsed());
                s
            }
            IdScheme::Physical => Vec::new(),
        };

        // Step 4
        let t = Instant::now();
        let target = Predicate::new(slot.target, *range);
        let mut rows = Vec::new();
        for (i, &tid) in ids.iter().enumerate() {
            let s = match table.id_scheme() {
                IdScheme::Logical => slots[i],
                IdScheme::Physical => table.resolve(tid).ok(),
            };
            let Some(s) = s else {
                metrics.unresolved += 1;
                continue;
            };
            if target.matches_slot(&table, s) && second.is_none_or(|p| p.matches_slot(&table, s)) {
                rows.push(table.row(s));
            }
        }
        metrics.fetch_time = t.elapsed();
        metrics.results = rows.len();
        Ok((rows, metrics))
    }

    /// Brute-force reference: every live row satisfying all predicates.
    pub fn scan_oracle(&self, preds: &[Predicate]) -> Vec<Row> {
        let table = self.table.read();
        table
            .live_slots()
            .map(|s| table.row(s))
            .filter(|r| preds.iter().all(|p| p.matches(r)))
            .collect()
    }

    /// Drains up to `batch_limit` queued tasks on every HERMIT index.
    pub fn reorganize(&self, batch_limit: usize) -> Result<ReorgStats> {
        let slots: Vec<Arc<IndexSlot>> = self.indexes.read().clone();
        let mut total = ReorgStats::default();
        for slot in slots {
            if let Structure::Hermit(h) = &slot.structure {
                total.merge(&h.trs.reorganize(&LockedTable(&self.table), batch_limit)?);
            }
        }
        Ok(total)
    }

    /// Queues splits of every overfull leaf, then drains all queues.
    pub fn force_reorganize(&self) -> Result<ReorgStats> {
        for slot in self.indexes.read().iter() {
            if let Structure::Hermit(h) = &slot.structure {
                h.trs.schedule_overfull();
            }
        }
        self.reorganize(usize::MAX)
    }

    /// Rebuilds correlation maps from live rows, dropping stale mappings.
    pub fn rebuild_correlation_maps(&self) -> Result<()> {
        let _w = self.writer.lock();
        let table = self.table.read();
        for slot in self.indexes.read().iter() {
            if let Structure::Cm(c) = &slot.structure {
                c.cm.write().rebuild(&table)?;
            }
        }
        Ok(())
    }

    /// Table structures, host indexes and every secondary structure.
    pub fn memory_report(&self) -> MemoryReport {
        let mut r = self.table.read().memory_report();
        let host: usize = self.hosts.read().values().map(|h| h.read().memory_bytes()).sum();
        r.add("host_index", host);
        r.add("trs_nodes", 0);
        r.add("outlier_buffers", 0);
        r.add("baseline_index", 0);
        r.add("correlation_map", 0);
        for slot in self.indexes.read().iter() {
            match &slot.structure {
                Structure::Hermit(h) => r.merge(&h.trs.memory_report()),
                Structure::Baseline(b) => r.add("baseline_index", b.read().memory_bytes()),
                Structure::Cm(c) => r.add("correlation_map", c.cm.read().memory_bytes()),
            }
        }
        r
    }
}
