//! Tiered regression search tree over a `(target, host)` column pair.
//!
//! Leaves model `host ≈ beta * target + alpha ± epsilon` over equal-width
//! target sub-ranges and buffer the tuples the band misses. Lookups return
//! host ranges plus buffered identifiers; every indexed tuple is reachable
//! through one or the other.

mod buffer;
mod build;
mod model;
mod node;
mod params;

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use parking_lot::{Mutex, RwLock};
use serde::Serialize;

pub use buffer::{OutlierBuffer, OUTLIER_ENTRY_BYTES};
pub use build::{sample_precheck, validate_node, BuildStats, Precheck, Validation, PRECHECK_MIN_PAIRS};
pub use model::{derive_epsilon, fit_linear_model, Fit, LeafModel, ModelKind};
pub use node::{Extent, NodePath, INTERNAL_NODE_HEADER_BYTES, LEAF_NODE_BYTES};
pub use params::TrsParams;

use crate::error::{Error, Result};
use crate::memory::{MemoryReport, POINTER_BYTES};
use crate::range::{union_ranges, ValueRange};
use crate::table::{Pair, Table, TupleId};
use node::{LeafNode, Node};

/// Root pointer, full range, overflow buffer and counters.
pub const TREE_HEADER_BYTES: usize = 64;

/// Output of a tree lookup.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LookupAnswer {
    /// Sorted, pairwise-disjoint host ranges.
    pub host_ranges: Vec<ValueRange>,
    /// Sorted, de-duplicated identifiers of buffered tuples.
    pub outlier_ids: Vec<TupleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReorgAction {
    /// Rebuild an overfull leaf as a subtree.
    Split,
    /// Refit a parent whose children saw many deletions.
    Merge,
    /// Rebuild an arbitrary subtree.
    Rebuild,
    /// Rebuild the whole tree over the current target range.
    Widen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReorgTask {
    pub path: NodePath,
    pub action: ReorgAction,
}

#[derive(Debug, Clone, Copy)]
enum Mutation {
    Insert { m: f64, n: f64, tid: TupleId },
    Delete { m: f64, tid: TupleId },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ReorgStats {
    pub tasks: usize,
    pub skipped: usize,
    pub subtrees_rebuilt: usize,
    pub leaves_created: usize,
    pub pairs_scanned: usize,
    pub pending_applied: usize,
}

impl ReorgStats {
    pub fn merge(&mut self, o: &ReorgStats) {
        self.tasks += o.tasks;
        self.skipped += o.skipped;
        self.subtrees_rebuilt += o.subtrees_rebuilt;
        self.leaves_created += o.leaves_created;
        self.pairs_scanned += o.pairs_scanned;
        self.pending_applied += o.pending_applied;
    }
}

/// Where reorganization reads current pairs from.
pub trait PairSource {
    /// Live, non-null `(target, host)` pairs whose target passes `keep`.
    fn pairs_where(&self, target: usize, host: usize, keep: &mut dyn FnMut(f64) -> bool) -> Result<Vec<Pair>>;
    /// Min/max of the live target values.
    fn target_range(&self, target: usize) -> Result<Option<ValueRange>>;
}

impl PairSource for Table {
    fn pairs_where(&self, target: usize, host: usize, keep: &mut dyn FnMut(f64) -> bool) -> Result<Vec<Pair>> {
        Ok(self.project_pairs_where(target, host, keep)?.rows)
    }

    fn target_range(&self, target: usize) -> Result<Option<ValueRange>> {
        self.column_range(target)
    }
}

/// One leaf as seen by [`TrsTree::leaves`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafInfo {
    pub depth: usize,
    pub range: ValueRange,
    pub upper_closed: bool,
    pub model: LeafModel,
    pub covered: u64,
    pub deleted: u64,
    pub outliers: usize,
}

/// Model, covered count and sorted buffer of a leaf.
pub type LeafRecord = (LeafModel, u64, Vec<(f64, TupleId)>);

/// Full structural record of one node, used for equality checks.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub depth: usize,
    pub range: ValueRange,
    pub upper_closed: bool,
    pub leaf: Option<LeafRecord>,
}

struct TreeState {
    root: Node,
    full_range: ValueRange,
    /// Tuples whose target lies outside `full_range`.
    overflow: Mutex<OutlierBuffer>,
    overflow_pending: AtomicBool,
}

pub struct TrsTree {
    params: TrsParams,
    target: usize,
    host: usize,
    state: RwLock<TreeState>,
    queue: Mutex<VecDeque<ReorgTask>>,
    reorg_active: AtomicBool,
    pending: Mutex<Vec<Mutation>>,
    agent: Mutex<()>,
    live: AtomicU64,
    build_stats: BuildStats,
}

impl std::fmt::Debug for TrsTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrsTree")
            .field("target", &self.target)
            .field("host", &self.host)
            .field("params", &self.params)
            .field("build_stats", &self.build_stats)
            .finish_non_exhaustive()
    }
}

fn split_overflow(pairs: Vec<Pair>, extent: &Extent) -> (Vec<Pair>, OutlierBuffer) {
    let mut overflow = OutlierBuffer::new();
    let inside = pairs
        .into_iter()
        .filter(|p| {
            let own = extent.owns(p.m);
            if !own {
                overflow.insert(p.m, p.tid);
            }
            own
        })
        .collect();
    (inside, overflow)
}

impl TrsTree {
    /// Breadth-first construction over all live pairs of the table.
    pub fn build(table: &Table, target: usize, host: usize, full_range: ValueRange, params: TrsParams) -> Result<Self> {
        Self::construct(table, target, host, full_range, params, None)
    }

    /// Same tree as [`TrsTree::build`], with sibling subtrees built on
    /// `workers` threads.
    pub fn build_parallel(
        table: &Table,
        target: usize,
        host: usize,
        full_range: ValueRange,
        params: TrsParams,
        workers: usize,
    ) -> Result<Self> {
        if workers == 0 {
            return Err(Error::InvalidParam("workers must be >= 1".into()));
        }
        Self::construct(table, target, host, full_range, params, Some(workers))
    }

    /// Builds over the table's current target range, or a point range at 0
    /// when the table holds no target values.
    pub fn build_over_table(table: &Table, target: usize, host: usize, params: TrsParams) -> Result<Self> {
        let range = table.column_range(target)?.unwrap_or(ValueRange::point(0.0)?);
        Self::build(table, target, host, range, params)
    }

    fn construct(
        table: &Table,
        target: usize,
        host: usize,
        full_range: ValueRange,
        params: TrsParams,
        workers: Option<usize>,
    ) -> Result<Self> {
        params.validate()?;
        if target == host {
            return Err(Error::SameColumn(target));
        }
        if !full_range.is_finite() {
            return Err(Error::InvalidRange {
                lb: full_range.lb(),
                ub: full_range.ub(),
            });
        }
        let pairs = table.project_pairs_where(target, host, |_| true)?.rows;
        let live = pairs.len() as u64;
        let extent = Extent::root(full_range);
        let (inside, overflow) = split_overflow(pairs, &extent);
        let (root, build_stats) = match workers {
            None => build::build_serial(extent, 1, &[], inside, &params),
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::InvalidParam(e.to_string()))?;
                pool.install(|| build::build_recursive(extent, 1, Vec::new(), inside, &params))
            }
        };
        Ok(TrsTree {
            params,
            target,
            host,
            state: RwLock::new(TreeState {
                root,
                full_range,
                overflow: Mutex::new(overflow),
                overflow_pending: AtomicBool::new(false),
            }),
            queue: Mutex::new(VecDeque::new()),
            reorg_active: AtomicBool::new(false),
            pending: Mutex::new(Vec::new()),
            agent: Mutex::new(()),
            live: AtomicU64::new(live),
            build_stats,
        })
    }

    pub fn params(&self) -> &TrsParams {
        &self.params
    }

    pub fn target_column(&self) -> usize {
        self.target
    }

    pub fn host_column(&self) -> usize {
        self.host
    }

    pub fn build_stats(&self) -> BuildStats {
        self.build_stats
    }

    pub fn full_range(&self) -> ValueRange {
        self.state.read().full_range
    }

    pub fn is_reorganizing(&self) -> bool {
        self.reorg_active.load(Ordering::Acquire)
    }

    /// Host ranges and outlier identifiers that together cover every
    /// indexed tuple whose target value satisfies `pred`.
    pub fn lookup(&self, pred: &ValueRange) -> LookupAnswer {
        let state = self.state.read();
        let mut rs = Vec::new();
        let mut is = Vec::new();
        let mut fifo: VecDeque<&Node> = VecDeque::new();
        if state.root.extent().range.overlaps(pred) {
            fifo.push_back(&state.root);
        }
        while let Some(node) = fifo.pop_front() {
            match node {
                Node::Internal(n) => {
                    fifo.extend(n.children.iter().filter(|c| c.extent().range.overlaps(pred)));
                }
                Node::Leaf(l) => {
                    if let Some(sub) = l.extent.range.intersect(pred) {
                        if let Some(r) = l.model.host_range(&sub) {
                            rs.push(r);
                        }
                    }
                    l.outliers.lock().collect_in(pred, &mut is);
                }
            }
        }
        state.overflow.lock().collect_in(pred, &mut is);
        if self.reorg_active.load(Ordering::Acquire) {
            for m in self.pending.lock().iter() {
                if let Mutation::Insert { m, tid, .. } = *m {
                    if pred.contains(m) {
                        is.push(tid);
                    }
                }
            }
        }
        is.sort_unstable();
        is.dedup();
        LookupAnswer {
            host_ranges: union_ranges(rs),
            outlier_ids: is,
        }
    }

    /// Indexes `(m, n)` for `tid`.
    pub fn insert(&self, m: f64, n: f64, tid: TupleId) {
        self.live.fetch_add(1, Ordering::Relaxed);
        self.mutate(Mutation::Insert { m, n, tid });
    }

    /// Removes `(m, tid)`; `n` is not needed to find it.
    pub fn delete(&self, m: f64, tid: TupleId) {
        let _ = self
            .live
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |v| Some(v.saturating_sub(1)));
        self.mutate(Mutation::Delete { m, tid });
    }

    fn mutate(&self, mutation: Mutation) {
        let state = self.state.read();
        // the flag only flips under the write lock
        if self.reorg_active.load(Ordering::Acquire) {
            self.pending.lock().push(mutation);
        } else {
            self.apply(&state, mutation);
        }
    }

    fn enqueue(&self, path: NodePath, action: ReorgAction) {
        self.queue.lock().push_back(ReorgTask { path, action });
    }

    fn apply(&self, state: &TreeState, mutation: Mutation) {
        let fanout = self.params.node_fanout;
        match mutation {
            Mutation::Insert { m, n, tid } => {
                if !state.root.extent().owns(m) {
                    let len = {
                        let mut o = state.overflow.lock();
                        o.insert(m, tid);
                        o.len()
                    };
                    let live = self.live.load(Ordering::Relaxed) as f64;
                    if len as f64 > self.params.outlier_ratio * live && !state.overflow_pending.swap(true, Ordering::AcqRel)
                    {
                        self.enqueue(Vec::new(), ReorgAction::Widen);
                    }
                    return;
                }
                let (leaf, depth) = state.root.leaf_for(m, fanout);
                let covered = leaf.covered.fetch_add(1, Ordering::Relaxed) + 1;
                if leaf.model.covers(m, n) {
                    return;
                }
                let len = {
                    let mut buf = leaf.outliers.lock();
                    buf.insert(m, tid);
                    buf.len()
                };
                if depth < self.params.max_height
                    && len as f64 > self.params.outlier_ratio * covered as f64
                    && !leaf.pending.swap(true, Ordering::AcqRel)
                {
                    self.enqueue(state.root.path_for(m, fanout), ReorgAction::Split);
                }
            }
            Mutation::Delete { m, tid } => {
                if !state.root.extent().owns(m) {
                    state.overflow.lock().remove(m, tid);
                    return;
                }
                let (leaf, _) = state.root.leaf_for(m, fanout);
                leaf.outliers.lock().remove(m, tid);
                let covered = leaf
                    .covered
                    .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |v| Some(v.saturating_sub(1)))
                    .unwrap_or(0)
                    .saturating_sub(1);
                let deleted = leaf.deleted.fetch_add(1, Ordering::Relaxed) + 1;
                if deleted as f64 > self.params.delete_ratio * covered as f64 {
                    let mut path = state.root.path_for(m, fanout);
                    path.pop();
                    let parent = state.root.at(&path).expect("parent of a reachable leaf");
                    if !parent.pending_flag().swap(true, Ordering::AcqRel) {
                        self.enqueue(path, ReorgAction::Merge);
                    }
                }
            }
        }
    }

    /// Queues a rebuild of the node at `path`.
    pub fn schedule_rebuild(&self, path: &[u32]) -> Result<()> {
        let state = self.state.read();
        let node = state
            .root
            .at(path)
            .ok_or_else(|| Error::InvalidParam(format!("no node at path {path:?}")))?;
        if !node.pending_flag().swap(true, Ordering::AcqRel) {
            self.enqueue(path.to_vec(), ReorgAction::Rebuild);
        }
        Ok(())
    }

    /// Queues a rebuild of the whole tree over the current target range.
    pub fn schedule_full_rebuild(&self) {
        let state = self.state.read();
        if !state.overflow_pending.swap(true, Ordering::AcqRel) {
            self.enqueue(Vec::new(), ReorgAction::Widen);
        }
    }

    /// Queues splits for every overfull leaf below the height limit.
    pub fn schedule_overfull(&self) -> usize {
        let state = self.state.read();
        let mut paths = Vec::new();
        collect_overfull(&state.root, &mut Vec::new(), 1, &self.params, &mut paths);
        let count = paths.len();
        for p in paths {
            self.enqueue(p, ReorgAction::Split);
        }
        count
    }

    /// Drops every queued task without running it.
    pub fn clear_queue(&self) -> usize {
        let state = self.state.read();
        let tasks: Vec<ReorgTask> = self.queue.lock().drain(..).collect();
        for t in &tasks {
            if t.action == ReorgAction::Widen {
                state.overflow_pending.store(false, Ordering::Release);
            } else {
                clear_pending(&state.root, &t.path);
            }
        }
        tasks.len()
    }

    pub fn queued(&self) -> Vec<ReorgTask> {
        self.queue.lock().iter().cloned().collect()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.lock().len()
    }

    /// Drains up to `batch_limit` queued tasks, rebuilding the affected
    /// subtrees from `source`.
    ///
    /// Mutations arriving meanwhile are deferred to a pending list, which
    /// lookups also consult; the tree is locked exclusively only to flip
    /// the flag and to install the new subtrees.
    pub fn reorganize(&self, source: &dyn PairSource, batch_limit: usize) -> Result<ReorgStats> {
        let _agent = self.agent.lock();
        let mut stats = ReorgStats::default();
        let mut tasks: Vec<ReorgTask> = {
            let mut q = self.queue.lock();
            let k = batch_limit.min(q.len());
            q.drain(..k).collect()
        };
        if tasks.is_empty() {
            return Ok(stats);
        }
        stats.tasks = tasks.len();

        // Phase 1: flag on, resolve targets.
        let jobs = {
            let state = self.state.write();
            self.reorg_active.store(true, Ordering::Release);
            let widen = tasks.iter().any(|t| t.action == ReorgAction::Widen);
            if widen {
                tasks.retain(|t| t.action == ReorgAction::Widen);
                tasks.truncate(1);
            }
            tasks.sort_by(|a, b| a.path.cmp(&b.path));
            tasks.dedup_by(|b, a| a.path == b.path);
            let mut jobs: Vec<(NodePath, Extent, Option<ValueRange>)> = Vec::new();
            for t in &tasks {
                if jobs.iter().any(|(p, _, _)| t.path.starts_with(p)) {
                    clear_pending(&state.root, &t.path);
                    stats.skipped += 1;
                    continue;
                }
                if t.action == ReorgAction::Widen {
                    let range = match source.target_range(self.target) {
                        Ok(r) => r.map_or(state.full_range, |r| r.hull(&state.full_range)),
                        Err(e) => {
                            self.abort(state);
                            return Err(e);
                        }
                    };
                    jobs.push((Vec::new(), Extent::root(range), Some(range)));
                    continue;
                }
                match state.root.at(&t.path) {
                    Some(node) => {
                        let stale = t.action == ReorgAction::Split && matches!(node, Node::Internal(_));
                        if stale {
                            node.pending_flag().store(false, Ordering::Release);
                            stats.skipped += 1;
                        } else {
                            jobs.push((t.path.clone(), *node.extent(), None));
                        }
                    }
                    None => stats.skipped += 1,
                }
            }
            jobs
        };

        // Phase 2: scan and build without holding the tree lock.
        let mut built = Vec::with_capacity(jobs.len());
        for (path, extent, widen) in jobs {
            let pairs = match source.pairs_where(self.target, self.host, &mut |m| widen.is_some() || extent.owns(m)) {
                Ok(p) => p,
                Err(e) => {
                    self.abort(self.state.write());
                    return Err(e);
                }
            };
            stats.pairs_scanned += pairs.len();
            let scanned = pairs.len() as u64;
            let (node, bs) = build::build_serial(extent, path.len() + 1, &path, pairs, &self.params);
            stats.leaves_created += bs.leaves;
            built.push((path, node, widen, scanned));
        }

        // Phase 3: install, replay deferred mutations, flag off.
        let mut state = self.state.write();
        for (path, node, widen, scanned) in built {
            if let Some(range) = widen {
                state.root = node;
                state.full_range = range;
                *state.overflow.get_mut() = OutlierBuffer::new();
                state.overflow_pending.store(false, Ordering::Release);
                self.live.store(scanned, Ordering::Relaxed);
            } else if let Some(slot) = state.root.at_mut(&path) {
                *slot = node;
            }
            stats.subtrees_rebuilt += 1;
        }
        stats.pending_applied = self.finish(state);
        Ok(stats)
    }

    fn abort(&self, state: parking_lot::RwLockWriteGuard<'_, TreeState>) {
        self.finish(state);
    }

    /// Replays deferred mutations in arrival order and clears the flag. The
    /// write lock is held throughout so no direct mutation can overtake a
    /// deferred one.
    fn finish(&self, state: parking_lot::RwLockWriteGuard<'_, TreeState>) -> usize {
        let pending = std::mem::take(&mut *self.pending.lock());
        for m in &pending {
            self.apply(&state, *m);
        }
        self.reorg_active.store(false, Ordering::Release);
        pending.len()
    }

    pub fn leaves(&self) -> Vec<LeafInfo> {
        let state = self.state.read();
        let mut out = Vec::new();
        state.root.walk(1, &mut |n, depth| {
            if let Node::Leaf(l) = n {
                out.push(leaf_info(l, depth));
            }
        });
        out
    }

    /// `(leaves, internal nodes, height)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        let state = self.state.read();
        let (mut leaves, mut internal, mut height) = (0, 0, 0);
        state.root.walk(1, &mut |n, d| {
            height = height.max(d);
            match n {
                Node::Leaf(_) => leaves += 1,
                Node::Internal(_) => internal += 1,
            }
        });
        (leaves, internal, height)
    }

    /// Pre-order records of every node, including full buffer contents.
    pub fn snapshot(&self) -> Vec<NodeRecord> {
        let state = self.state.read();
        let mut out = Vec::new();
        state.root.walk(1, &mut |n, depth| {
            let e = n.extent();
            out.push(NodeRecord {
                depth,
                range: e.range,
                upper_closed: e.upper_closed,
                leaf: match n {
                    Node::Leaf(l) => Some((l.model, l.covered(), l.outliers.lock().entries())),
                    Node::Internal(_) => None,
                },
            });
        });
        out
    }

    /// One line per node in pre-order.
    pub fn stats_dump(&self) -> String {
        let state = self.state.read();
        let mut s = String::new();
        state.root.walk(1, &mut |n, depth| {
            let e = n.extent();
            let close = if e.upper_closed { ']' } else { ')' };
            match n {
                Node::Internal(i) => {
                    let _ = writeln!(
                        s,
                        "depth={depth} kind=internal range=[{},{}{close} children={}",
                        e.range.lb(),
                        e.range.ub(),
                        i.children.len()
                    );
                }
                Node::Leaf(l) => {
                    let kind = match l.model.kind {
                        ModelKind::Empty => "empty",
                        ModelKind::Degenerate => "degenerate",
                        ModelKind::Linear => "linear",
                    };
                    let _ = writeln!(
                        s,
                        "depth={depth} kind=leaf model={kind} range=[{},{}{close} beta={} alpha={} epsilon={} covered={} buffer={}",
                        e.range.lb(),
                        e.range.ub(),
                        l.model.beta,
                        l.model.alpha,
                        l.model.epsilon,
                        l.covered(),
                        l.outliers.lock().len()
                    );
                }
            }
        });
        let _ = writeln!(s, "overflow={}", state.overflow.lock().len());
        s
    }

    /// `trs_nodes` (structure) and `outlier_buffers` (buffered entries).
    pub fn memory_report(&self) -> MemoryReport {
        let state = self.state.read();
        let fanout = self.params.node_fanout;
        let (mut nodes, mut buffers) = (TREE_HEADER_BYTES, 0);
        state.root.walk(1, &mut |n, _| match n {
            Node::Leaf(l) => {
                nodes += LEAF_NODE_BYTES;
                buffers += l.outliers.lock().memory_bytes();
            }
            Node::Internal(_) => nodes += INTERNAL_NODE_HEADER_BYTES + POINTER_BYTES * fanout,
        });
        buffers += state.overflow.lock().memory_bytes();
        let mut r = MemoryReport::new();
        r.add("trs_nodes", nodes);
        r.add("outlier_buffers", buffers);
        r
    }
}

fn leaf_info(l: &LeafNode, depth: usize) -> LeafInfo {
    LeafInfo {
        depth,
        range: l.extent.range,
        upper_closed: l.extent.upper_closed,
        model: l.model,
        covered: l.covered(),
        deleted: l.deleted.load(Ordering::Relaxed),
        outliers: l.outliers.lock().len(),
    }
}

fn clear_pending(root: &Node, path: &[u32]) {
    if let Some(n) = root.at(path) {
        n.pending_flag().store(false, Ordering::Release);
    }
}

fn collect_overfull(node: &Node, path: &mut Vec<u32>, depth: usize, params: &TrsParams, out: &mut Vec<NodePath>) {
    match node {
        Node::Leaf(l) => {
            let over = l.outliers.lock().len() as f64 > params.outlier_ratio * l.covered() as f64;
            if depth < params.max_height && over && !l.pending.swap(true, Ordering::AcqRel) {
                out.push(path.clone());
            }
        }
        Node::Internal(n) => {
            for (i, c) in n.children.iter().enumerate() {
                path.push(i as u32);
                collect_overfull(c, path, depth + 1, params, out);
                path.pop();
            }
        }
    }
}
