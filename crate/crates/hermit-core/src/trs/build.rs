//! Top-down construction: fit, validate, split on rejection.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::buffer::OutlierBuffer;
use super::model::{derive_epsilon, LeafModel, ModelKind};
use super::node::{Extent, InternalNode, LeafNode, Node};
use super::params::TrsParams;
use crate::table::Pair;

/// Below this many pairs the sampling precheck always answers `Unknown`.
pub const PRECHECK_MIN_PAIRS: usize = 32;

#[derive(Debug)]
pub enum Validation {
    Accepted(OutlierBuffer),
    /// Stopped once `outliers` exceeded the threshold after `scanned` pairs.
    Rejected { outliers: usize, scanned: usize },
}

/// Buffers every pair outside the band, rejecting as soon as the buffer
/// holds more than `outlier_ratio * pairs.len()` entries.
pub fn validate_node(pairs: &[Pair], model: &LeafModel, outlier_ratio: f64) -> Validation {
    let limit = outlier_ratio * pairs.len() as f64;
    let mut buf = OutlierBuffer::new();
    for (i, p) in pairs.iter().enumerate() {
        if !model.covers(p.m, p.n) {
            buf.insert(p.m, p.tid);
            if buf.len() as f64 > limit {
                return Validation::Rejected {
                    outliers: buf.len(),
                    scanned: i + 1,
                };
            }
        }
    }
    Validation::Accepted(buf)
}

fn collect_outliers(pairs: &[Pair], model: &LeafModel) -> OutlierBuffer {
    let mut buf = OutlierBuffer::new();
    for p in pairs.iter().filter(|p| !model.covers(p.m, p.n)) {
        buf.insert(p.m, p.tid);
    }
    buf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precheck {
    LikelyReject,
    Unknown,
}

/// Seed for the node at `path`, independent of visiting order.
pub(crate) fn node_seed(seed: u64, path: &[u32]) -> u64 {
    // FNV-1a over the path, then a splitmix finalizer
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &i in path {
        h ^= u64::from(i) + 1;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Fits a uniform sample of the pairs and predicts rejection when the
/// sample alone already exceeds the outlier ratio.
pub fn sample_precheck(pairs: &[Pair], extent: &Extent, params: &TrsParams, seed: u64) -> Precheck {
    if !params.sample_precheck || pairs.len() < PRECHECK_MIN_PAIRS {
        return Precheck::Unknown;
    }
    let k = ((params.sample_fraction * pairs.len() as f64).ceil() as usize).clamp(1, pairs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, pairs.len(), k).into_vec();
    idx.sort_unstable();
    let picked: Vec<Pair> = idx.iter().map(|&i| pairs[i]).collect();
    let mut model = LeafModel::fit_trimmed(
        &picked,
        &extent.range,
        params.error_bound,
        1.0 - params.outlier_ratio,
        params.trim_steps,
    );
    // ε reflects the whole node, not the sample
    if model.kind == ModelKind::Linear {
        model.epsilon = derive_epsilon(model.beta, &extent.range, pairs.len(), params.error_bound);
    }
    let outliers = picked.iter().filter(|p| !model.covers(p.m, p.n)).count();
    if outliers as f64 > params.outlier_ratio * k as f64 {
        Precheck::LikelyReject
    } else {
        Precheck::Unknown
    }
}

/// Counters gathered during construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BuildStats {
    pub nodes: usize,
    pub leaves: usize,
    pub internal: usize,
    /// Sum of the sub-table sizes handed to every processed node.
    pub pairs_visited: usize,
    pub regressions: usize,
    pub prechecked_splits: usize,
    pub max_depth: usize,
}

impl BuildStats {
    pub fn merge(&mut self, o: &BuildStats) {
        self.nodes += o.nodes;
        self.leaves += o.leaves;
        self.internal += o.internal;
        self.pairs_visited += o.pairs_visited;
        self.regressions += o.regressions;
        self.prechecked_splits += o.prechecked_splits;
        self.max_depth = self.max_depth.max(o.max_depth);
    }
}

enum Decision {
    Leaf(LeafNode),
    Split(Vec<Vec<Pair>>),
}

fn partition(pairs: Vec<Pair>, extent: &Extent, fanout: usize) -> Vec<Vec<Pair>> {
    let mut parts: Vec<Vec<Pair>> = (0..fanout).map(|_| Vec::new()).collect();
    for p in pairs {
        parts[extent.route(p.m, fanout)].push(p);
    }
    parts
}

/// The per-node step shared by the serial and parallel builders. It depends
/// only on the node's extent, depth, path and pairs.
fn decide(
    extent: Extent,
    depth: usize,
    path: &[u32],
    pairs: Vec<Pair>,
    params: &TrsParams,
    stats: &mut BuildStats,
) -> Decision {
    stats.pairs_visited += pairs.len();
    stats.max_depth = stats.max_depth.max(depth);
    let can_split = depth < params.max_height;
    if pairs.is_empty() {
        return Decision::Leaf(LeafNode::new(extent, LeafModel::EMPTY, 0, OutlierBuffer::new()));
    }
    if can_split && sample_precheck(&pairs, &extent, params, node_seed(params.seed, path)) == Precheck::LikelyReject {
        stats.prechecked_splits += 1;
        return Decision::Split(partition(pairs, &extent, params.node_fanout));
    }
    stats.regressions += 1;
    let model = LeafModel::fit_trimmed(
        &pairs,
        &extent.range,
        params.error_bound,
        1.0 - params.outlier_ratio,
        params.trim_steps,
    );
    if !can_split {
        let buf = collect_outliers(&pairs, &model);
        return Decision::Leaf(LeafNode::new(extent, model, pairs.len(), buf));
    }
    match validate_node(&pairs, &model, params.outlier_ratio) {
        Validation::Accepted(buf) => Decision::Leaf(LeafNode::new(extent, model, pairs.len(), buf)),
        Validation::Rejected { .. } => Decision::Split(partition(pairs, &extent, params.node_fanout)),
    }
}

enum Proto {
    Leaf(LeafNode),
    Internal(Extent, Vec<usize>),
}

/// Breadth-first construction over a FIFO of `(node, sub-table)` entries.
pub(crate) fn build_serial(
    root: Extent,
    root_depth: usize,
    root_path: &[u32],
    pairs: Vec<Pair>,
    params: &TrsParams,
) -> (Node, BuildStats) {
    let mut stats = BuildStats::default();
    let mut arena: Vec<Option<Proto>> = vec![None];
    let mut fifo = VecDeque::new();
    fifo.push_back((0usize, root, root_depth, root_path.to_vec(), pairs));
    while let Some((slot, extent, depth, path, pairs)) = fifo.pop_front() {
        match decide(extent, depth, &path, pairs, params, &mut stats) {
            Decision::Leaf(leaf) => arena[slot] = Some(Proto::Leaf(leaf)),
            Decision::Split(parts) => {
                let mut ids = Vec::with_capacity(parts.len());
                for (i, part) in parts.into_iter().enumerate() {
                    let id = arena.len();
                    arena.push(None);
                    ids.push(id);
                    let mut p = path.clone();
                    p.push(i as u32);
                    fifo.push_back((id, extent.child(i, params.node_fanout), depth + 1, p, part));
                }
                arena[slot] = Some(Proto::Internal(extent, ids));
            }
        }
    }
    let node = assemble(&mut arena, 0, &mut stats);
    (node, stats)
}

fn assemble(arena: &mut [Option<Proto>], id: usize, stats: &mut BuildStats) -> Node {
    stats.nodes += 1;
    match arena[id].take().expect("every slot is filled once") {
        Proto::Leaf(l) => {
            stats.leaves += 1;
            Node::Leaf(l)
        }
        Proto::Internal(extent, ids) => {
            stats.internal += 1;
            Node::Internal(InternalNode {
                extent,
                children: ids.into_iter().map(|c| assemble(arena, c, stats)).collect(),
                pending: Default::default(),
            })
        }
    }
}

/// Recursive construction where sibling subtrees are built as independent
/// rayon tasks. Must be called inside the target thread pool.
pub(crate) fn build_recursive(
    extent: Extent,
    depth: usize,
    path: Vec<u32>,
    pairs: Vec<Pair>,
    params: &TrsParams,
) -> (Node, BuildStats) {
    use rayon::prelude::*;

    let mut stats = BuildStats::default();
    match decide(extent, depth, &path, pairs, params, &mut stats) {
        Decision::Leaf(leaf) => {
            stats.nodes += 1;
            stats.leaves += 1;
            (Node::Leaf(leaf), stats)
        }
        Decision::Split(parts) => {
            let built: Vec<(Node, BuildStats)> = parts
                .into_par_iter()
                .enumerate()
                .map(|(i, part)| {
                    let mut p = path.clone();
                    p.push(i as u32);
                    build_recursive(extent.child(i, params.node_fanout), depth + 1, p, part, params)
                })
                .collect();
            stats.nodes += 1;
            stats.internal += 1;
            let mut children = Vec::with_capacity(built.len());
            for (node, s) in built {
                stats.merge(&s);
                children.push(node);
            }
            let node = Node::Internal(InternalNode {
                extent,
                children,
                pending: Default::default(),
            });
            (node, stats)
        }
    }
}
