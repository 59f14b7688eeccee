use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use parking_lot::Mutex;

use super::buffer::OutlierBuffer;
use super::model::LeafModel;
use crate::range::ValueRange;

/// Range plus β, α, ε, counts and buffer handle.
pub const LEAF_NODE_BYTES: usize = 64;
/// Range, kind tag and child count; child pointers are added per child.
pub const INTERNAL_NODE_HEADER_BYTES: usize = 24;

/// Position of a node as child indices from the root.
pub type NodePath = Vec<u32>;

/// Extent of a node: the closed `range` it models and whether its upper
/// bound is routed to it. Children split `[lb, ub]` into equal-width pieces
/// `[b_i, b_{i+1})`; only the last child of an upper-closed node owns `ub`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub range: ValueRange,
    pub upper_closed: bool,
}

impl Extent {
    pub fn root(range: ValueRange) -> Self {
        Extent {
            range,
            upper_closed: true,
        }
    }

    /// Whether a target value is routed to this node.
    #[inline]
    pub fn owns(&self, m: f64) -> bool {
        self.range.lb() <= m && (m < self.range.ub() || (self.upper_closed && m == self.range.ub()))
    }

    #[inline]
    fn bound(&self, i: usize, fanout: usize) -> f64 {
        let (lb, ub) = (self.range.lb(), self.range.ub());
        if i == 0 {
            lb
        } else if i == fanout {
            ub
        } else {
            lb + (ub - lb) / fanout as f64 * i as f64
        }
    }

    pub fn child(&self, i: usize, fanout: usize) -> Extent {
        let lb = self.bound(i, fanout);
        let ub = self.bound(i + 1, fanout).max(lb);
        Extent {
            range: ValueRange::new(lb, ub).expect("child bounds are ordered"),
            upper_closed: i + 1 == fanout && self.upper_closed,
        }
    }

    /// Child index that owns `m`, for `m` owned by this node.
    #[inline]
    pub fn route(&self, m: f64, fanout: usize) -> usize {
        let w = self.range.width() / fanout as f64;
        let mut i = if w > 0.0 {
            (((m - self.range.lb()) / w).floor().max(0.0) as usize).min(fanout - 1)
        } else {
            fanout - 1
        };
        while i > 0 && m < self.bound(i, fanout) {
            i -= 1;
        }
        while i + 1 < fanout && m >= self.bound(i + 1, fanout) {
            i += 1;
        }
        i
    }
}

#[derive(Debug)]
pub struct LeafNode {
    pub extent: Extent,
    pub model: LeafModel,
    /// Live tuples routed here.
    pub covered: AtomicU64,
    /// Deletions since the last fit.
    pub deleted: AtomicU64,
    pub outliers: Mutex<OutlierBuffer>,
    /// Set while a reorganization entry for this node is queued.
    pub pending: AtomicBool,
}

impl LeafNode {
    pub fn new(extent: Extent, model: LeafModel, covered: usize, outliers: OutlierBuffer) -> Self {
        LeafNode {
            extent,
            model,
            covered: AtomicU64::new(covered as u64),
            deleted: AtomicU64::new(0),
            outliers: Mutex::new(outliers),
            pending: AtomicBool::new(false),
        }
    }

    pub fn covered(&self) -> u64 {
        self.covered.load(Ordering::Relaxed)
    }
}

#[derive(Debug)]
pub struct InternalNode {
    pub extent: Extent,
    pub children: Vec<Node>,
    pub pending: AtomicBool,
}

#[derive(Debug)]
pub enum Node {
    Leaf(LeafNode),
    Internal(InternalNode),
}

impl Node {
    pub fn extent(&self) -> &Extent {
        match self {
            Node::Leaf(l) => &l.extent,
            Node::Internal(i) => &i.extent,
        }
    }

    pub fn pending_flag(&self) -> &AtomicBool {
        match self {
            Node::Leaf(l) => &l.pending,
            Node::Internal(i) => &i.pending,
        }
    }

    pub fn at(&self, path: &[u32]) -> Option<&Node> {
        let mut node = self;
        for &i in path {
            match node {
                Node::Internal(n) => node = n.children.get(i as usize)?,
                Node::Leaf(_) => return None,
            }
        }
        Some(node)
    }

    pub fn at_mut(&mut self, path: &[u32]) -> Option<&mut Node> {
        let mut node = self;
        for &i in path {
            match node {
                Node::Internal(n) => node = n.children.get_mut(i as usize)?,
                Node::Leaf(_) => return None,
            }
        }
        Some(node)
    }

    /// Leaf that owns `m`, plus its depth (root = 1).
    #[inline]
    pub fn leaf_for(&self, m: f64, fanout: usize) -> (&LeafNode, usize) {
        let mut node = self;
        let mut depth = 1;
        loop {
            match node {
                Node::Leaf(l) => return (l, depth),
                Node::Internal(n) => {
                    node = &n.children[n.extent.route(m, fanout)];
                    depth += 1;
                }
            }
        }
    }

    pub fn path_for(&self, m: f64, fanout: usize) -> NodePath {
        let mut node = self;
        let mut path = Vec::new();
        while let Node::Internal(n) = node {
            let i = n.extent.route(m, fanout);
            path.push(i as u32);
            node = &n.children[i];
        }
        path
    }

    /// Pre-order walk with depth.
    pub fn walk<'a>(&'a self, depth: usize, f: &mut impl FnMut(&'a Node, usize)) {
        f(self, depth);
        if let Node::Internal(n) = self {
            for c in &n.children {
                c.walk(depth + 1, f);
            }
        }
    }
}
