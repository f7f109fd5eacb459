//! Exact nearest-neighbor search over a descriptor pool.
//!
//! Two backends behind one interface: a brute-force scan that serves as
//! the correctness oracle, and a kd-tree (median split on the axis of
//! maximum spread, leaf size 16, exact search with incremental
//! box-distance pruning). Both must return the identical
//! `(point_id, distance)` for any query; ties in distance resolve to
//! the smallest original point index.
//!
//! Distances are squared Euclidean in `f64` (descriptors are promoted
//! from their `f32` storage once at build time). The square-root
//! variant is applied a layer up, by the classifier.

use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Descriptor;

/// Index backend selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Brute,
    KdTree,
}

impl FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brute" => Ok(Backend::Brute),
            "kdtree" => Ok(Backend::KdTree),
            other => Err(format!("unknown backend '{other}' (expected brute|kdtree)")),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Brute => write!(f, "brute"),
            Backend::KdTree => write!(f, "kdtree"),
        }
    }
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("cannot build an index over an empty point set")]
    Empty,
    #[error("dimension mismatch: index dim {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("point {point} contains a non-finite value")]
    NonFinitePoint { point: usize },
    #[error("query contains a non-finite value")]
    NonFiniteQuery,
}

/// Result of one nearest-neighbor query: index into the original point
/// list and squared Euclidean distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NNResult {
    pub point_id: usize,
    pub distance: f64,
}

/// Reusable per-thread query state (promoted query buffer plus the
/// kd-tree's per-axis offset vector).
#[derive(Clone, Debug)]
pub struct NnScratch {
    q64: Vec<f64>,
    off: Vec<f64>,
}

impl NnScratch {
    pub fn new(dim: usize) -> Self {
        NnScratch { q64: vec![0.0; dim], off: vec![0.0; dim] }
    }
}

const LEAF_SIZE: usize = 16;

/// Squared Euclidean distance with an early-out bound.
///
/// Returns `None` as soon as the running sum provably exceeds `bound`
/// (checked per 16-element block), otherwise the exact total. The
/// accumulation pattern is fixed, so for a given pair the completed
/// value is bit-identical no matter the bound or the backend calling
/// it.
#[inline]
fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut total = 0.0f64;
    let mut i = 0;
    while i + 16 <= n {
        let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut k = i;
        while k < i + 16 {
            let d0 = a[k] - b[k];
            let d1 = a[k + 1] - b[k + 1];
            let d2 = a[k + 2] - b[k + 2];
            let d3 = a[k + 3] - b[k + 3];
            s0 += d0 * d0;
            s1 += d1 * d1;
            s2 += d2 * d2;
            s3 += d3 * d3;
            k += 4;
        }
        total += (s0 + s1) + (s2 + s3);
        if total > bound {
            return None;
        }
        i += 16;
    }
    while i < n {
        let d = a[i] - b[i];
        total += d * d;
        i += 1;
    }
    if total > bound {
        // completed but over the bound; still an exact value the caller
        // may inspect, but by contract we only promise values <= bound
        return None;
    }
    Some(total)
}

/// Unbounded variant; always returns the exact squared distance.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist_bounded(a, b, f64::INFINITY).expect("infinite bound never trips")
}

/// Candidate acceptance shared by both backends: strictly closer wins,
/// equal distance resolves to the smaller original id.
#[inline]
fn accept(best: &mut (f64, u32), d: f64, id: u32) {
    if d < best.0 || (d == best.0 && id < best.1) {
        *best = (d, id);
    }
}

// ---------------------------------------------------------------------------
// brute force

#[derive(Clone, Debug)]
struct BruteIndex {
    dim: usize,
    pts: Vec<f64>,
}

impl BruteIndex {
    fn nearest(&self, q: &[f64]) -> (f64, u32) {
        let mut best = (f64::INFINITY, u32::MAX);
        for (k, p) in self.pts.chunks_exact(self.dim).enumerate() {
            if let Some(d) = sq_dist_bounded(q, p, best.0) {
                accept(&mut best, d, k as u32);
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// kd-tree

#[derive(Clone, Copy, Debug)]
enum KdNode {
    /// Children: left is the next node in build order, right is stored.
    Split { axis: u32, value: f64, right: u32 },
    /// Range into the leaf-contiguous point buffer.
    Leaf { start: u32, len: u32 },
}

#[derive(Clone, Debug)]
struct KdTreeIndex {
    dim: usize,
    /// Points permuted into leaf-contiguous order.
    pts: Vec<f64>,
    /// Original id of each stored point.
    ids: Vec<u32>,
    nodes: Vec<KdNode>,
}

impl KdTreeIndex {
    fn build(flat: &[f64], dim: usize) -> Self {
        let n = flat.len() / dim;
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::new();
        build_rec(flat, dim, &mut order, 0, &mut nodes);
        let mut pts = vec![0.0f64; flat.len()];
        for (slot, &id) in order.iter().enumerate() {
            let src = &flat[id as usize * dim..(id as usize + 1) * dim];
            pts[slot * dim..(slot + 1) * dim].copy_from_slice(src);
        }
        KdTreeIndex { dim, pts, ids: order, nodes }
    }

    fn nearest(&self, q: &[f64], off: &mut [f64]) -> (f64, u32) {
        off.fill(0.0);
        let mut best = (f64::INFINITY, u32::MAX);
        self.search(0, q, off, 0.0, &mut best);
        best
    }

    fn search(&self, node: u32, q: &[f64], off: &mut [f64], rd: f64, best: &mut (f64, u32)) {
        match self.nodes[node as usize] {
            KdNode::Leaf { start, len } => {
                for k in start as usize..(start + len) as usize {
                    let p = &self.pts[k * self.dim..(k + 1) * self.dim];
                    if let Some(d) = sq_dist_bounded(q, p, best.0) {
                        accept(best, d, self.ids[k]);
                    }
                }
            }
            KdNode::Split { axis, value, right } => {
                let axis = axis as usize;
                let delta = q[axis] - value;
                let (near, far) = if delta < 0.0 { (node + 1, right) } else { (right, node + 1) };
                self.search(near, q, off, rd, best);
                // lower bound on the squared distance to the far box:
                // replace this axis' offset with the distance to the
                // splitting plane (Arya-Mount incremental update)
                let old = off[axis];
                let rd_far = rd - old * old + delta * delta;
                // equality must still be visited: a tie candidate with a
                // smaller id may sit exactly on the bound
                if rd_far <= best.0 {
                    off[axis] = delta;
                    self.search(far, q, off, rd_far, best);
                    off[axis] = old;
                }
            }
        }
    }
}

/// Recursive median-split build. Appends this subtree's nodes to
/// `nodes` in pre-order and partitions `order` in place so leaves end
/// up contiguous.
fn build_rec(flat: &[f64], dim: usize, order: &mut [u32], global_start: u32, nodes: &mut Vec<KdNode>) {
    let len = order.len();
    if len <= LEAF_SIZE {
        nodes.push(KdNode::Leaf { start: global_start, len: len as u32 });
        return;
    }
    // axis of maximum spread over this subset
    let mut best_axis = 0;
    let mut best_spread = -1.0f64;
    for axis in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &id in order.iter() {
            let v = flat[id as usize * dim + axis];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let spread = hi - lo;
        if spread > best_spread {
            best_spread = spread;
            best_axis = axis;
        }
    }
    if best_spread <= 0.0 {
        // all points identical: no split can make progress
        nodes.push(KdNode::Leaf { start: global_start, len: len as u32 });
        return;
    }
    let mid = len / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        let va = flat[a as usize * dim + best_axis];
        let vb = flat[b as usize * dim + best_axis];
        va.partial_cmp(&vb).expect("finite by construction").then(a.cmp(&b))
    });
    let value = flat[order[mid] as usize * dim + best_axis];
    let me = nodes.len();
    nodes.push(KdNode::Leaf { start: 0, len: 0 }); // patched below
    let (left, right_slice) = order.split_at_mut(mid);
    build_rec(flat, dim, left, global_start, nodes);
    let right = nodes.len() as u32;
    build_rec(flat, dim, right_slice, global_start + mid as u32, nodes);
    nodes[me] = KdNode::Split { axis: best_axis as u32, value, right };
}

// ---------------------------------------------------------------------------
// public facade

#[derive(Clone, Debug)]
enum IndexImpl {
    Brute(BruteIndex),
    Kd(KdTreeIndex),
}

/// Immutable exact nearest-neighbor index over a descriptor pool.
#[derive(Clone, Debug)]
pub struct NNIndex {
    backend: Backend,
    dim: usize,
    len: usize,
    imp: IndexImpl,
}

impl NNIndex {
    /// Builds an index over the given points. Rejects empty input,
    /// mixed dimensions and non-finite coordinates. The structure is
    /// deterministic for a given input order.
    pub fn build(points: &[Descriptor], backend: Backend) -> Result<Self, NnError> {
        if points.is_empty() {
            return Err(NnError::Empty);
        }
        let dim = points[0].dim();
        if dim == 0 {
            return Err(NnError::DimMismatch { expected: 1, got: 0 });
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.dim() != dim {
                return Err(NnError::DimMismatch { expected: dim, got: p.dim() });
            }
            if !p.is_finite() {
                return Err(NnError::NonFinitePoint { point: i });
            }
            flat.extend(p.values.iter().map(|&v| v as f64));
        }
        let imp = match backend {
            Backend::Brute => IndexImpl::Brute(BruteIndex { dim, pts: flat }),
            Backend::KdTree => IndexImpl::Kd(KdTreeIndex::build(&flat, dim)),
        };
        Ok(NNIndex { backend, dim, len: points.len(), imp })
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Exact nearest neighbor of `query`; ties break to the smallest
    /// point id.
    pub fn nearest(&self, query: &Descriptor) -> Result<NNResult, NnError> {
        let mut scratch = NnScratch::new(self.dim);
        self.nearest_with(query, &mut scratch)
    }

    /// `nearest` with caller-owned scratch, for query loops.
    pub fn nearest_with(&self, query: &Descriptor, scratch: &mut NnScratch) -> Result<NNResult, NnError> {
        if query.dim() != self.dim {
            return Err(NnError::DimMismatch { expected: self.dim, got: query.dim() });
        }
        if !query.is_finite() {
            return Err(NnError::NonFiniteQuery);
        }
        for (dst, &v) in scratch.q64.iter_mut().zip(query.values.iter()) {
            *dst = v as f64;
        }
        Ok(self.nearest_f64(scratch))
    }

    fn nearest_f64(&self, scratch: &mut NnScratch) -> NNResult {
        let (d, id) = match &self.imp {
            IndexImpl::Brute(b) => b.nearest(&scratch.q64),
            IndexImpl::Kd(t) => t.nearest(&scratch.q64, &mut scratch.off),
        };
        NNResult { point_id: id as usize, distance: d }
    }

    /// Element-wise `nearest` over a batch. The whole batch is
    /// validated before any query runs; results are order-preserving
    /// and independent of internal parallel scheduling.
    pub fn batch_nearest(&self, queries: &[Descriptor]) -> Result<Vec<NNResult>, NnError> {
        for q in queries {
            if q.dim() != self.dim {
                return Err(NnError::DimMismatch { expected: self.dim, got: q.dim() });
            }
            if !q.is_finite() {
                return Err(NnError::NonFiniteQuery);
            }
        }
        Ok(queries
            .par_iter()
            .map_init(
                || NnScratch::new(self.dim),
                |scratch, q| {
                    for (dst, &v) in scratch.q64.iter_mut().zip(q.values.iter()) {
                        *dst = v as f64;
                    }
                    self.nearest_f64(scratch)
                },
            )
            .collect())
    }
}
