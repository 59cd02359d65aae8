//! Complete binary trees, their embeddings into `l_p^d`, and exact distortion.
//!
//! Vertices are numbered in heap order: the root is 1 and the children of
//! `i` are `2i` and `2i + 1`, so `T_n` has vertices `1 ..= 2^(n+1) - 1`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::convexity::SpaceSpec;
use crate::error::{Error, Result};

/// The complete rooted binary tree of a given depth with its graph metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryTree {
    depth: u32,
}

/// Depth of a heap-ordered vertex (root has depth 0).
#[inline]
pub fn vertex_depth(v: usize) -> u32 {
    debug_assert!(v > 0);
    v.ilog2()
}

impl BinaryTree {
    pub fn new(depth: u32) -> Result<Self> {
        // 2^(depth+1) - 1 must fit, and so must the child index 2v + 1 of every vertex.
        if depth >= usize::BITS - 1 {
            return Err(Error::TreeTooLarge { depth });
        }
        Ok(BinaryTree { depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn vertex_count(&self) -> usize {
        (1usize << (self.depth + 1)) - 1
    }

    pub fn contains(&self, v: usize) -> bool {
        v >= 1 && v <= self.vertex_count()
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        vertex_depth(v) == self.depth
    }

    pub fn children(&self, v: usize) -> Option<[usize; 2]> {
        (self.contains(v) && !self.is_leaf(v)).then_some([2 * v, 2 * v + 1])
    }

    pub fn pair_count(&self) -> usize {
        let n = self.vertex_count();
        n * (n - 1) / 2
    }

    fn check(&self, v: usize) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::InvalidVertex {
                vertex: v,
                count: self.vertex_count(),
            })
        }
    }

    /// Graph distance between two vertices.
    pub fn distance(&self, u: usize, v: usize) -> Result<u32> {
        self.check(u)?;
        self.check(v)?;
        Ok(heap_distance(u, v))
    }
}

/// `depth(u) + depth(v) - 2 depth(lca(u, v))` for heap indices.
#[inline]
pub fn heap_distance(u: usize, v: usize) -> u32 {
    let (du, dv) = (vertex_depth(u), vertex_depth(v));
    let (mut a, mut b) = (u, v);
    if du > dv {
        a >>= du - dv;
    } else {
        b >>= dv - du;
    }
    // a and b now share a depth; their lca sits above by the bit length of a ^ b.
    let up = usize::BITS - (a ^ b).leading_zeros();
    (du + dv) - 2 * (du.min(dv) - up)
}

/// Builds `T_n`.
pub fn build_tree(n: u32) -> Result<BinaryTree> {
    BinaryTree::new(n)
}

pub fn tree_distance(tree: &BinaryTree, u: usize, v: usize) -> Result<u32> {
    tree.distance(u, v)
}

/// A map from the vertices of a tree into `l_p^d`.
///
/// Points are stored row-major in heap order; row 0 is vertex 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    tree: BinaryTree,
    space: SpaceSpec,
    coords: Vec<f64>,
}

impl Embedding {
    pub fn new(tree: BinaryTree, space: SpaceSpec, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() != tree.vertex_count() {
            return Err(Error::InvalidEmbedding(format!(
                "expected {} points for depth {}, got {}",
                tree.vertex_count(),
                tree.depth(),
                points.len()
            )));
        }
        let mut coords = Vec::with_capacity(points.len() * space.dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != space.dim {
                return Err(Error::InvalidEmbedding(format!(
                    "point for vertex {} has dimension {}, expected {}",
                    i + 1,
                    p.len(),
                    space.dim
                )));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(tree, space, coords)
    }

    pub fn from_flat(tree: BinaryTree, space: SpaceSpec, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != tree.vertex_count() * space.dim {
            return Err(Error::InvalidEmbedding(format!(
                "expected {} coordinates, got {}",
                tree.vertex_count() * space.dim,
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidEmbedding(format!(
                "non-finite coordinate for vertex {}",
                i / space.dim + 1
            )));
        }
        Ok(Embedding { tree, space, coords })
    }

    pub fn tree(&self) -> &BinaryTree {
        &self.tree
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    /// The image of vertex `v` (heap index, 1-based).
    #[inline]
    pub fn point(&self, v: usize) -> &[f64] {
        let d = self.space.dim;
        &self.coords[(v - 1) * d..v * d]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.coords.chunks(self.space.dim).map(<[f64]>::to_vec).collect()
    }

    /// `|phi(u) - phi(v)|`.
    #[inline]
    pub fn image_distance(&self, u: usize, v: usize) -> f64 {
        self.space.distance(self.point(u), self.point(v))
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding {
            tree: self.tree,
            space: self.space,
            coords: self.coords.iter().map(|x| x * factor).collect(),
        }
    }
}

/// Exact distortion data of a finite map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    /// Largest `|phi(u) - phi(v)| / d(u, v)`.
    pub expansion: f64,
    /// Smallest `|phi(u) - phi(v)| / d(u, v)`.
    pub contraction: f64,
    pub distortion: f64,
    /// The optimal scale `s`, which for a finite map is the contraction.
    pub scale: f64,
}

impl DistortionReport {
    pub(crate) fn from_extremes(expansion: f64, contraction: f64) -> Self {
        DistortionReport {
            expansion,
            contraction,
            distortion: expansion / contraction,
            scale: contraction,
        }
    }
}

/// Exact distortion over all unordered vertex pairs.
///
/// For a finite map the infimum over scales is attained at `s = contraction`,
/// so the distortion is `expansion / contraction`.
pub fn evaluate_distortion(e: &Embedding) -> Result<DistortionReport> {
    let n = e.tree.vertex_count();
    if n < 2 {
        return Err(Error::NoPairs);
    }
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    for u in 1..n {
        let pu = e.point(u);
        for v in u + 1..=n {
            let dist = e.space.distance(pu, e.point(v));
            if dist == 0.0 {
                return Err(Error::DegenerateEmbedding { u, v });
            }
            let ratio = dist / heap_distance(u, v) as f64;
            max_ratio = max_ratio.max(ratio);
            min_ratio = min_ratio.min(ratio);
        }
    }
    Ok(DistortionReport::from_extremes(max_ratio, min_ratio))
}

/// Rescales `e` so that it is distance non-decreasing with contraction 1.
pub fn normalize_embedding(e: &Embedding) -> Result<Embedding> {
    let report = evaluate_distortion(e)?;
    Ok(e.scaled(1.0 / report.contraction))
}

/// For every selected vertex, the two kept grandchildren (one below each child).
pub type Selection = BTreeMap<usize, [usize; 2]>;

/// Heap index in `T_floor(n/2)` (position `i - 1`) to the selected vertex of `T_n`.
pub fn selection_map(tree: &BinaryTree, kept: &Selection) -> Result<Vec<usize>> {
    let half = BinaryTree::new(tree.depth() / 2)?;
    let mut map = vec![0usize; half.vertex_count()];
    map[0] = 1;
    let mut used = BTreeSet::new();
    for j in 1..=half.vertex_count() {
        if half.is_leaf(j) {
            continue;
        }
        let o = map[j - 1];
        let grand = kept
            .get(&o)
            .ok_or_else(|| Error::Selection(format!("selected vertex {o} has no kept grandchildren")))?;
        let mut ordered = *grand;
        ordered.sort_unstable();
        let [left, right] = ordered;
        if !(4 * o..4 * o + 2).contains(&left) || !(4 * o + 2..4 * o + 4).contains(&right) {
            return Err(Error::Selection(format!(
                "{grand:?} is not one grandchild of {o} through each child"
            )));
        }
        map[2 * j - 1] = left;
        map[2 * j] = right;
        used.insert(o);
    }
    if let Some(extra) = kept.keys().find(|k| !used.contains(k)) {
        return Err(Error::Selection(format!("vertex {extra} is not on a selected chain")));
    }
    Ok(map)
}

/// Restricts `e` to the selected vertices and relabels them as `T_floor(n/2)`.
///
/// Tree distances between selected vertices are exactly twice the distances
/// of their labels, so points are halved to keep the ratios unchanged.
pub fn restrict_to_selection(e: &Embedding, kept: &Selection) -> Result<Embedding> {
    if e.tree.depth() < 2 {
        return Err(Error::Depth {
            depth: e.tree.depth(),
            required: 2,
        });
    }
    let map = selection_map(&e.tree, kept)?;
    let half = BinaryTree::new(e.tree.depth() / 2)?;
    let mut coords = Vec::with_capacity(map.len() * e.space.dim);
    for &o in &map {
        coords.extend(e.point(o).iter().map(|x| 0.5 * x));
    }
    Embedding::from_flat(half, e.space, coords)
}
