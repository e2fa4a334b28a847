//! Linear (Morton-sorted) octree with explicit nodes for occupied space.
//!
//! Points are sorted by their Morton code at `max_depth`, so every node owns a
//! contiguous span of the sorted index array. Nodes are stored level by level;
//! the children of a node are contiguous and ordered by octant. Octants holding
//! no point are not materialized: their geometry is still available through
//! [`NodeRef::child_bounds`], and they are leaves by construction.

use std::ops::Range;

use rayon::prelude::*;

use super::morton;
use super::IndexError;
use crate::cloud::{bounding_cube, BoundingCube, Point3, PointCloud};
use crate::scalar::Real;

pub const MAX_OCTREE_DEPTH: u32 = 21;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy)]
struct Node {
    key: u64,
    start: u32,
    end: u32,
    first_child: u32,
    depth: u8,
    child_mask: u8,
}

#[derive(Debug, Clone)]
pub struct Octree<T: Real> {
    cube: BoundingCube<T>,
    max_depth: u32,
    min_points_to_split: usize,
    /// Point indices sorted by Morton code.
    order: Vec<u32>,
    /// Morton codes at `max_depth`, parallel to `order`.
    codes: Vec<u64>,
    nodes: Vec<Node>,
    /// Node-id range of each depth level.
    levels: Vec<Range<u32>>,
}

/// Builds an octree over `cloud`. Occupied nodes holding at least
/// `min_points_to_split` points are subdivided until `max_depth`.
pub fn build_octree<T: Real>(
    cloud: &PointCloud<T>,
    max_depth: u32,
    min_points_to_split: usize,
) -> Result<Octree<T>, IndexError> {
    let cube = bounding_cube(cloud, T::zero()).map_err(|_| IndexError::EmptyCloud)?;
    Octree::with_cube(cloud, cube, max_depth, min_points_to_split)
}

impl<T: Real> Octree<T> {
    /// Builds over an explicit root cube; points outside it are clamped into the
    /// boundary cells, so callers should pass a cube that contains the cloud.
    pub fn with_cube(
        cloud: &PointCloud<T>,
        cube: BoundingCube<T>,
        max_depth: u32,
        min_points_to_split: usize,
    ) -> Result<Self, IndexError> {
        if cloud.is_empty() {
            return Err(IndexError::EmptyCloud);
        }
        if !(1..=MAX_OCTREE_DEPTH).contains(&max_depth) {
            return Err(IndexError::DepthOutOfRange(max_depth));
        }
        let mut tree = Octree {
            cube,
            max_depth,
            min_points_to_split: min_points_to_split.max(1),
            order: Vec::new(),
            codes: Vec::new(),
            nodes: Vec::new(),
            levels: Vec::new(),
        };
        let mut keyed: Vec<(u64, u32)> = cloud
            .points()
            .par_iter()
            .enumerate()
            .map(|(i, p)| (tree.clamped_code(p), i as u32))
            .collect();
        keyed.par_sort_unstable();
        tree.codes = keyed.iter().map(|k| k.0).collect();
        tree.order = keyed.iter().map(|k| k.1).collect();
        tree.build_nodes();
        Ok(tree)
    }

    fn build_nodes(&mut self) {
        let n = self.order.len() as u32;
        self.nodes.push(Node {
            key: 0,
            start: 0,
            end: n,
            first_child: 0,
            depth: 0,
            child_mask: 0,
        });
        self.levels.push(0..1);
        for depth in 0..self.max_depth {
            let level = self.levels[depth as usize].clone();
            let next_start = self.nodes.len() as u32;
            let shift = 3 * (self.max_depth - depth - 1);
            for id in level {
                let node = self.nodes[id as usize];
                let count = (node.end - node.start) as usize;
                if count < self.min_points_to_split {
                    continue;
                }
                let first = self.nodes.len() as u32;
                let mut mask = 0u8;
                let mut s = node.start;
                let codes = &self.codes;
                for oct in 0..8u64 {
                    let e = s + codes[s as usize..node.end as usize]
                        .partition_point(|&c| (c >> shift) & 7 <= oct) as u32;
                    if e > s {
                        mask |= 1 << oct;
                        self.nodes.push(Node {
                            key: (node.key << 3) | oct,
                            start: s,
                            end: e,
                            first_child: 0,
                            depth: (depth + 1) as u8,
                            child_mask: 0,
                        });
                    }
                    s = e;
                }
                let parent = &mut self.nodes[id as usize];
                parent.first_child = first;
                parent.child_mask = mask;
            }
            let next_end = self.nodes.len() as u32;
            if next_end == next_start {
                break;
            }
            self.levels.push(next_start..next_end);
        }
    }

    /// Morton code at `max_depth` of a point, clamped into the root cube.
    pub fn clamped_code(&self, p: &Point3<T>) -> u64 {
        let cells = T::from_count(1usize << self.max_depth);
        let hi = (1u32 << self.max_depth) - 1;
        let mut ijk = [0u32; 3];
        for a in 0..3 {
            let f = ((p[a] - self.cube.min[a]) / self.cube.edge * cells).floor();
            ijk[a] = if f <= T::zero() {
                0
            } else {
                f.as_f64().min(hi as f64) as u32
            };
        }
        morton::encode(ijk[0], ijk[1], ijk[2])
    }

    /// Morton code at `max_depth`, or `None` for points outside the closed root cube.
    pub fn code(&self, p: &Point3<T>) -> Option<u64> {
        self.cube.contains(p).then(|| self.clamped_code(p))
    }

    pub fn cube(&self) -> &BoundingCube<T> {
        &self.cube
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Deepest level that actually holds nodes.
    pub fn deepest_level(&self) -> u32 {
        self.levels.len() as u32 - 1
    }

    pub fn min_points_to_split(&self) -> usize {
        self.min_points_to_split
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn point_count(&self) -> usize {
        self.order.len()
    }

    /// Point indices in Morton order.
    pub fn sorted_indices(&self) -> &[u32] {
        &self.order
    }

    /// Morton codes parallel to [`Octree::sorted_indices`].
    pub fn sorted_codes(&self) -> &[u64] {
        &self.codes
    }

    pub fn root(&self) -> NodeRef<'_, T> {
        self.node(0)
    }

    pub fn node(&self, id: NodeId) -> NodeRef<'_, T> {
        NodeRef { tree: self, id }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeRef<'_, T>> + '_ {
        (0..self.nodes.len() as u32).map(move |id| self.node(id))
    }

    /// Edge length of a node at `depth`; exact power-of-two scaling of the root edge.
    pub fn edge_at(&self, depth: u32) -> T {
        self.cube.edge * T::lit((-(depth as f64)).exp2())
    }

    /// Geometry of the cell with Morton prefix `key` at `depth`.
    pub fn cell_bounds(&self, depth: u32, key: u64) -> BoundingCube<T> {
        let edge = self.edge_at(depth);
        let [i, j, k] = morton::decode(key);
        let m = &self.cube.min;
        BoundingCube::new(
            Point3::new(
                m.x + T::from_count(i as usize) * edge,
                m.y + T::from_count(j as usize) * edge,
                m.z + T::from_count(k as usize) * edge,
            ),
            edge,
        )
    }

    /// Span in the sorted arrays of the cell `key` at `depth`.
    pub fn code_range(&self, depth: u32, key: u64) -> Range<usize> {
        code_span(&self.codes, self.max_depth, depth, key)
    }

    /// Nodes at depth `d`, plus every shallower leaf (reported once, flagged terminal).
    pub fn nodes_at_depth(&self, d: u32) -> Result<Vec<NodeRef<'_, T>>, IndexError> {
        if d > self.max_depth {
            return Err(IndexError::QueryDepth {
                requested: d,
                max: self.max_depth,
            });
        }
        let mut out = Vec::new();
        for (depth, level) in self.levels.iter().enumerate() {
            let depth = depth as u32;
            if depth > d {
                break;
            }
            for id in level.clone() {
                let n = self.node(id);
                if depth == d || n.is_leaf() {
                    out.push(n);
                }
            }
        }
        Ok(out)
    }

    /// Descends from the root to the node holding the cell `key` at `depth`,
    /// stopping early at a leaf. Returns `None` if the path enters an empty octant.
    pub fn locate(&self, depth: u32, key: u64) -> Option<NodeRef<'_, T>> {
        let mut cur = self.root();
        for d in 0..depth {
            if cur.is_leaf() {
                return Some(cur);
            }
            let oct = ((key >> (3 * (depth - d - 1))) & 7) as usize;
            cur = cur.child(oct)?;
        }
        Some(cur)
    }
}

/// Span of sorted `codes` (at `max_depth`) falling in the cell `key` at `depth`.
pub fn code_span(codes: &[u64], max_depth: u32, depth: u32, key: u64) -> Range<usize> {
    let shift = 3 * (max_depth - depth);
    let lo = key << shift;
    let hi = lo + (1u64 << shift);
    let s = codes.partition_point(|&c| c < lo);
    let e = s + codes[s..].partition_point(|&c| c < hi);
    s..e
}

/// Borrowed view of one octree node.
#[derive(Clone, Copy)]
pub struct NodeRef<'a, T: Real> {
    tree: &'a Octree<T>,
    id: NodeId,
}

impl<T: Real> std::fmt::Debug for NodeRef<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeRef")
            .field("id", &self.id)
            .field("depth", &self.depth())
            .field("key", &self.key())
            .field("points", &self.point_count())
            .finish()
    }
}

impl<'a, T: Real> NodeRef<'a, T> {
    fn raw(&self) -> &'a Node {
        &self.tree.nodes[self.id as usize]
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn depth(&self) -> u32 {
        self.raw().depth as u32
    }

    /// Morton prefix of this cell at its own depth.
    pub fn key(&self) -> u64 {
        self.raw().key
    }

    pub fn bounds(&self) -> BoundingCube<T> {
        self.tree.cell_bounds(self.depth(), self.key())
    }

    pub fn volume(&self) -> T {
        self.bounds().volume()
    }

    pub fn is_leaf(&self) -> bool {
        self.raw().child_mask == 0
    }

    /// A leaf above `max_depth`: no further descent exists below it.
    pub fn is_terminal(&self) -> bool {
        self.is_leaf() && self.depth() < self.tree.max_depth
    }

    pub fn point_count(&self) -> usize {
        let n = self.raw();
        (n.end - n.start) as usize
    }

    /// Indices (into the source cloud) of the points inside this node.
    pub fn point_indices(&self) -> &'a [u32] {
        let n = self.raw();
        &self.tree.order[n.start as usize..n.end as usize]
    }

    /// Span of this node in the tree's sorted arrays.
    pub fn span(&self) -> Range<usize> {
        let n = self.raw();
        n.start as usize..n.end as usize
    }

    pub fn child_mask(&self) -> u8 {
        self.raw().child_mask
    }

    /// Materialized child in `octant`, if that octant holds points.
    pub fn child(&self, octant: usize) -> Option<NodeRef<'a, T>> {
        let n = self.raw();
        if n.child_mask & (1 << octant) == 0 {
            return None;
        }
        let rank = (n.child_mask & ((1u16 << octant) - 1) as u8).count_ones();
        Some(NodeRef {
            tree: self.tree,
            id: n.first_child + rank,
        })
    }

    pub fn children(&self) -> impl Iterator<Item = NodeRef<'a, T>> + 'a {
        let this = *self;
        (0..8).filter_map(move |o| this.child(o))
    }

    pub fn child_bounds(&self, octant: usize) -> BoundingCube<T> {
        self.tree
            .cell_bounds(self.depth() + 1, (self.key() << 3) | octant as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn octant_cloud() -> PointCloud<f64> {
        let pts = (0..8)
            .map(|o| {
                Point3::new(
                    if o & 1 != 0 { 0.75 } else { 0.25 },
                    if o & 2 != 0 { 0.75 } else { 0.25 },
                    if o & 4 != 0 { 0.75 } else { 0.25 },
                )
            })
            .chain([Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0)])
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn forced_partition() {
        let pts = (0..8)
            .map(|o| {
                Point3::new(
                    if o & 1 != 0 { 0.9 } else { 0.1 },
                    if o & 2 != 0 { 0.9 } else { 0.1 },
                    if o & 4 != 0 { 0.9 } else { 0.1 },
                )
            })
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let t = build_octree(&cloud, 1, 2).unwrap();
        assert_eq!(t.root().children().count(), 8);
        for c in t.root().children() {
            assert_eq!(c.point_count(), 1);
            assert!(c.is_leaf());
            assert!(!c.is_terminal());
        }
        assert_eq!(t.nodes_at_depth(0).unwrap().len(), 1);
        assert_eq!(t.nodes_at_depth(1).unwrap().len(), 8);
    }

    #[test]
    fn boundary_points_go_to_upper_cells() {
        let c = octant_cloud();
        let t = build_octree(&c, 2, 1).unwrap();
        // (1,1,1) is on the closed max face of the root and lands in octant 7
        let top = t.root().child(7).unwrap();
        assert!(top.point_indices().contains(&9));
        let bottom = t.root().child(0).unwrap();
        assert!(bottom.point_indices().contains(&8));
    }

    #[test]
    fn errors() {
        assert_eq!(build_octree(&PointCloud::<f64>::empty(), 3, 1).unwrap_err(), IndexError::EmptyCloud);
        let c = octant_cloud();
        assert!(matches!(build_octree(&c, 0, 1), Err(IndexError::DepthOutOfRange(0))));
        assert!(matches!(build_octree(&c, 22, 1), Err(IndexError::DepthOutOfRange(22))));
        let t = build_octree(&c, 3, 1).unwrap();
        assert!(t.nodes_at_depth(4).is_err());
    }

    #[test]
    fn terminal_leaves_reported_once() {
        // a dense cluster and a lone point: the lone point stops early with threshold 2
        let mut pts: Vec<_> = (0..20).map(|i| Point3::new(0.01 * i as f64, 0.0, 0.0)).collect();
        pts.push(Point3::new(8.0, 8.0, 8.0));
        let t = build_octree(&PointCloud::new(pts).unwrap(), 4, 2).unwrap();
        let lone = t.root().child(7).unwrap();
        assert!(lone.is_terminal());
        for d in 1..=4 {
            let nodes = t.nodes_at_depth(d).unwrap();
            assert_eq!(nodes.iter().filter(|n| n.id() == lone.id()).count(), 1);
        }
    }

    #[test]
    fn locate_follows_keys() {
        let c = octant_cloud();
        let t = build_octree(&c, 3, 1).unwrap();
        for n in t.nodes() {
            assert_eq!(t.locate(n.depth(), n.key()).unwrap().id(), n.id());
        }
    }
}
