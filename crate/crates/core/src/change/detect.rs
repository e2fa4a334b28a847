use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::components::component_filter;
use super::density::{count_distance, subvoxel_index_clamped, subvoxel_volume};
use super::{ChangeError, ChangeParams};
use crate::cloud::{BoundingCube, ChangeLabel, PointCloud};
use crate::index::{build_octree, code_span, KdTree, NodeId, Octree};
use crate::scalar::Real;

/// A finest-scale voxel flagged as changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChangedVoxel<T: Real> {
    pub depth: u32,
    /// Morton prefix of the cell at `depth`.
    pub key: u64,
    pub bounds: BoundingCube<T>,
    pub score: T,
    /// Reference leaf above the finest depth (no further descent existed).
    pub terminal: bool,
    /// Still holds at least one changed point after component filtering.
    pub retained: bool,
}

/// Scoring summary for one depth of the descent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelStats {
    pub depth: u32,
    pub evaluated: usize,
    pub survived: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChangeSet<T: Real> {
    /// Changed voxels K, disjoint, in descent order.
    pub voxels: Vec<ChangedVoxel<T>>,
    /// Reference-epoch point indices kept after component filtering, ascending.
    pub reference_changed: Vec<usize>,
    /// Cluster id of each entry of `reference_changed`.
    pub reference_clusters: Vec<u32>,
    pub other_changed: Vec<usize>,
    pub other_clusters: Vec<u32>,
    /// Points inside K before component filtering.
    pub reference_in_voxels: usize,
    pub other_in_voxels: usize,
    /// Later-epoch points outside the reference root cube (never evaluated).
    pub other_outside_root: usize,
    pub root: BoundingCube<T>,
    pub finest_edge: T,
    /// Linking radius actually used by the component filter.
    pub component_radius: T,
    pub levels: Vec<LevelStats>,
    pub params: ChangeParams<T>,
}

impl<T: Real> ChangeSet<T> {
    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    fn labels(len: usize, changed: &[usize], mark: ChangeLabel) -> Vec<ChangeLabel> {
        let mut l = vec![ChangeLabel::Unchanged; len];
        for &i in changed {
            l[i] = mark;
        }
        l
    }

    /// Per-point labels for the reference cloud (`Changed` = material removed or altered).
    pub fn reference_labels(&self, len: usize) -> Vec<ChangeLabel> {
        Self::labels(len, &self.reference_changed, ChangeLabel::Changed)
    }

    /// Per-point labels for the later cloud.
    pub fn other_labels(&self, len: usize) -> Vec<ChangeLabel> {
        Self::labels(len, &self.other_changed, ChangeLabel::Changed)
    }

    /// Voxels with their retained flag set.
    pub fn retained_voxels(&self) -> impl Iterator<Item = &ChangedVoxel<T>> {
        self.voxels.iter().filter(|v| v.retained)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    depth: u32,
    key: u64,
    node: Option<NodeId>,
    terminal: bool,
}

struct Context<'a, T: Real> {
    tree: &'a Octree<T>,
    reference: &'a PointCloud<T>,
    other: &'a PointCloud<T>,
    other_codes: Vec<u64>,
    other_order: Vec<u32>,
    m: usize,
    normalize: bool,
}

impl<T: Real> Context<'_, T> {
    fn other_span(&self, depth: u32, key: u64) -> std::ops::Range<usize> {
        code_span(&self.other_codes, self.tree.max_depth(), depth, key)
    }

    fn reference_points(&self, c: &Candidate) -> &[u32] {
        c.node.map_or(&[], |n| self.tree.node(n).point_indices())
    }

    fn other_points(&self, c: &Candidate) -> &[u32] {
        &self.other_order[self.other_span(c.depth, c.key)]
    }

    fn score(&self, c: &Candidate) -> T {
        let bounds = self.tree.cell_bounds(c.depth, c.key);
        let n = self.m * self.m * self.m;
        let mut c1 = vec![0u32; n];
        let mut c2 = vec![0u32; n];
        for &i in self.reference_points(c) {
            c1[subvoxel_index_clamped(self.reference.point(i as usize), &bounds, self.m)] += 1;
        }
        for &i in self.other_points(c) {
            c2[subvoxel_index_clamped(self.other.point(i as usize), &bounds, self.m)] += 1;
        }
        count_distance(&c1, &c2, subvoxel_volume(bounds.edge, self.m), self.normalize)
    }

    fn candidate(&self, depth: u32, key: u64, node: Option<NodeId>) -> Candidate {
        Candidate {
            depth,
            key,
            node,
            terminal: node.is_some_and(|n| self.tree.node(n).is_terminal()),
        }
    }

    /// Occupied (in either epoch) children of a non-terminal candidate.
    fn children(&self, c: &Candidate, out: &mut Vec<Candidate>) {
        for oct in 0..8usize {
            let key = (c.key << 3) | oct as u64;
            let node = c.node.and_then(|n| self.tree.node(n).child(oct)).map(|n| n.id());
            if node.is_some() || !self.other_span(c.depth + 1, key).is_empty() {
                out.push(self.candidate(c.depth + 1, key, node));
            }
        }
    }

    /// Cells at `target`, plus shallower reference leaves, occupied in either epoch.
    fn enumerate(&self, c: Candidate, target: u32, out: &mut Vec<Candidate>) {
        if c.depth == target || c.terminal {
            out.push(c);
            return;
        }
        let mut kids = Vec::with_capacity(8);
        self.children(&c, &mut kids);
        for k in kids {
            self.enumerate(k, target, out);
        }
    }
}

/// Median distance to the 4th nearest neighbor over up to ~1000 evenly strided points.
pub fn typical_spacing<T: Real>(cloud: &PointCloud<T>) -> T {
    const K: usize = 4;
    if cloud.len() <= K {
        return T::zero();
    }
    let tree = KdTree::build(cloud.points()).expect("nonempty");
    let stride = (cloud.len() / 1000).max(1);
    let mut d: Vec<T> = (0..cloud.len())
        .step_by(stride)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| tree.knn(cloud.point(i), K + 1).expect("len > K")[K].distance())
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d[d.len() / 2]
}

/// Coarse-to-fine change detection between `reference` (which defines the
/// octree) and `other`, both in the same frame.
pub fn hierarchical_detect<T: Real>(
    reference: &PointCloud<T>,
    other: &PointCloud<T>,
    params: &ChangeParams<T>,
) -> Result<ChangeSet<T>, ChangeError> {
    params.validate()?;
    if reference.is_empty() {
        return Err(ChangeError::EmptyCloud("reference"));
    }
    if other.is_empty() {
        return Err(ChangeError::EmptyCloud("other"));
    }
    let tree = build_octree(reference, params.max_depth, params.min_points_to_split)?;
    detect_with_tree(&tree, reference, other, params)
}

/// As [`hierarchical_detect`], reusing an octree already built on `reference`
/// with `params.max_depth`.
pub fn detect_with_tree<T: Real>(
    tree: &Octree<T>,
    reference: &PointCloud<T>,
    other: &PointCloud<T>,
    params: &ChangeParams<T>,
) -> Result<ChangeSet<T>, ChangeError> {
    params.validate()?;
    if tree.max_depth() != params.max_depth || tree.point_count() != reference.len() {
        return Err(ChangeError::InvalidParams(
            "octree does not match the reference cloud or max_depth".into(),
        ));
    }
    let mut keyed: Vec<(u64, u32)> = other
        .points()
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| tree.code(p).map(|c| (c, i as u32)))
        .collect();
    let other_outside_root = other.len() - keyed.len();
    keyed.par_sort_unstable();
    let ctx = Context {
        tree,
        reference,
        other,
        other_codes: keyed.iter().map(|k| k.0).collect(),
        other_order: keyed.iter().map(|k| k.1).collect(),
        m: params.subdivisions,
        normalize: params.normalize,
    };

    let mut cands = Vec::new();
    let root = ctx.candidate(0, 0, Some(tree.root().id()));
    ctx.enumerate(root, params.start_depth, &mut cands);

    let mut voxels = Vec::new();
    let mut levels = Vec::new();
    for depth in params.start_depth..=params.max_depth {
        if cands.is_empty() {
            break;
        }
        let tau = params.threshold_at(depth);
        let scores: Vec<T> = cands.par_iter().map(|c| ctx.score(c)).collect();
        let mut next = Vec::new();
        let mut survived = 0;
        for (c, &s) in cands.iter().zip(&scores) {
            if !(s >= tau) {
                continue;
            }
            survived += 1;
            if c.terminal || c.depth == params.max_depth {
                voxels.push((*c, s));
            } else {
                ctx.children(c, &mut next);
            }
        }
        levels.push(LevelStats {
            depth,
            evaluated: cands.len(),
            survived,
        });
        cands = next;
    }

    let gather = |f: &dyn Fn(&Candidate) -> Vec<usize>| -> Vec<usize> {
        let mut v: Vec<usize> = voxels.iter().flat_map(|(c, _)| f(c)).collect();
        v.sort_unstable();
        v
    };
    let ref_in = gather(&|c| ctx.reference_points(c).iter().map(|&i| i as usize).collect());
    let other_in = gather(&|c| ctx.other_points(c).iter().map(|&i| i as usize).collect());

    let finest_edge = tree.edge_at(params.max_depth);
    let radius = match params.component_radius {
        Some(r) => r,
        None if ref_in.is_empty() && other_in.is_empty() => finest_edge * T::lit(1.5),
        None => finest_edge.max(typical_spacing(reference)) * T::lit(1.5),
    };
    let min_size = params.component_min_size;
    let ref_cc = component_filter(reference, &ref_in, radius, min_size)?;
    let other_cc = component_filter(other, &other_in, radius, min_size)?;

    let mut ref_keep = vec![false; reference.len()];
    ref_cc.kept.iter().for_each(|&i| ref_keep[i] = true);
    let mut other_keep = vec![false; other.len()];
    other_cc.kept.iter().for_each(|&i| other_keep[i] = true);

    let voxels = voxels
        .iter()
        .map(|(c, s)| ChangedVoxel {
            depth: c.depth,
            key: c.key,
            bounds: tree.cell_bounds(c.depth, c.key),
            score: *s,
            terminal: c.terminal,
            retained: ctx.reference_points(c).iter().any(|&i| ref_keep[i as usize])
                || ctx.other_points(c).iter().any(|&i| other_keep[i as usize]),
        })
        .collect();

    Ok(ChangeSet {
        voxels,
        reference_in_voxels: ref_in.len(),
        other_in_voxels: other_in.len(),
        reference_changed: ref_cc.kept,
        reference_clusters: ref_cc.labels,
        other_changed: other_cc.kept,
        other_clusters: other_cc.labels,
        other_outside_root,
        root: *tree.cube(),
        finest_edge,
        component_radius: radius,
        levels,
        params: params.clone(),
    })
}
