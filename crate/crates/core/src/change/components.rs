use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ChangeError;
use crate::cloud::PointCloud;
use crate::index::{IndexError, KdTree};
use crate::scalar::Real;

/// Result of Euclidean clustering on a subset of a cloud.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Components {
    /// Surviving cloud indices, ascending.
    pub kept: Vec<usize>,
    /// Cluster id per entry of `kept`; clusters are numbered by their smallest index.
    pub labels: Vec<u32>,
    pub cluster_count: usize,
}

/// Links points of `subset` closer than `radius` (closed), then drops clusters
/// with fewer than `min_size` members. Duplicate subset entries are ignored.
pub fn component_filter<T: Real>(
    cloud: &PointCloud<T>,
    subset: &[usize],
    radius: T,
    min_size: usize,
) -> Result<Components, ChangeError> {
    if !(radius > T::zero()) {
        return Err(ChangeError::Index(IndexError::NonPositiveRadius));
    }
    let mut idx = subset.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if idx.is_empty() {
        return Ok(Components::default());
    }
    if let Some(&bad) = idx.last().filter(|&&i| i >= cloud.len()) {
        return Err(ChangeError::InvalidParams(format!(
            "subset index {bad} out of range for {} points",
            cloud.len()
        )));
    }
    let pts: Vec<_> = idx.iter().map(|&i| *cloud.point(i)).collect();
    let tree = KdTree::build(&pts)?;
    let edges: Vec<Vec<usize>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut nb = Vec::new();
            tree.within_into(&pts[i], radius, &mut nb);
            nb.retain(|&j| j > i);
            nb
        })
        .collect();
    let mut uf = UnionFind::<usize>::new(pts.len());
    for (i, nb) in edges.iter().enumerate() {
        for &j in nb {
            uf.union(i, j);
        }
    }
    let roots = uf.into_labeling();
    let mut size = vec![0usize; pts.len()];
    roots.iter().for_each(|&r| size[r] += 1);

    let mut id = vec![u32::MAX; pts.len()];
    let mut out = Components::default();
    for (i, &r) in roots.iter().enumerate() {
        if size[r] < min_size {
            continue;
        }
        if id[r] == u32::MAX {
            id[r] = out.cluster_count as u32;
            out.cluster_count += 1;
        }
        out.kept.push(idx[i]);
        out.labels.push(id[r]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;

    fn line(n: usize, x0: f64, step: f64) -> Vec<Point3<f64>> {
        (0..n).map(|i| Point3::new(x0 + i as f64 * step, 0.0, 0.0)).collect()
    }

    #[test]
    fn small_clusters_dropped() {
        let mut pts = line(10, 0.0, 0.1);
        pts.extend(line(3, 5.0, 0.1));
        pts.extend(line(6, 10.0, 0.1));
        let c = PointCloud::new(pts).unwrap();
        let all: Vec<usize> = (0..c.len()).collect();
        let cc = component_filter(&c, &all, 0.1000001, 5).unwrap();
        assert_eq!(cc.cluster_count, 2);
        assert_eq!(cc.kept, (0..10).chain(13..19).collect::<Vec<_>>());
        assert_eq!(&cc.labels[..10], &[0; 10]);
        assert_eq!(&cc.labels[10..], &[1; 6]);
    }

    #[test]
    fn subset_only() {
        let c = PointCloud::new(line(10, 0.0, 1.0)).unwrap();
        let cc = component_filter(&c, &[9, 3, 4, 3, 5], 1.0, 3).unwrap();
        assert_eq!(cc.kept, vec![3, 4, 5]);
        assert!(component_filter(&c, &[], 1.0, 1).unwrap().kept.is_empty());
        assert!(component_filter(&c, &[10], 1.0, 1).is_err());
        assert!(component_filter(&c, &[1], 0.0, 1).is_err());
    }
}
