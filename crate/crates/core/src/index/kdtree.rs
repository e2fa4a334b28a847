//! Exact k-d tree for nearest-neighbor and fixed-radius queries.

use std::cmp::Ordering;

use super::IndexError;
use crate::cloud::Point3;
use crate::scalar::Real;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub dist_sq: T,
}

impl<T: Real> Neighbor<T> {
    pub fn distance(&self) -> T {
        self.dist_sq.sqrt()
    }

    /// Total order: distance, then index.
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.dist_sq
            .partial_cmp(&other.dist_sq)
            .unwrap_or(Ordering::Equal)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
enum KdNode<T> {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: T, left: u32, right: u32 },
}

#[derive(Debug, Clone)]
pub struct KdTree<T: Real> {
    points: Vec<Point3<T>>,
    order: Vec<u32>,
    nodes: Vec<KdNode<T>>,
}

#[inline]
fn dist_sq<T: Real>(a: &Point3<T>, b: &Point3<T>) -> T {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl<T: Real> KdTree<T> {
    pub fn build(points: &[Point3<T>]) -> Result<Self, IndexError> {
        if points.is_empty() {
            return Err(IndexError::EmptyCloud);
        }
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        tree.build_rec(0, points.len());
        Ok(tree)
    }

    fn build_rec(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let mut lo = self.points[self.order[start] as usize];
        let mut hi = lo;
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap_or(Ordering::Equal))
            .unwrap();
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a as usize][axis]
                .partial_cmp(&pts[b as usize][axis])
                .unwrap_or(Ordering::Equal)
        });
        let value = self.points[self.order[mid] as usize][axis];
        self.nodes.push(KdNode::Leaf { start: 0, end: 0 });
        let left = self.build_rec(start, mid);
        let right = self.build_rec(mid, end);
        self.nodes[id as usize] = KdNode::Split {
            axis: axis as u8,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    /// `k` nearest neighbors sorted by (distance, index).
    pub fn knn(&self, query: &Point3<T>, k: usize) -> Result<Vec<Neighbor<T>>, IndexError> {
        if k > self.points.len() {
            return Err(IndexError::TooManyNeighbors {
                k,
                len: self.points.len(),
            });
        }
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 {
            self.knn_rec(0, query, k, &mut best);
        }
        Ok(best)
    }

    fn knn_rec(&self, node: u32, q: &Point3<T>, k: usize, best: &mut Vec<Neighbor<T>>) {
        match self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let cand = Neighbor {
                        index: i as usize,
                        dist_sq: dist_sq(&self.points[i as usize], q),
                    };
                    if best.len() == k && cand.cmp_key(&best[k - 1]) != Ordering::Less {
                        continue;
                    }
                    let pos = best.partition_point(|b| b.cmp_key(&cand) == Ordering::Less);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, best);
                // ties at equal distance may still hold a lower index on the far side
                if best.len() < k || diff * diff <= best[k - 1].dist_sq {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }

    pub fn nearest(&self, query: &Point3<T>) -> Neighbor<T> {
        let mut best = Neighbor {
            index: usize::MAX,
            dist_sq: T::max_value().unwrap(),
        };
        self.nearest_rec(0, query, &mut best);
        best
    }

    fn nearest_rec(&self, node: u32, q: &Point3<T>, best: &mut Neighbor<T>) {
        match self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d = dist_sq(&self.points[i as usize], q);
                    if d < best.dist_sq || (d == best.dist_sq && (i as usize) < best.index) {
                        *best = Neighbor { index: i as usize, dist_sq: d };
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.dist_sq {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// Indices within closed distance `radius`, ascending.
    pub fn within(&self, query: &Point3<T>, radius: T) -> Result<Vec<usize>, IndexError> {
        if radius <= T::zero() {
            return Err(IndexError::NonPositiveRadius);
        }
        let mut out = Vec::new();
        self.within_rec(0, query, radius * radius, &mut out);
        out.sort_unstable();
        Ok(out)
    }

    /// Like [`KdTree::within`] but reuses `out` and leaves it unsorted.
    pub fn within_into(&self, query: &Point3<T>, radius: T, out: &mut Vec<usize>) {
        out.clear();
        self.within_rec(0, query, radius * radius, out);
    }

    fn within_rec(&self, node: u32, q: &Point3<T>, r2: T, out: &mut Vec<usize>) {
        match self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    if dist_sq(&self.points[i as usize], q) <= r2 {
                        out.push(i as usize);
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.within_rec(far, q, r2, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<Point3<f64>> {
        (0..n).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()
    }

    #[test]
    fn query_on_point() {
        let t = KdTree::build(&line(50)).unwrap();
        let nn = t.knn(&Point3::new(17.0, 0.0, 0.0), 1).unwrap();
        assert_eq!(nn[0].index, 17);
        assert_eq!(nn[0].dist_sq, 0.0);
    }

    #[test]
    fn k_equals_len_returns_all() {
        let t = KdTree::build(&line(40)).unwrap();
        let nn = t.knn(&Point3::new(0.0, 0.0, 0.0), 40).unwrap();
        assert_eq!(nn.len(), 40);
        assert!(t.knn(&Point3::origin(), 41).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        let pts = vec![Point3::new(1.0, 0.0, 0.0); 30];
        let t = KdTree::build(&pts).unwrap();
        let nn = t.knn(&Point3::origin(), 5).unwrap();
        assert_eq!(nn.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn radius_edges() {
        let t = KdTree::build(&line(30)).unwrap();
        assert_eq!(t.within(&Point3::new(3.0, 0.0, 0.0), 0.5).unwrap(), vec![3]);
        assert_eq!(t.within(&Point3::new(3.0, 0.0, 0.0), 100.0).unwrap().len(), 30);
        assert_eq!(t.within(&Point3::new(3.0, 0.0, 0.0), 1.0).unwrap(), vec![2, 3, 4]);
        assert!(t.within(&Point3::origin(), 0.0).is_err());
    }
}
