use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::VolumeError;
use crate::change::ChangeSet;
use crate::cloud::PointCloud;
use crate::scalar::Real;

/// Which epochs had changed points in a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Both,
    /// Only the earlier epoch: height is the removed stack's own extent.
    RemovedOnly,
    /// Only the later epoch: height is the added stack's own extent.
    AddedOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GridCell<T: Real> {
    pub ix: u32,
    pub iy: u32,
    pub height: T,
    pub kind: CellKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub earlier_top: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub later_top: Option<T>,
}

/// Sparse planimetric grid; cells absent from `cells` are unoccupied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GroundGrid<T: Real> {
    pub cell_size: T,
    pub origin: [T; 2],
    pub nx: u32,
    pub ny: u32,
    /// Occupied cells, ordered by (ix, iy).
    pub cells: Vec<GridCell<T>>,
}

impl<T: Real> GroundGrid<T> {
    pub fn empty(cell_size: T) -> Self {
        GroundGrid {
            cell_size,
            origin: [T::zero(), T::zero()],
            nx: 0,
            ny: 0,
            cells: Vec::new(),
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_occupied(&self, ix: u32, iy: u32) -> bool {
        self.cell(ix, iy).is_some()
    }

    pub fn cell(&self, ix: u32, iy: u32) -> Option<&GridCell<T>> {
        self.cells
            .binary_search_by(|c| (c.ix, c.iy).cmp(&(ix, iy)))
            .ok()
            .map(|i| &self.cells[i])
    }

    /// The same grid keeping only cells accepted by `keep`.
    pub fn restrict(&self, keep: impl Fn(&GridCell<T>) -> bool) -> Self {
        GroundGrid {
            cells: self.cells.iter().filter(|c| keep(c)).cloned().collect(),
            ..self.clone()
        }
    }

    /// Planimetric center of cell (ix, iy).
    pub fn cell_center(&self, ix: u32, iy: u32) -> [T; 2] {
        let h = T::lit(0.5);
        [
            self.origin[0] + (T::from_count(ix as usize) + h) * self.cell_size,
            self.origin[1] + (T::from_count(iy as usize) + h) * self.cell_size,
        ]
    }
}

#[derive(Clone, Copy)]
struct Span<T> {
    lo: T,
    hi: T,
}

fn bin<T: Real>(
    cloud: &PointCloud<T>,
    idx: &[usize],
    origin: [T; 2],
    s: T,
    which: &'static str,
) -> Result<BTreeMap<(u32, u32), Span<T>>, VolumeError> {
    let mut m: BTreeMap<(u32, u32), Span<T>> = BTreeMap::new();
    for &i in idx {
        if i >= cloud.len() {
            return Err(VolumeError::IndexOutOfRange { which, index: i, len: cloud.len() });
        }
        let p = cloud.point(i);
        let ix = ((p.x - origin[0]) / s).floor().as_f64() as u32;
        let iy = ((p.y - origin[1]) / s).floor().as_f64() as u32;
        m.entry((ix, iy))
            .and_modify(|sp| {
                sp.lo = sp.lo.min(p.z);
                sp.hi = sp.hi.max(p.z);
            })
            .or_insert(Span { lo: p.z, hi: p.z });
    }
    Ok(m)
}

/// Projects the changed points of both epochs onto an xy grid of cell size
/// `s` whose origin is the minimum changed (x, y).
pub fn build_ground_grid<T: Real>(
    changes: &ChangeSet<T>,
    earlier: &PointCloud<T>,
    later: &PointCloud<T>,
    s: T,
) -> Result<GroundGrid<T>, VolumeError> {
    if !(s > T::zero()) {
        return Err(VolumeError::NonPositiveCellSize);
    }
    let e_idx = &changes.reference_changed;
    let l_idx = &changes.other_changed;
    for (idx, cloud, which) in [(e_idx, earlier, "earlier"), (l_idx, later, "later")] {
        if let Some(&i) = idx.iter().find(|&&i| i >= cloud.len()) {
            return Err(VolumeError::IndexOutOfRange { which, index: i, len: cloud.len() });
        }
    }
    let mut pts = e_idx.iter().map(|&i| earlier.point(i)).chain(l_idx.iter().map(|&i| later.point(i)));
    let Some(first) = pts.next() else {
        return Ok(GroundGrid::empty(s));
    };
    let mut origin = [first.x, first.y];
    let mut top = origin;
    for p in pts {
        origin = [origin[0].min(p.x), origin[1].min(p.y)];
        top = [top[0].max(p.x), top[1].max(p.y)];
    }
    let e = bin(earlier, e_idx, origin, s, "earlier")?;
    let l = bin(later, l_idx, origin, s, "later")?;

    let mut cells = Vec::with_capacity(e.len().max(l.len()));
    let mut keys: Vec<(u32, u32)> = e.keys().chain(l.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    for k in keys {
        let (a, b) = (e.get(&k), l.get(&k));
        let (height, kind) = match (a, b) {
            (Some(a), Some(b)) => ((a.hi - b.hi).abs(), CellKind::Both),
            (Some(a), None) => (a.hi - a.lo, CellKind::RemovedOnly),
            (None, Some(b)) => (b.hi - b.lo, CellKind::AddedOnly),
            (None, None) => unreachable!(),
        };
        cells.push(GridCell {
            ix: k.0,
            iy: k.1,
            height,
            kind,
            earlier_top: a.map(|a| a.hi),
            later_top: b.map(|b| b.hi),
        });
    }
    let count = |t: T, o: T| ((t - o) / s).floor().as_f64() as u32 + 1;
    Ok(GroundGrid {
        cell_size: s,
        origin,
        nx: count(top[0], origin[0]),
        ny: count(top[1], origin[1]),
        cells,
    })
}

/// V = Σ s²·hᵢ over occupied cells.
pub fn change_volume<T: Real>(grid: &GroundGrid<T>) -> T {
    let a = grid.cell_size * grid.cell_size;
    grid.cells.iter().fold(T::zero(), |v, c| v + a * c.height)
}
