use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng, SynthError};
use crate::cloud::{Point3, PointCloud};
use crate::scalar::Real;

/// Axis-aligned box, closed on all faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| (self.max[a] - self.min[a]).max(0.0)).product()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn intersection(&self, o: &Aabb) -> Option<Aabb> {
        let min = [0, 1, 2].map(|a| self.min[a].max(o.min[a]));
        let max = [0, 1, 2].map(|a| self.max[a].min(o.max[a]));
        (0..3).all(|a| min[a] < max[a]).then_some(Aabb { min, max })
    }

    pub(crate) fn is_valid(&self) -> bool {
        (0..3).all(|a| self.min[a].is_finite() && self.max[a].is_finite() && self.min[a] < self.max[a])
    }
}

/// Square interior columns on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnGrid {
    pub nx: usize,
    pub ny: usize,
    /// Side length of a column, m.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingSpec {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub story_height: f64,
    /// Surface sampling density, points/m².
    pub density: f64,
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<ColumnGrid>,
}

impl Default for BuildingSpec {
    fn default() -> Self {
        BuildingSpec {
            width: 20.0,
            length: 20.0,
            height: 10.0,
            story_height: 3.0,
            density: 400.0,
            origin: [0.0; 3],
            columns: None,
        }
    }
}

impl BuildingSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.width) && pos(self.length) && pos(self.height) && pos(self.story_height) && pos(self.density)) {
            return Err(SynthError::InvalidSpec("building dimensions and density must be positive".into()));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::InvalidSpec("origin must be finite".into()));
        }
        if let Some(c) = &self.columns {
            if c.nx == 0 || c.ny == 0 || !pos(c.size) {
                return Err(SynthError::InvalidSpec("column grid needs nx, ny >= 1 and size > 0".into()));
            }
            if c.size * c.nx as f64 >= self.width || c.size * c.ny as f64 >= self.length {
                return Err(SynthError::InvalidSpec("columns do not fit inside the footprint".into()));
            }
        }
        Ok(())
    }

    pub fn envelope(&self) -> Aabb {
        let o = self.origin;
        Aabb::new(o, [o[0] + self.width, o[1] + self.length, o[2] + self.height])
    }

    /// Slab elevations above the origin: ground, every story, and the roof.
    pub fn slab_heights(&self) -> Vec<f64> {
        let mut z: Vec<f64> = (0..)
            .map(|k| k as f64 * self.story_height)
            .take_while(|&z| z < self.height - 1e-9)
            .collect();
        z.push(self.height);
        z
    }

    /// Total sampled surface area, m².
    pub fn surface_area(&self) -> f64 {
        let (w, l, h) = (self.width, self.length, self.height);
        let mut a = self.slab_heights().len() as f64 * w * l + 2.0 * (w + l) * h;
        if let Some(c) = &self.columns {
            a += (c.nx * c.ny) as f64 * 4.0 * c.size * h;
        }
        a
    }
}

/// Stratified jittered samples over the rectangle `corner + s·u + t·v`,
/// s ∈ [0, |u|], t ∈ [0, |v|], at `density` points per m².
pub fn sample_rectangle(corner: [f64; 3], u: [f64; 3], v: [f64; 3], density: f64, r: &mut impl Rng, out: &mut Vec<[f64; 3]>) {
    let len = |a: [f64; 3]| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let step = density.sqrt();
    let nu = ((len(u) * step).round() as usize).max(1);
    let nv = ((len(v) * step).round() as usize).max(1);
    for i in 0..nu {
        for j in 0..nv {
            let s = (i as f64 + r.random::<f64>()) / nu as f64;
            let t = (j as f64 + r.random::<f64>()) / nv as f64;
            out.push([0, 1, 2].map(|a| corner[a] + s * u[a] + t * v[a]));
        }
    }
}

/// Surface samples of a multi-story box building with optional columns.
pub fn generate_building<T: Real>(spec: &BuildingSpec, seed: u64) -> Result<PointCloud<T>, SynthError> {
    spec.validate()?;
    let mut r = rng(seed);
    let mut pts = Vec::with_capacity((spec.surface_area() * spec.density * 1.01) as usize);
    let [ox, oy, oz] = spec.origin;
    let (w, l, h, rho) = (spec.width, spec.length, spec.height, spec.density);
    for z in spec.slab_heights() {
        sample_rectangle([ox, oy, oz + z], [w, 0.0, 0.0], [0.0, l, 0.0], rho, &mut r, &mut pts);
    }
    let up = [0.0, 0.0, h];
    sample_rectangle([ox, oy, oz], [w, 0.0, 0.0], up, rho, &mut r, &mut pts);
    sample_rectangle([ox, oy + l, oz], [w, 0.0, 0.0], up, rho, &mut r, &mut pts);
    sample_rectangle([ox, oy, oz], [0.0, l, 0.0], up, rho, &mut r, &mut pts);
    sample_rectangle([ox + w, oy, oz], [0.0, l, 0.0], up, rho, &mut r, &mut pts);
    if let Some(c) = &spec.columns {
        for i in 0..c.nx {
            for j in 0..c.ny {
                let cx = ox + w * (i as f64 + 0.5) / c.nx as f64 - c.size / 2.0;
                let cy = oy + l * (j as f64 + 0.5) / c.ny as f64 - c.size / 2.0;
                let s = c.size;
                sample_rectangle([cx, cy, oz], [s, 0.0, 0.0], up, rho, &mut r, &mut pts);
                sample_rectangle([cx, cy + s, oz], [s, 0.0, 0.0], up, rho, &mut r, &mut pts);
                sample_rectangle([cx, cy, oz], [0.0, s, 0.0], up, rho, &mut r, &mut pts);
                sample_rectangle([cx + s, cy, oz], [0.0, s, 0.0], up, rho, &mut r, &mut pts);
            }
        }
    }
    let points = pts
        .into_iter()
        .map(|p| Point3::new(T::lit(p[0]), T::lit(p[1]), T::lit(p[2])))
        .collect();
    Ok(PointCloud::new(points).expect("finite samples"))
}
