use rand::Rng;
use serde::{Deserialize, Serialize};

use super::building::{sample_rectangle, Aabb};
use super::{rng, SynthError};
use crate::cloud::{ChangeLabel, Point3, PointCloud};
use crate::scalar::Real;

/// Material removed between epoch `epoch − 1` and `epoch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Removal {
    pub epoch: u32,
    #[serde(flatten)]
    pub region: Aabb,
}

/// Debris scattered on the ground under each removed footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RubbleSpec {
    /// Points per m² of footprint.
    pub density: f64,
    /// Debris layer thickness above the envelope floor, m.
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemolitionScript {
    pub removals: Vec<Removal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rubble: Option<RubbleSpec>,
}

impl DemolitionScript {
    pub fn validate(&self) -> Result<(), SynthError> {
        if let Some(r) = self.removals.iter().find(|r| !r.region.is_valid()) {
            return Err(SynthError::InvalidSpec(format!("removal box {:?} is empty or non-finite", r.region)));
        }
        if let Some(r) = &self.rubble {
            if !(r.density > 0.0 && r.thickness >= 0.0 && r.density.is_finite() && r.thickness.is_finite()) {
                return Err(SynthError::InvalidSpec("rubble density must be > 0 and thickness >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn last_epoch(&self) -> u32 {
        self.removals.iter().map(|r| r.epoch).max().unwrap_or(0)
    }

    fn boxes(&self, keep: impl Fn(u32) -> bool) -> Vec<Aabb> {
        self.removals.iter().filter(|r| keep(r.epoch)).map(|r| r.region).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemolitionResult<T: Real> {
    pub later: PointCloud<T>,
    /// On the earlier cloud: `Changed` for removed points.
    pub earlier_labels: Vec<ChangeLabel>,
    /// On the later cloud: `Added` for rubble, `Unchanged` otherwise.
    pub later_labels: Vec<ChangeLabel>,
    /// Solid volume newly removed from the envelope in this epoch, m³.
    pub removed_volume: f64,
}

/// Volume of (∪ `boxes`) ∩ `envelope` minus the part inside ∪ `already`.
pub fn removed_volume(envelope: &Aabb, boxes: &[Aabb], already: &[Aabb]) -> f64 {
    let clip: Vec<Aabb> = boxes.iter().filter_map(|b| b.intersection(envelope)).collect();
    if clip.is_empty() {
        return 0.0;
    }
    let cuts = |a: usize| {
        let mut v: Vec<f64> = clip.iter().chain(already).flat_map(|b| [b.min[a], b.max[a]]).collect();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v.dedup();
        v
    };
    let (xs, ys, zs) = (cuts(0), cuts(1), cuts(2));
    let mut vol = 0.0;
    for x in xs.windows(2) {
        for y in ys.windows(2) {
            for z in zs.windows(2) {
                let c = [(x[0] + x[1]) / 2.0, (y[0] + y[1]) / 2.0, (z[0] + z[1]) / 2.0];
                if clip.iter().any(|b| b.contains(c)) && !already.iter().any(|b| b.contains(c)) {
                    vol += (x[1] - x[0]) * (y[1] - y[0]) * (z[1] - z[0]);
                }
            }
        }
    }
    vol
}

/// Removes every point of `cloud` inside a box tagged `epoch` (closed
/// containment) and optionally adds rubble.
pub fn apply_demolition<T: Real>(
    cloud: &PointCloud<T>,
    envelope: &Aabb,
    script: &DemolitionScript,
    epoch: u32,
    seed: u64,
) -> Result<DemolitionResult<T>, SynthError> {
    script.validate()?;
    let boxes = script.boxes(|e| e == epoch);
    let mut keep = Vec::with_capacity(cloud.len());
    let mut earlier_labels = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.iter().enumerate() {
        let q = [p.x.as_f64(), p.y.as_f64(), p.z.as_f64()];
        if boxes.iter().any(|b| b.contains(q)) {
            earlier_labels.push(ChangeLabel::Changed);
        } else {
            earlier_labels.push(ChangeLabel::Unchanged);
            keep.push(i);
        }
    }
    let mut later = cloud.select(&keep);
    let mut later_labels = vec![ChangeLabel::Unchanged; later.len()];
    if let Some(rub) = &script.rubble {
        let mut r = rng(seed);
        let mut pts = Vec::new();
        for b in boxes.iter().filter_map(|b| b.intersection(envelope)) {
            let z0 = envelope.min[2];
            let start = pts.len();
            sample_rectangle(
                [b.min[0], b.min[1], z0],
                [b.max[0] - b.min[0], 0.0, 0.0],
                [0.0, b.max[1] - b.min[1], 0.0],
                rub.density,
                &mut r,
                &mut pts,
            );
            for p in &mut pts[start..] {
                p[2] = z0 + r.random::<f64>() * rub.thickness;
            }
        }
        let rubble = pts.iter().map(|p| Point3::new(T::lit(p[0]), T::lit(p[1]), T::lit(p[2]))).collect();
        let rubble = PointCloud::new(rubble).expect("finite rubble");
        later_labels.extend(std::iter::repeat_n(ChangeLabel::Added, rubble.len()));
        later = if later.is_empty() { rubble } else { later.without_labels().concat(&rubble) };
    }
    let already = script.boxes(|e| e < epoch);
    Ok(DemolitionResult {
        later,
        earlier_labels,
        later_labels,
        removed_volume: removed_volume(envelope, &boxes, &already),
    })
}

/// Epoch 0 is `base`; epoch k applies the removals tagged k to epoch k − 1.
/// Returns one cloud per epoch and the removed volume per interval.
pub fn demolition_series<T: Real>(
    base: &PointCloud<T>,
    envelope: &Aabb,
    script: &DemolitionScript,
    seed: u64,
) -> Result<(Vec<PointCloud<T>>, Vec<f64>), SynthError> {
    let mut clouds = vec![base.clone()];
    let mut volumes = Vec::new();
    for e in 1..=script.last_epoch() {
        let r = apply_demolition(clouds.last().expect("nonempty"), envelope, script, e, seed.wrapping_add(e as u64))?;
        clouds.push(r.later);
        volumes.push(r.removed_volume);
    }
    Ok((clouds, volumes))
}
