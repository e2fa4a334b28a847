use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use super::{rng, SynthError};
use crate::posegraph::{
    project_point, rotation_log, Calibration, Camera, ExteriorOrientation, ImageObservation, Network, ObjectPoint, SelfCalibration,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseScenarioConfig {
    pub fixed_cameras: usize,
    pub free_cameras: usize,
    pub points: usize,
    /// Object points are drawn uniformly in a box of this size centered on the origin, z ≥ 0.
    pub target_size: [f64; 3],
    pub ring_radius: f64,
    /// The ring alternates between these two flying heights.
    pub ring_heights: [f64; 2],
    /// Share of each epoch's cameras placed on an overhead grid.
    pub overhead_fraction: f64,
    pub overhead_height: f64,
    pub truth_calibration: SelfCalibration<f64>,
    /// Observation noise σ, pixels.
    pub noise_px: f64,
    pub outlier_fraction: f64,
    pub outlier_px: f64,
    pub position_perturbation: f64,
    /// Rotation perturbation, degrees.
    pub rotation_perturbation: f64,
    pub point_perturbation: f64,
    /// Relative perturbation of the new epoch's focal length.
    pub focal_perturbation: f64,
    pub principal_point_perturbation: f64,
    pub seed: u64,
}

impl Default for PoseScenarioConfig {
    fn default() -> Self {
        PoseScenarioConfig {
            fixed_cameras: 20,
            free_cameras: 20,
            points: 500,
            target_size: [20.0, 20.0, 10.0],
            ring_radius: 40.0,
            ring_heights: [8.0, 20.0],
            overhead_fraction: 0.25,
            overhead_height: 45.0,
            truth_calibration: SelfCalibration { focal: 1200.0, cx: 640.0, cy: 480.0, k1: -0.05, k2: 0.01 },
            noise_px: 0.0,
            outlier_fraction: 0.0,
            outlier_px: 50.0,
            position_perturbation: 0.5,
            rotation_perturbation: 1.0,
            point_perturbation: 0.05,
            focal_perturbation: 0.01,
            principal_point_perturbation: 3.0,
            seed: 0,
        }
    }
}

/// Truth and perturbed initial networks sharing the same observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseScenario {
    pub config: PoseScenarioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Network<f64>>,
    pub initial: Network<f64>,
    /// Indices of observations displaced as gross outliers.
    #[serde(default)]
    pub outliers: Vec<usize>,
}

fn epoch_cameras(n: usize, epoch: u32, first_id: u32, cfg: &PoseScenarioConfig) -> Vec<Camera<f64>> {
    let overhead = ((n as f64) * cfg.overhead_fraction).round() as usize;
    let ring = n - overhead;
    let phase = if epoch == 0 { 0.0 } else { 0.5 };
    let target = Vector3::new(0.0, 0.0, cfg.target_size[2] / 2.0);
    let mut cams = Vec::with_capacity(n);
    for i in 0..ring {
        let a = std::f64::consts::TAU * (i as f64 + phase) / ring as f64;
        let c = Vector3::new(cfg.ring_radius * a.cos(), cfg.ring_radius * a.sin(), cfg.ring_heights[i % 2]);
        cams.push(ExteriorOrientation::look_at(c, target, Vector3::z()));
    }
    let side = (overhead as f64).sqrt().ceil().max(1.0) as usize;
    for i in 0..overhead {
        let (gx, gy) = ((i % side) as f64, (i / side) as f64);
        let span = cfg.target_size[0] * 0.6;
        let off = |g: f64| if side > 1 { span * (g / (side - 1) as f64 - 0.5) } else { 0.0 };
        let c = Vector3::new(off(gx) + phase, off(gy) - phase, cfg.overhead_height);
        cams.push(ExteriorOrientation::look_at(c, Vector3::new(off(gx) * 0.3, off(gy) * 0.3, 0.0), Vector3::y()));
    }
    cams.into_iter()
        .enumerate()
        .map(|(i, eo)| Camera { id: first_id + i as u32, epoch, calibration: epoch, eo, fixed: epoch == 0 })
        .collect()
}

/// Two-epoch network: epoch 0 fixed at truth, epoch 1 perturbed; every camera
/// sees every point.
pub fn generate_pose_scenario(cfg: &PoseScenarioConfig) -> Result<PoseScenario, SynthError> {
    let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
    if cfg.fixed_cameras + cfg.free_cameras < 2 || cfg.points == 0 {
        return bad("need at least two cameras and one point");
    }
    if !(0.0..=1.0).contains(&cfg.outlier_fraction) || !(0.0..=1.0).contains(&cfg.overhead_fraction) {
        return bad("fractions must lie in [0, 1]");
    }
    if !(cfg.noise_px >= 0.0) || !(cfg.truth_calibration.focal > 0.0) {
        return bad("noise must be >= 0 and focal length > 0");
    }
    let mut r = rng(cfg.seed);
    let mut cameras = epoch_cameras(cfg.fixed_cameras, 0, 0, cfg);
    cameras.extend(epoch_cameras(cfg.free_cameras, 1, cfg.fixed_cameras as u32, cfg));
    let calibrations: Vec<Calibration<f64>> = (0..2)
        .map(|e| Calibration { id: e, intrinsics: cfg.truth_calibration, fixed: e == 0 })
        .collect();
    let [sx, sy, sz] = cfg.target_size;
    let points: Vec<ObjectPoint<f64>> = (0..cfg.points)
        .map(|i| ObjectPoint {
            track: i as u32,
            position: Vector3::new(
                (r.random::<f64>() - 0.5) * sx,
                (r.random::<f64>() - 0.5) * sy,
                r.random::<f64>() * sz,
            ),
        })
        .collect();

    let noise = Normal::new(0.0, cfg.noise_px.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut observations = Vec::with_capacity(cameras.len() * points.len());
    for p in &points {
        let mut seen = 0;
        for c in &cameras {
            let Ok(xy) = project_point(&p.position, &c.eo, &cfg.truth_calibration) else {
                continue;
            };
            seen += 1;
            let (nx, ny) = if cfg.noise_px > 0.0 { (noise.sample(&mut r), noise.sample(&mut r)) } else { (0.0, 0.0) };
            observations.push(ImageObservation { camera: c.id, track: p.track, xy: [xy.x + nx, xy.y + ny], weight: 1.0 });
        }
        if seen < 2 {
            return Err(SynthError::UnderObserved { track: p.track, count: seen });
        }
    }
    let m = observations.len();
    let k = (cfg.outlier_fraction * m as f64).floor() as usize;
    let mut outliers: Vec<usize> = sample(&mut r, m, k).into_vec();
    outliers.sort_unstable();
    for &o in &outliers {
        let a = r.random::<f64>() * std::f64::consts::TAU;
        observations[o].xy[0] += cfg.outlier_px * a.cos();
        observations[o].xy[1] += cfg.outlier_px * a.sin();
    }

    let truth = Network { cameras, calibrations, points, observations };
    let mut initial = truth.clone();
    for c in initial.cameras.iter_mut().filter(|c| !c.fixed) {
        let dir: [f64; 3] = UnitSphere.sample(&mut r);
        c.eo.center += Vector3::from(dir) * cfg.position_perturbation;
        let axis: [f64; 3] = UnitSphere.sample(&mut r);
        let q = UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), cfg.rotation_perturbation.to_radians());
        c.eo.rotation = rotation_log(&(UnitQuaternion::from_scaled_axis(c.eo.rotation) * q));
    }
    for cal in initial.calibrations.iter_mut().filter(|c| !c.fixed) {
        let mut sc = cal.intrinsics;
        sc.focal *= 1.0 + cfg.focal_perturbation;
        sc.cx += cfg.principal_point_perturbation;
        sc.cy -= cfg.principal_point_perturbation;
        sc.k1 = 0.0;
        sc.k2 = 0.0;
        cal.intrinsics = sc;
    }
    if cfg.point_perturbation > 0.0 {
        let n = Normal::new(0.0, cfg.point_perturbation).expect("valid sigma");
        for p in &mut initial.points {
            p.position += Vector3::new(n.sample(&mut r), n.sample(&mut r), n.sample(&mut r));
        }
    }
    Ok(PoseScenario { config: cfg.clone(), truth: Some(truth), initial, outliers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posegraph::compute_residuals;

    #[test]
    fn exact_truth_and_outlier_count() {
        let cfg = PoseScenarioConfig { points: 50, fixed_cameras: 4, free_cameras: 4, ..Default::default() };
        let s = generate_pose_scenario(&cfg).unwrap();
        let res = compute_residuals(s.truth.as_ref().unwrap()).unwrap();
        assert!(res.rms < 1e-9);
        let cfg = PoseScenarioConfig { outlier_fraction: 0.05, ..cfg };
        let s = generate_pose_scenario(&cfg).unwrap();
        let m = s.initial.observations.len();
        assert_eq!(s.outliers.len(), m * 5 / 100);
        let res = compute_residuals(s.truth.as_ref().unwrap()).unwrap();
        for &o in &s.outliers {
            let r = res.per_observation[o];
            assert!((r[0].hypot(r[1]) - 50.0).abs() < 1e-6);
        }
    }
}
