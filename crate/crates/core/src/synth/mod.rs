//! Synthetic buildings, scripted demolition with analytic truth, noise, and
//! camera-network scenarios.

mod building;
mod demolition;
mod scenario;

pub use building::{generate_building, sample_rectangle, Aabb, BuildingSpec, ColumnGrid};
pub use demolition::{
    apply_demolition, demolition_series, removed_volume, DemolitionResult, DemolitionScript, Removal, RubbleSpec,
};
pub use scenario::{generate_pose_scenario, PoseScenario, PoseScenarioConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{Point3, PointCloud};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("track {track} would be seen by {count} camera(s)")]
    UnderObserved { track: u32, count: usize },
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Isotropic Gaussian perturbation of every point.
pub fn add_noise<T: Real>(cloud: &PointCloud<T>, sigma: f64, seed: u64) -> Result<PointCloud<T>, SynthError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SynthError::InvalidSpec(format!("noise sigma {sigma} must be finite and >= 0")));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut r = rng(seed);
    let offsets: Vec<[f64; 3]> = (0..cloud.len())
        .map(|_| [normal.sample(&mut r), normal.sample(&mut r), normal.sample(&mut r)])
        .collect();
    let mut i = 0;
    Ok(cloud.map_points(|p| {
        let o = offsets[i];
        i += 1;
        Point3::new(p.x + T::lit(o[0]), p.y + T::lit(o[1]), p.z + T::lit(o[2]))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity_and_seeded() {
        let c = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0); 10]).unwrap();
        assert_eq!(add_noise(&c, 0.0, 1).unwrap(), c);
        assert_eq!(add_noise(&c, 0.1, 7).unwrap(), add_noise(&c, 0.1, 7).unwrap());
        assert_ne!(add_noise(&c, 0.1, 7).unwrap(), add_noise(&c, 0.1, 8).unwrap());
        assert!(add_noise(&c, -1.0, 0).is_err());
    }
}
