use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RegistrationError;
use crate::cloud::{Point3, PointCloud, RigidTransform};
use crate::index::KdTree;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams<T: Real> {
    pub max_iterations: usize,
    /// Stop once the correspondence RMS changes by less than this (meters).
    pub convergence_threshold: T,
    /// Pairs farther apart than this are discarded (meters).
    pub rejection_distance: T,
    /// Fraction of the worst surviving pairs dropped each iteration, in `[0, 1)`.
    pub trim_fraction: T,
    /// Start by translating the source centroid onto the target centroid.
    pub align_centroids: bool,
}

impl<T: Real> Default for IcpParams<T> {
    fn default() -> Self {
        IcpParams {
            max_iterations: 100,
            convergence_threshold: T::lit(1e-9),
            rejection_distance: T::lit(1.0),
            trim_fraction: T::lit(0.1),
            align_centroids: false,
        }
    }
}

impl<T: Real> IcpParams<T> {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: &str| Err(RegistrationError::InvalidParams(m.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.convergence_threshold > T::zero()) {
            return bad("convergence_threshold must be positive");
        }
        if !(self.rejection_distance > T::zero()) {
            return bad("rejection_distance must be positive");
        }
        if !(self.trim_fraction >= T::zero() && self.trim_fraction < T::one()) {
            return bad("trim_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct IcpResult<T: Real> {
    /// Maps the source into the target frame.
    pub transform: RigidTransform<T>,
    pub iterations: usize,
    /// Correspondence RMS (after rejection and trimming) under `transform`.
    pub final_rms: T,
    /// RMS at the start of each iteration.
    pub rms_history: Vec<T>,
    pub termination: Termination,
}

struct Matches<T> {
    pairs: Vec<(usize, usize)>,
    rms: T,
}

fn correspond<T: Real>(
    source: &[Point3<T>],
    tree: &KdTree<T>,
    transform: &RigidTransform<T>,
    params: &IcpParams<T>,
) -> Result<Matches<T>, RegistrationError> {
    let max_d2 = params.rejection_distance * params.rejection_distance;
    let mut hits: Vec<(T, usize, usize)> = source
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let nn = tree.nearest(&transform.apply(p));
            (nn.dist_sq <= max_d2).then_some((nn.dist_sq, i, nn.index))
        })
        .collect();
    hits.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let keep = ((T::one() - params.trim_fraction) * T::from_count(hits.len()))
        .ceil()
        .as_f64() as usize;
    hits.truncate(keep.min(hits.len()));
    if hits.len() < 3 {
        return Err(RegistrationError::DegenerateCorrespondences(hits.len()));
    }
    let sum = hits.iter().fold(T::zero(), |s, h| s + h.0);
    Ok(Matches {
        rms: (sum / T::from_count(hits.len())).sqrt(),
        pairs: hits.into_iter().map(|h| (h.1, h.2)).collect(),
    })
}

/// Least-squares rotation and translation taking `from[i]` onto `to[i]`.
/// Returns `None` when the source points are (numerically) collinear.
pub fn kabsch<T: Real>(from: &[Point3<T>], to: &[Point3<T>]) -> Option<RigidTransform<T>> {
    assert_eq!(from.len(), to.len());
    let n = T::from_count(from.len());
    let ca = from.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / n;
    let cb = to.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / n;
    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (a, b) in from.iter().zip(to) {
        let da = a.coords - ca;
        h += da * (b.coords - cb).transpose();
        spread += da * da.transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if !(sorted[1] > sorted[0] * T::lit(1e-12)) {
        return None;
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(T::one(), T::one(), d)) * u.transpose();
    let t = cb - r * ca;
    Some(RigidTransform::from_rotation(
        nalgebra::Rotation3::from_matrix_unchecked(r),
        t,
    ))
}

/// Aligns `source` onto `target`; the result maps source coordinates into the
/// target frame. The returned transform is the best one seen, so its RMS never
/// exceeds the RMS of the starting pose.
pub fn icp_align<T: Real>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
    params: &IcpParams<T>,
) -> Result<IcpResult<T>, RegistrationError> {
    params.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(RegistrationError::EmptyCloud);
    }
    let tree = KdTree::build(target.points())?;
    let src = source.points();

    let mut current = RigidTransform::identity();
    if params.align_centroids {
        let mean = |c: &PointCloud<T>| c.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / T::from_count(c.len());
        current = RigidTransform::from_rotation(nalgebra::Rotation3::identity(), mean(target) - mean(source));
    }

    let mut best: Option<(RigidTransform<T>, T)> = None;
    if params.align_centroids {
        if let Ok(m) = correspond(src, &tree, &RigidTransform::identity(), params) {
            best = Some((RigidTransform::identity(), m.rms));
        }
    }
    let mut history = Vec::new();
    let mut termination = Termination::IterationCap;
    let mut prev_rms: Option<T> = None;
    let mut iterations = 0;
    let mut last = correspond(src, &tree, &current, params)?;
    loop {
        history.push(last.rms);
        if best.as_ref().is_none_or(|b| last.rms <= b.1) {
            best = Some((current, last.rms));
        }
        if let Some(prev) = prev_rms {
            if (prev - last.rms).abs() < params.convergence_threshold {
                termination = Termination::Converged;
                break;
            }
        }
        if iterations == params.max_iterations {
            break;
        }
        let (from, to): (Vec<_>, Vec<_>) = last
            .pairs
            .iter()
            .map(|&(i, j)| (current.apply(&src[i]), target.points()[j]))
            .unzip();
        let step = kabsch(&from, &to).ok_or(RegistrationError::DegenerateCorrespondences(from.len()))?;
        current = step.compose(&current);
        iterations += 1;
        prev_rms = Some(last.rms);
        last = correspond(src, &tree, &current, params)?;
    }
    let (transform, final_rms) = best.expect("at least one evaluation");
    Ok(IcpResult {
        transform,
        iterations,
        final_rms,
        rms_history: history,
        termination,
    })
}
