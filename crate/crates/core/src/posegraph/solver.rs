use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, SMatrix, UnitQuaternion, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::{project_point, project_with_jacobians, right_jacobian_inv};
use super::{rotation_log, ExteriorOrientation, Network, PoseError, SelfCalibration};
use crate::scalar::Real;

/// How reference-epoch (fixed) parameters enter the adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FixedMode<T: Real> {
    /// Left out of the parameter vector entirely.
    Exclude,
    /// Kept as parameters tied to their input values by a prior of this weight.
    Prior { weight: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default, deny_unknown_fields)]
pub struct RefineOptions<T: Real> {
    pub max_iterations: usize,
    pub max_outlier_rounds: usize,
    /// Rejection threshold in robust standard deviations.
    pub outlier_factor: T,
    /// Lower bound on the rejection threshold, pixels.
    pub min_outlier_threshold: T,
    pub initial_lambda: T,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub tolerance: T,
    pub fixed_mode: FixedMode<T>,
}

impl<T: Real> Default for RefineOptions<T> {
    fn default() -> Self {
        RefineOptions {
            max_iterations: 100,
            max_outlier_rounds: 3,
            outlier_factor: T::lit(3.0),
            min_outlier_threshold: T::lit(1e-3),
            initial_lambda: T::lit(1e-3),
            tolerance: T::lit(1e-12),
            fixed_mode: FixedMode::Exclude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IterationLog<T: Real> {
    pub round: usize,
    pub iteration: usize,
    /// Weighted cost before the trial step.
    pub cost: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial_cost: Option<T>,
    pub lambda: T,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Residuals<T: Real> {
    /// measured − projected, per observation.
    pub per_observation: Vec<[T; 2]>,
    pub rms: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AdjustmentResult<T: Real> {
    /// Input network with adjusted parameters.
    pub network: Network<T>,
    /// measured − projected for every observation at the solution (`None` if
    /// the point ends up behind that camera).
    pub residuals: Vec<Option<[T; 2]>>,
    /// Observation indices removed as outliers.
    pub rejected: Vec<usize>,
    /// Tracks left with fewer than two observations; their points are not adjusted further.
    pub dropped_tracks: Vec<u32>,
    /// RMS over the retained observations, pixels.
    pub rms: T,
    /// Robust σ estimated before each rejection pass.
    pub robust_sigma: Vec<T>,
    pub outlier_rounds: usize,
    pub converged: bool,
    pub iterations: Vec<IterationLog<T>>,
}

struct Problem<'a, T: Real> {
    net: &'a Network<T>,
    obs_cam: Vec<usize>,
    obs_point: Vec<usize>,
    cam_calib: Vec<usize>,
    cam_slot: Vec<Option<usize>>,
    calib_slot: Vec<Option<usize>>,
    n: usize,
    prior: Option<T>,
}

#[derive(Clone)]
struct State<T: Real> {
    eos: Vec<ExteriorOrientation<T>>,
    scs: Vec<SelfCalibration<T>>,
    pts: Vec<Vector3<T>>,
}

const MAX_LOCAL: usize = 11;

struct Lin<T: Real> {
    e: Vector2<T>,
    /// Columns for the free camera (6) and calibration (5) parameters, first `len` used.
    jc: SMatrix<T, 2, MAX_LOCAL>,
    idx: [usize; MAX_LOCAL],
    len: usize,
    jx: Matrix2x3<T>,
}

impl<T: Real> Lin<T> {
    fn w(&self) -> SMatrix<T, MAX_LOCAL, 3> {
        self.jc.transpose() * self.jx
    }
}

struct System<T: Real> {
    s: DMatrix<T>,
    b: DVector<T>,
    /// Per point: damped V⁻¹ and the point part of the gradient.
    points: Vec<Option<(Matrix3<T>, Vector3<T>)>>,
}

/// Sums per-item contributions into an n×n matrix and n-vector. Items are
/// split into fixed chunks that are summed in order, so the result does not
/// depend on the thread count.
fn chunked_sum<T: Real>(
    n: usize,
    items: usize,
    f: impl Fn(usize, &mut DMatrix<T>, &mut DVector<T>) + Sync,
) -> (DMatrix<T>, DVector<T>) {
    const CHUNKS: usize = 16;
    let size = items.div_ceil(CHUNKS).max(1);
    let parts: Vec<(DMatrix<T>, DVector<T>)> = (0..items.div_ceil(size))
        .into_par_iter()
        .map(|c| {
            let mut a = DMatrix::zeros(n, n);
            let mut b = DVector::zeros(n);
            for i in c * size..((c + 1) * size).min(items) {
                f(i, &mut a, &mut b);
            }
            (a, b)
        })
        .collect();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (pa, pb) in parts {
        a += pa;
        b += pb;
    }
    (a, b)
}

fn index_of<K: std::hash::Hash + Eq + Copy>(ids: impl Iterator<Item = K>, what: &'static str, dup: impl Fn(K) -> u32) -> Result<HashMap<K, usize>, PoseError> {
    let mut m = HashMap::new();
    for (i, id) in ids.enumerate() {
        if m.insert(id, i).is_some() {
            return Err(PoseError::Duplicate { what, id: dup(id) });
        }
    }
    Ok(m)
}

fn finite<T: Real>(x: T) -> bool {
    x.as_f64().is_finite()
}

impl<'a, T: Real> Problem<'a, T> {
    fn new(net: &'a Network<T>, prior: Option<T>) -> Result<Self, PoseError> {
        let cams = index_of(net.cameras.iter().map(|c| c.id), "camera", |k| k)?;
        let calibs = index_of(net.calibrations.iter().map(|c| c.id), "calibration", |k| k)?;
        let tracks = index_of(net.points.iter().map(|p| p.track), "track", |k| k)?;
        let mut cam_calib = Vec::with_capacity(net.cameras.len());
        for c in &net.cameras {
            let Some(&k) = calibs.get(&c.calibration) else {
                return Err(PoseError::UnknownCalibration { camera: c.id, calibration: c.calibration });
            };
            cam_calib.push(k);
        }
        if let Some(c) = net.calibrations.iter().find(|c| !(c.intrinsics.focal > T::zero())) {
            return Err(PoseError::Invalid(format!("calibration {} has non-positive focal length", c.id)));
        }
        let mut obs_cam = Vec::with_capacity(net.observations.len());
        let mut obs_point = Vec::with_capacity(net.observations.len());
        let mut seen = vec![0usize; net.points.len()];
        for (i, o) in net.observations.iter().enumerate() {
            let c = *cams.get(&o.camera).ok_or(PoseError::Dangling { observation: i, what: "camera", id: o.camera })?;
            let p = *tracks.get(&o.track).ok_or(PoseError::Dangling { observation: i, what: "track", id: o.track })?;
            if !(finite(o.xy[0]) && finite(o.xy[1])) || !(o.weight > T::zero() && finite(o.weight)) {
                return Err(PoseError::Invalid(format!("observation {i} has non-finite coordinates or non-positive weight")));
            }
            seen[p] += 1;
            obs_cam.push(c);
            obs_point.push(p);
        }
        if let Some((p, &count)) = seen.iter().enumerate().find(|(_, &c)| c < 2) {
            return Err(PoseError::UnderObserved { track: net.points[p].track, count });
        }
        let mut n = 0;
        let include = |fixed: bool| !fixed || prior.is_some();
        let cam_slot = net
            .cameras
            .iter()
            .map(|c| {
                include(c.fixed).then(|| {
                    n += 6;
                    n - 6
                })
            })
            .collect();
        let calib_slot = net
            .calibrations
            .iter()
            .map(|c| {
                include(c.fixed).then(|| {
                    n += 5;
                    n - 5
                })
            })
            .collect();
        Ok(Problem { net, obs_cam, obs_point, cam_calib, cam_slot, calib_slot, n, prior })
    }

    fn initial_state(&self) -> State<T> {
        State {
            eos: self.net.cameras.iter().map(|c| c.eo).collect(),
            scs: self.net.calibrations.iter().map(|c| c.intrinsics).collect(),
            pts: self.net.points.iter().map(|p| p.position).collect(),
        }
    }

    fn residual(&self, s: &State<T>, o: usize) -> Option<Vector2<T>> {
        let c = self.obs_cam[o];
        let ob = &self.net.observations[o];
        project_point(&s.pts[self.obs_point[o]], &s.eos[c], &s.scs[self.cam_calib[c]])
            .ok()
            .map(|xy| Vector2::new(ob.xy[0] - xy.x, ob.xy[1] - xy.y))
    }

    fn prior_terms(&self, s: &State<T>) -> Vec<(usize, DVector<T>, DMatrix<T>)> {
        let mut out = Vec::new();
        if self.prior.is_none() {
            return out;
        }
        for (i, c) in self.net.cameras.iter().enumerate() {
            if !c.fixed {
                continue;
            }
            let slot = self.cam_slot[i].expect("prior slot");
            let rel = UnitQuaternion::from_scaled_axis(c.eo.rotation).inverse()
                * UnitQuaternion::from_scaled_axis(s.eos[i].rotation);
            let phi = rotation_log(&rel);
            let dc = s.eos[i].center - c.eo.center;
            let e = DVector::from_iterator(6, phi.iter().chain(dc.iter()).copied());
            let mut j = DMatrix::identity(6, 6);
            j.view_mut((0, 0), (3, 3)).copy_from(&right_jacobian_inv(&phi));
            out.push((slot, e, j));
        }
        for (i, c) in self.net.calibrations.iter().enumerate() {
            if !c.fixed {
                continue;
            }
            let slot = self.calib_slot[i].expect("prior slot");
            let (a, b) = (s.scs[i].to_array(), c.intrinsics.to_array());
            out.push((slot, DVector::from_fn(5, |k, _| a[k] - b[k]), DMatrix::identity(5, 5)));
        }
        out
    }

    fn cost(&self, s: &State<T>, active: &[usize]) -> Option<T> {
        let parts: Option<Vec<T>> = active
            .par_iter()
            .map(|&o| self.residual(s, o).map(|r| r.norm_squared() * self.net.observations[o].weight))
            .collect();
        let mut c = parts?.into_iter().fold(T::zero(), |a, b| a + b);
        if let Some(w) = self.prior {
            for (_, e, _) in self.prior_terms(s) {
                c += e.norm_squared() * w;
            }
        }
        Some(c)
    }

    fn linearize(&self, s: &State<T>, active: &[usize]) -> Result<Vec<Lin<T>>, PoseError> {
        active
            .par_iter()
            .map(|&o| {
                let c = self.obs_cam[o];
                let k = self.cam_calib[c];
                let ob = &self.net.observations[o];
                let j = project_with_jacobians(&s.pts[self.obs_point[o]], &s.eos[c], &s.scs[k])
                    .map_err(|_| PoseError::BehindCamera { camera: self.net.cameras[c].id })?;
                let sw = ob.weight.sqrt();
                let e = Vector2::new(j.xy.x - ob.xy[0], j.xy.y - ob.xy[1]) * sw;
                let mut idx = [0; MAX_LOCAL];
                let mut jc = SMatrix::<T, 2, MAX_LOCAL>::zeros();
                let mut len = 0;
                if let Some(base) = self.cam_slot[c] {
                    for q in 0..6 {
                        idx[len] = base + q;
                        jc.set_column(len, &(j.eo.column(q) * sw));
                        len += 1;
                    }
                }
                if let Some(base) = self.calib_slot[k] {
                    for q in 0..5 {
                        idx[len] = base + q;
                        jc.set_column(len, &(j.sc.column(q) * sw));
                        len += 1;
                    }
                }
                Ok(Lin { e, jc, idx, len, jx: j.point * sw })
            })
            .collect()
    }

    fn build(&self, s: &State<T>, lin: &[Lin<T>], by_point: &[Vec<usize>], lambda: T) -> Option<System<T>> {
        let n = self.n;
        let damp = T::one() + lambda;
        let points: Vec<Option<(Matrix3<T>, Vector3<T>)>> = by_point
            .par_iter()
            .map(|obs| {
                if obs.is_empty() {
                    return Some(None);
                }
                let mut v = Matrix3::zeros();
                let mut g = Vector3::zeros();
                for &k in obs {
                    v += lin[k].jx.transpose() * lin[k].jx;
                    g -= lin[k].jx.transpose() * lin[k].e;
                }
                for i in 0..3 {
                    v[(i, i)] *= damp;
                }
                v.try_inverse().map(|vi| Some((vi, g)))
            })
            .collect::<Option<_>>()?;

        let (mut a, mut b) = chunked_sum(n, lin.len(), |k, a, b| {
            let l = &lin[k];
            let jtj = l.jc.transpose() * l.jc;
            let jte = l.jc.transpose() * l.e;
            for p in 0..l.len {
                b[l.idx[p]] -= jte[p];
                for q in 0..l.len {
                    a[(l.idx[p], l.idx[q])] += jtj[(p, q)];
                }
            }
        });
        if let Some(w) = self.prior {
            for (slot, e, j) in self.prior_terms(s) {
                let m = j.nrows();
                let jtj = j.transpose() * &j * w;
                let jte = j.transpose() * e * w;
                for p in 0..m {
                    b[slot + p] -= jte[p];
                    for q in 0..m {
                        a[(slot + p, slot + q)] += jtj[(p, q)];
                    }
                }
            }
        }
        for i in 0..n {
            a[(i, i)] *= damp;
        }
        let (sa, sb) = chunked_sum(n, by_point.len(), |p, a, b| {
            let Some((vinv, g)) = &points[p] else { return };
            let ws: Vec<SMatrix<T, MAX_LOCAL, 3>> = by_point[p].iter().map(|&k| lin[k].w()).collect();
            for (x, &k) in by_point[p].iter().enumerate() {
                let lk = &lin[k];
                if lk.len == 0 {
                    continue;
                }
                let wv = ws[x] * vinv;
                let red = wv * g;
                for i in 0..lk.len {
                    b[lk.idx[i]] += red[i];
                }
                for (y, &l) in by_point[p].iter().enumerate() {
                    let ll = &lin[l];
                    if ll.len == 0 {
                        continue;
                    }
                    let blk = wv * ws[y].transpose();
                    for i in 0..lk.len {
                        for j in 0..ll.len {
                            a[(lk.idx[i], ll.idx[j])] += blk[(i, j)];
                        }
                    }
                }
            }
        });
        Some(System { s: a - sa, b: b - sb, points })
    }

    /// Camera/calibration step and per-point steps.
    fn solve(&self, sys: &System<T>, lin: &[Lin<T>], by_point: &[Vec<usize>]) -> Option<(DVector<T>, Vec<Vector3<T>>)> {
        let n = self.n;
        let dc = if n == 0 {
            DVector::zeros(0)
        } else {
            let d: Vec<T> = (0..n).map(|i| sys.s[(i, i)]).collect();
            if d.iter().any(|&x| !(x > T::zero())) {
                return None;
            }
            let d: Vec<T> = d.into_iter().map(|x| T::one() / x.sqrt()).collect();
            let scaled = DMatrix::from_fn(n, n, |i, j| sys.s[(i, j)] * d[i] * d[j]);
            let chol = scaled.cholesky()?;
            let l = chol.l_dirty();
            let tiny = T::lit(1e-12);
            if (0..n).any(|i| l[(i, i)] * l[(i, i)] < tiny) {
                return None;
            }
            let rhs = DVector::from_fn(n, |i, _| sys.b[i] * d[i]);
            let y = chol.solve(&rhs);
            DVector::from_fn(n, |i, _| y[i] * d[i])
        };
        let dp = sys
            .points
            .par_iter()
            .enumerate()
            .map(|(p, pt)| match pt {
                None => Vector3::zeros(),
                Some((vinv, g)) => {
                    let mut r = *g;
                    for &k in &by_point[p] {
                        let l = &lin[k];
                        let w = l.w();
                        for q in 0..l.len {
                            for c in 0..3 {
                                r[c] -= w[(q, c)] * dc[l.idx[q]];
                            }
                        }
                    }
                    vinv * r
                }
            })
            .collect();
        Some((dc, dp))
    }

    fn apply(&self, s: &State<T>, dc: &DVector<T>, dp: &[Vector3<T>]) -> State<T> {
        let mut t = s.clone();
        for (i, slot) in self.cam_slot.iter().enumerate() {
            if let Some(b) = *slot {
                let delta = Vector3::new(dc[b], dc[b + 1], dc[b + 2]);
                t.eos[i] = s.eos[i].rotated(&delta);
                t.eos[i].center += Vector3::new(dc[b + 3], dc[b + 4], dc[b + 5]);
            }
        }
        for (i, slot) in self.calib_slot.iter().enumerate() {
            if let Some(b) = *slot {
                let mut a = s.scs[i].to_array();
                for (q, v) in a.iter_mut().enumerate() {
                    *v += dc[b + q];
                }
                t.scs[i] = SelfCalibration::from_array(a);
            }
        }
        for (p, d) in t.pts.iter_mut().zip(dp) {
            *p += d;
        }
        t
    }

    fn by_point(&self, active: &[usize]) -> Vec<Vec<usize>> {
        let mut v = vec![Vec::new(); self.net.points.len()];
        for (k, &o) in active.iter().enumerate() {
            v[self.obs_point[o]].push(k);
        }
        v
    }

    fn check_rank(&self, s: &State<T>, active: &[usize]) -> Result<(), PoseError> {
        let lin = self.linearize(s, active)?;
        let sys = self.build(s, &lin, &self.by_point(active), T::zero()).ok_or(PoseError::RankDeficient)?;
        self.solve(&sys, &lin, &self.by_point(active)).map(|_| ()).ok_or(PoseError::RankDeficient)
    }

    /// Levenberg–Marquardt on the active observations.
    fn minimize(
        &self,
        mut s: State<T>,
        active: &[usize],
        opts: &RefineOptions<T>,
        round: usize,
        log: &mut Vec<IterationLog<T>>,
    ) -> Result<(State<T>, bool), PoseError> {
        let by_point = self.by_point(active);
        let mut lambda = opts.initial_lambda;
        let max_lambda = T::lit(1e16);
        let mut cost = self.cost(&s, active).ok_or(PoseError::BehindCamera { camera: u32::MAX })?;
        for iteration in 0..opts.max_iterations {
            if cost == T::zero() {
                return Ok((s, true));
            }
            let lin = self.linearize(&s, active)?;
            loop {
                let trial = self
                    .build(&s, &lin, &by_point, lambda)
                    .and_then(|sys| self.solve(&sys, &lin, &self.by_point(active)))
                    .map(|(dc, dp)| self.apply(&s, &dc, &dp));
                let trial_cost = trial.as_ref().and_then(|t| self.cost(t, active));
                let accepted = trial_cost.is_some_and(|c| c < cost);
                log.push(IterationLog { round, iteration, cost, trial_cost, lambda, accepted });
                if accepted {
                    let c = trial_cost.expect("accepted");
                    let rel = (cost - c) / cost;
                    s = trial.expect("accepted");
                    cost = c;
                    lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
                    if rel < opts.tolerance {
                        return Ok((s, true));
                    }
                    break;
                }
                lambda *= T::lit(10.0);
                if lambda > max_lambda {
                    // no representable improvement remains
                    return Ok((s, true));
                }
            }
        }
        Ok((s, false))
    }
}

/// measured − projected for every observation, and their RMS.
pub fn compute_residuals<T: Real>(net: &Network<T>) -> Result<Residuals<T>, PoseError> {
    let cams: HashMap<u32, usize> = net.cameras.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    let calibs: HashMap<u32, usize> = net.calibrations.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    let tracks: HashMap<u32, usize> = net.points.iter().enumerate().map(|(i, p)| (p.track, i)).collect();
    let mut out = Vec::with_capacity(net.observations.len());
    let mut sum = T::zero();
    for (i, o) in net.observations.iter().enumerate() {
        let c = &net.cameras[*cams.get(&o.camera).ok_or(PoseError::Dangling { observation: i, what: "camera", id: o.camera })?];
        let p = &net.points[*tracks.get(&o.track).ok_or(PoseError::Dangling { observation: i, what: "track", id: o.track })?];
        let k = *calibs
            .get(&c.calibration)
            .ok_or(PoseError::UnknownCalibration { camera: c.id, calibration: c.calibration })?;
        let xy = project_point(&p.position, &c.eo, &net.calibrations[k].intrinsics)
            .map_err(|_| PoseError::BehindCamera { camera: c.id })?;
        let r = [o.xy[0] - xy.x, o.xy[1] - xy.y];
        sum += r[0] * r[0] + r[1] * r[1];
        out.push(r);
    }
    let rms = if out.is_empty() { T::zero() } else { (sum / T::from_count(2 * out.len())).sqrt() };
    Ok(Residuals { per_observation: out, rms })
}

fn median<T: Real>(v: &mut [T]) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::lit(0.5)
    }
}

/// Refines the free cameras, free calibrations and all object points of
/// `net`, with cameras/calibrations flagged `fixed` held at their inputs.
pub fn refine_progressive<T: Real>(net: &Network<T>, opts: &RefineOptions<T>) -> Result<AdjustmentResult<T>, PoseError> {
    let prior = match opts.fixed_mode {
        FixedMode::Exclude => None,
        FixedMode::Prior { weight } if weight > T::zero() => Some(weight),
        FixedMode::Prior { .. } => return Err(PoseError::Invalid("prior weight must be positive".into())),
    };
    let prob = Problem::new(net, prior)?;
    let mut state = prob.initial_state();
    let mut active: Vec<usize> = (0..net.observations.len()).collect();
    prob.check_rank(&state, &active)?;

    let mut log = Vec::new();
    let mut rejected = Vec::new();
    let mut dropped = Vec::new();
    let mut robust_sigma = Vec::new();
    let mut converged;
    let mut rounds = 0;
    loop {
        let (s, conv) = prob.minimize(state, &active, opts, rounds, &mut log)?;
        state = s;
        converged = conv;
        if rounds == opts.max_outlier_rounds {
            break;
        }
        let res: Vec<Vector2<T>> = active
            .iter()
            .map(|&o| prob.residual(&state, o).expect("converged state projects"))
            .collect();
        let mut comps: Vec<T> = res.iter().flat_map(|r| [r.x, r.y]).collect();
        let med = median(&mut comps);
        let mut dev: Vec<T> = comps.iter().map(|&c| (c - med).abs()).collect();
        let sigma = median(&mut dev) * T::lit(1.4826);
        robust_sigma.push(sigma);
        let thr = (sigma * opts.outlier_factor).max(opts.min_outlier_threshold);
        let bad: Vec<usize> = active
            .iter()
            .zip(&res)
            .filter(|(_, r)| r.x.abs() > thr || r.y.abs() > thr)
            .map(|(&o, _)| o)
            .collect();
        if bad.is_empty() {
            break;
        }
        let mut is_bad = vec![false; net.observations.len()];
        bad.iter().for_each(|&o| is_bad[o] = true);
        rejected.extend(&bad);
        active.retain(|&o| !is_bad[o]);
        let mut count = vec![0usize; net.points.len()];
        active.iter().for_each(|&o| count[prob.obs_point[o]] += 1);
        for (p, &c) in count.iter().enumerate() {
            if c < 2 && !dropped.contains(&net.points[p].track) {
                dropped.push(net.points[p].track);
            }
        }
        active.retain(|&o| count[prob.obs_point[o]] >= 2);
        rounds += 1;
        prob.check_rank(&state, &active)?;
    }
    rejected.sort_unstable();
    dropped.sort_unstable();

    let mut out = net.clone();
    for (i, c) in out.cameras.iter_mut().enumerate() {
        if prob.cam_slot[i].is_some() {
            c.eo = state.eos[i];
        }
    }
    for (i, c) in out.calibrations.iter_mut().enumerate() {
        if prob.calib_slot[i].is_some() {
            c.intrinsics = state.scs[i];
        }
    }
    for (p, x) in out.points.iter_mut().zip(&state.pts) {
        p.position = *x;
    }
    let residuals: Vec<Option<[T; 2]>> = (0..net.observations.len())
        .map(|o| prob.residual(&state, o).map(|r| [r.x, r.y]))
        .collect();
    let sum = active.iter().fold(T::zero(), |a, &o| {
        let r = residuals[o].expect("active observation projects");
        a + r[0] * r[0] + r[1] * r[1]
    });
    let rms = if active.is_empty() { T::zero() } else { (sum / T::from_count(2 * active.len())).sqrt() };
    Ok(AdjustmentResult {
        network: out,
        residuals,
        rejected,
        dropped_tracks: dropped,
        rms,
        robust_sigma,
        outlier_rounds: rounds,
        converged,
        iterations: log,
    })
}
