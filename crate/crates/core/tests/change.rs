use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volchange::change::{component_filter, density_feature, feature_distance, hierarchical_detect, ChangeParams, DensityFeature};
use volchange::eval::{change_metrics, confusion_counts};
use volchange::synth::{apply_demolition, generate_building, Aabb, BuildingSpec, DemolitionScript, Removal, RubbleSpec};
use volchange::{BoundingCube, ChangeSet, Point3, PointCloud};

fn random_cloud(n: usize, r: &mut ChaCha8Rng) -> PointCloud {
    let pts = (0..n)
        .map(|_| Point3::new(r.random_range(0.0..10.0), r.random_range(0.0..6.0), r.random_range(0.0..3.0)))
        .collect();
    PointCloud::new(pts).unwrap()
}

fn voxel_keys(cs: &ChangeSet) -> BTreeSet<(u32, u64)> {
    cs.voxels.iter().map(|v| (v.depth, v.key)).collect()
}

#[test]
fn density_matches_containment_scan() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let c = random_cloud(500, &mut r);
        let bounds = BoundingCube::new(
            Point3::new(r.random_range(0.0..5.0), r.random_range(0.0..3.0), r.random_range(-1.0..1.0)),
            r.random_range(0.5..4.0),
        );
        let m = r.random_range(1..5);
        let f = density_feature(&bounds, &c, m).unwrap();
        assert_eq!(f.len(), m * m * m);
        let sub = bounds.edge / m as f64;
        let mut counts = vec![0usize; m * m * m];
        for p in c.iter() {
            let mut ijk = [0usize; 3];
            let mut inside = true;
            for a in 0..3 {
                let lo = bounds.min[a];
                let hi = lo + bounds.edge;
                if p[a] < lo || p[a] > hi {
                    inside = false;
                    break;
                }
                ijk[a] = (0..m).find(|&i| p[a] < lo + (i + 1) as f64 * sub).unwrap_or(m - 1);
            }
            if inside {
                counts[(ijk[0] * m + ijk[1]) * m + ijk[2]] += 1;
            }
        }
        for (i, &n) in counts.iter().enumerate() {
            let expect = n as f64 / (sub * sub * sub);
            assert!((f.densities[i] - expect).abs() <= 1e-9 * expect.max(1.0));
        }
    }
}

#[test]
fn feature_distance_recomputation() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let m = r.random_range(1..4);
        let n = m * m * m;
        let a = DensityFeature { subdivisions: m, densities: (0..n).map(|_| r.random_range(0.0..1e4)).collect() };
        let b = DensityFeature { subdivisions: m, densities: (0..n).map(|_| r.random_range(0.0..1e4)).collect() };
        let raw: f64 = a.densities.iter().zip(&b.densities).map(|(x, y)| (x - y) * (x - y)).sum();
        let d = feature_distance(&a, &b, true).unwrap();
        assert!((d - raw / n as f64).abs() <= 1e-12 * d.max(1.0));
        assert_eq!(d, feature_distance(&b, &a, true).unwrap());
        assert!((feature_distance(&a, &b, false).unwrap() - raw).abs() <= 1e-12 * raw.max(1.0));
    }
    let one = DensityFeature { subdivisions: 2, densities: vec![0.0; 8] };
    let mut two = one.clone();
    two.densities[3] = 5.0;
    assert_eq!(feature_distance(&one, &two, true).unwrap(), 25.0 / 8.0);
}

/// Union-find over the full pairwise distance matrix.
fn brute_components(pts: &[Point3], subset: &[usize], radius: f64, min_size: usize) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..subset.len()).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        let mut i = i;
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for a in 0..subset.len() {
        for b in a + 1..subset.len() {
            if (pts[subset[a]] - pts[subset[b]]).norm() <= radius {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for a in 0..subset.len() {
        let root = find(&mut parent, a);
        groups.entry(root).or_default().push(subset[a]);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= min_size).collect();
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort();
    out
}

fn groups_of(kept: &[usize], labels: &[u32]) -> Vec<Vec<usize>> {
    let mut m: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (&i, &l) in kept.iter().zip(labels) {
        m.entry(l).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = m.into_values().collect();
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort();
    out
}

#[test]
fn components_match_brute_union_find() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let c = random_cloud(r.random_range(50..600), &mut r);
        let subset: Vec<usize> = (0..c.len()).filter(|_| r.random_bool(0.7)).collect();
        let radius = r.random_range(0.2..1.0);
        let min_size = r.random_range(1..8);
        let got = component_filter(&c, &subset, radius, min_size).unwrap();
        let expect = brute_components(c.points(), &subset, radius, min_size);
        assert_eq!(got.cluster_count, expect.len());
        assert_eq!(groups_of(&got.kept, &got.labels), expect);
        let mut firsts: Vec<usize> = expect.iter().map(|g| g[0]).collect();
        firsts.sort_unstable();
        for (id, first) in firsts.iter().enumerate() {
            let pos = got.kept.binary_search(first).unwrap();
            assert_eq!(got.labels[pos] as usize, id);
        }
    }
}

#[test]
fn components_invariant_under_point_order() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let c = random_cloud(800, &mut r);
        let subset: Vec<usize> = (0..c.len()).step_by(2).collect();
        let base = component_filter(&c, &subset, 0.6, 5).unwrap();
        let mut perm: Vec<usize> = (0..c.len()).collect();
        perm.shuffle(&mut r);
        let shuffled = c.select(&perm);
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut sub2: Vec<usize> = subset.iter().map(|&i| inv[i]).collect();
        sub2.shuffle(&mut r);
        let got = component_filter(&shuffled, &sub2, 0.6, 5).unwrap();
        let back: Vec<usize> = got.kept.iter().map(|&i| perm[i]).collect();
        assert_eq!(groups_of(&back, &got.labels), groups_of(&base.kept, &base.labels));
    }
}

#[test]
fn component_examples() {
    let mut pts = Vec::new();
    for i in 0..100 {
        pts.push(Point3::new(i as f64 * 0.01, 0.0, 0.0));
        pts.push(Point3::new(10.0 + i as f64 * 0.01, 0.0, 0.0));
    }
    pts.push(Point3::new(50.0, 50.0, 50.0));
    let c = PointCloud::new(pts).unwrap();
    let all: Vec<usize> = (0..c.len()).collect();
    let cc = component_filter(&c, &all, 0.1, 50).unwrap();
    assert_eq!(cc.cluster_count, 2);
    assert_eq!(cc.kept.len(), 200);
    let lone = component_filter(&c, &[200], 0.1, 2).unwrap();
    assert!(lone.kept.is_empty());
    assert!(component_filter(&c, &all, 0.0, 1).is_err());
}

#[test]
fn identical_clouds_never_change() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20 {
        let c = random_cloud(r.random_range(1..20_000), &mut r);
        let p = ChangeParams {
            start_depth: r.random_range(1..6),
            max_depth: r.random_range(6..12),
            threshold: 10f64.powf(r.random_range(-3.0..6.0)),
            ..Default::default()
        };
        let cs = hierarchical_detect(&c, &c, &p).unwrap();
        assert!(cs.is_empty(), "trial {trial}");
        assert!(cs.reference_changed.is_empty() && cs.other_changed.is_empty());
    }
}

type Labels = Vec<volchange::ChangeLabel>;

fn corner_scene(seed: u64, rubble: bool) -> (PointCloud, PointCloud, Labels, Labels) {
    let spec = BuildingSpec::default();
    let c = generate_building(&spec, seed).unwrap();
    let script = DemolitionScript {
        removals: vec![Removal { epoch: 1, region: Aabb::new([-0.5, -0.5, 7.0], [5.0, 5.0, 10.5]) }],
        rubble: rubble.then_some(RubbleSpec { density: 400.0, thickness: 0.1 }),
    };
    let d = apply_demolition(&c, &spec.envelope(), &script, 1, seed).unwrap();
    (c, d.later, d.earlier_labels, d.later_labels)
}

#[test]
fn corner_removal_with_default_params() {
    let (c, later, truth, _) = corner_scene(0, false);
    let cs = hierarchical_detect(&c, &later, &ChangeParams::default()).unwrap();
    let m = change_metrics(&confusion_counts(&cs.reference_labels(c.len()), &truth).unwrap());
    assert!(m.precision.unwrap() >= 0.9 && m.recall.unwrap() >= 0.9, "{m:?}");
    let removed = truth.iter().filter(|l| l.is_change()).count();
    let hits = cs.reference_changed.iter().filter(|&&i| truth[i].is_change()).count();
    let false_hits = cs.reference_changed.len() - hits;
    assert!(hits as f64 >= 0.95 * removed as f64);
    assert!(false_hits as f64 <= 0.02 * (c.len() - removed) as f64);
    for &i in &cs.reference_changed {
        assert!(cs.voxels.iter().any(|v| v.bounds.contains(c.point(i))));
    }
    assert!(cs.other_changed.is_empty());
}

#[test]
fn rubble_is_found_in_the_later_epoch() {
    let (c, later, _, added) = corner_scene(1, true);
    let p = ChangeParams { start_depth: 5, max_depth: 9, ..Default::default() };
    let cs = hierarchical_detect(&c, &later, &p).unwrap();
    let rubble: Vec<usize> = (0..later.len()).filter(|&i| added[i].is_change()).collect();
    assert!(!rubble.is_empty());
    let found = rubble.iter().filter(|i| cs.other_changed.binary_search(i).is_ok()).count();
    assert!(found as f64 >= 0.9 * rubble.len() as f64, "{found}/{}", rubble.len());
}

#[test]
fn coarse_start_finds_subset_of_fine_start() {
    for seed in 0..3 {
        let (c, later, _, _) = corner_scene(seed, seed == 2);
        let base = ChangeParams { max_depth: 9, component_min_size: 1, ..Default::default() };
        let coarse = hierarchical_detect(&c, &later, &ChangeParams { start_depth: 5, ..base.clone() }).unwrap();
        let fine = hierarchical_detect(&c, &later, &ChangeParams { start_depth: 9, ..base }).unwrap();
        let (a, b) = (voxel_keys(&coarse), voxel_keys(&fine));
        assert!(!a.is_empty());
        assert!(a.is_subset(&b), "seed {seed}: {} of {} outside", a.difference(&b).count(), a.len());
    }
}

fn pruning_scenes() -> Vec<(PointCloud, PointCloud)> {
    let mut out = Vec::new();
    let mut r = ChaCha8Rng::seed_from_u64(6);
    for s in 0..5u64 {
        let spec = BuildingSpec { width: 10.0, length: 8.0, height: 6.0, density: 150.0, ..Default::default() };
        let c = generate_building(&spec, s).unwrap();
        let x0 = r.random_range(0.0..6.0);
        let y0 = r.random_range(0.0..4.0);
        let script = DemolitionScript {
            removals: vec![Removal { epoch: 1, region: Aabb::new([x0, y0, 3.0], [x0 + 3.0, y0 + 3.0, 7.0]) }],
            rubble: (s % 2 == 1).then_some(RubbleSpec { density: 200.0, thickness: 0.3 }),
        };
        let later = apply_demolition(&c, &spec.envelope(), &script, 1, s).unwrap().later;
        out.push((c, volchange::synth::add_noise(&later, 0.005 * s as f64, s).unwrap()));
    }
    out
}

#[test]
fn raising_tau_never_enlarges_k() {
    let taus = [1e2, 1e3, 1e4, 3e4, 1e5, 1e6, 1e7];
    for (c, later) in pruning_scenes() {
        let base = ChangeParams { start_depth: 3, max_depth: 8, component_min_size: 1, ..Default::default() };
        let mut prev: Option<BTreeSet<(u32, u64)>> = None;
        for &t in &taus {
            let k = voxel_keys(&hierarchical_detect(&c, &later, &ChangeParams { threshold: t, ..base.clone() }).unwrap());
            if let Some(p) = &prev {
                assert!(k.is_subset(p), "tau {t}");
            }
            prev = Some(k);
        }
        let levels = 6;
        let flat = vec![1e4; levels];
        let k0 = voxel_keys(&hierarchical_detect(&c, &later, &ChangeParams { depth_thresholds: flat.clone(), ..base.clone() }).unwrap());
        for d in 0..levels {
            let mut raised = flat.clone();
            raised[d] = 1e6;
            let k = voxel_keys(&hierarchical_detect(&c, &later, &ChangeParams { depth_thresholds: raised, ..base.clone() }).unwrap());
            assert!(k.is_subset(&k0), "level {d}");
        }
    }
}
