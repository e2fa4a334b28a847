use volchange::posegraph::compute_residuals;
use volchange::synth::{
    add_noise, apply_demolition, demolition_series, generate_building, generate_pose_scenario, Aabb, BuildingSpec,
    DemolitionScript, PoseScenarioConfig, Removal,
};
use volchange::{ChangeLabel, PointCloud};

fn closed_box(density: f64) -> BuildingSpec {
    BuildingSpec { width: 10.0, length: 10.0, height: 3.0, story_height: 3.0, density, ..Default::default() }
}

#[test]
fn sample_count_tracks_area_and_density() {
    let spec = closed_box(400.0);
    let area = 2.0 * 100.0 + 4.0 * 10.0 * 3.0;
    assert_eq!(spec.surface_area(), area);
    let n = generate_building::<f64>(&spec, 1).unwrap().len() as f64;
    assert!((n - 400.0 * area).abs() <= 0.01 * 400.0 * area, "{n}");
    let n4 = generate_building::<f64>(&closed_box(1600.0), 1).unwrap().len() as f64;
    assert!((n4 / n - 4.0).abs() <= 0.04, "{}", n4 / n);
}

#[test]
fn generators_are_deterministic() {
    let spec = closed_box(100.0);
    let a: PointCloud = generate_building(&spec, 7).unwrap();
    assert_eq!(a, generate_building(&spec, 7).unwrap());
    assert_ne!(a, generate_building(&spec, 8).unwrap());
    assert_eq!(add_noise(&a, 0.01, 3).unwrap(), add_noise(&a, 0.01, 3).unwrap());
    assert_eq!(add_noise(&a, 0.0, 3).unwrap(), a);
    let cfg = PoseScenarioConfig { noise_px: 0.5, outlier_fraction: 0.05, seed: 4, ..Default::default() };
    assert_eq!(generate_pose_scenario(&cfg).unwrap(), generate_pose_scenario(&cfg).unwrap());
}

#[test]
fn noise_norms_follow_chi_with_three_dof() {
    let spec = BuildingSpec { density: 400.0, ..Default::default() };
    let c: PointCloud = generate_building(&spec, 2).unwrap();
    assert!(c.len() >= 100_000);
    let sigma = 0.02;
    let noisy = add_noise(&c, sigma, 9).unwrap();
    let norms: Vec<f64> = c.iter().zip(noisy.iter()).map(|(a, b)| (a - b).norm()).collect();
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let std = (norms.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n).sqrt();
    let chi_mean = sigma * 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let chi_std = sigma * (3.0 - 8.0 / std::f64::consts::PI).sqrt();
    assert!((mean - chi_mean).abs() <= 0.05 * chi_mean, "{mean} vs {chi_mean}");
    assert!((std - chi_std).abs() <= 0.05 * chi_std, "{std} vs {chi_std}");
}

#[test]
fn demolition_labels_match_containment_scan() {
    let spec = BuildingSpec::default();
    let c: PointCloud = generate_building(&spec, 3).unwrap();
    let region = Aabb::new([-1.0, 6.0, 4.0], [4.0, 10.0, 7.0]);
    let script = DemolitionScript { removals: vec![Removal { epoch: 1, region }], rubble: None };
    let d = apply_demolition(&c, &spec.envelope(), &script, 1, 0).unwrap();
    let inside: Vec<bool> = c.iter().map(|p| (0..3).all(|a| p[a] >= region.min[a] && p[a] <= region.max[a])).collect();
    let changed = inside.iter().filter(|&&b| b).count();
    assert!(changed > 0);
    for (l, &b) in d.earlier_labels.iter().zip(&inside) {
        assert_eq!(*l, if b { ChangeLabel::Changed } else { ChangeLabel::Unchanged });
    }
    assert_eq!(d.later.len(), c.len() - changed);
    assert!((d.removed_volume - 4.0 * 4.0 * 3.0).abs() < 1e-9);
}

#[test]
fn demolition_edge_cases() {
    let spec = closed_box(100.0);
    let c: PointCloud = generate_building(&spec, 3).unwrap();
    let far = DemolitionScript { removals: vec![Removal { epoch: 1, region: Aabb::new([50.0, 50.0, 0.0], [60.0, 60.0, 3.0]) }], rubble: None };
    let d = apply_demolition(&c, &spec.envelope(), &far, 1, 0).unwrap();
    assert_eq!(d.later, c);
    assert_eq!(d.removed_volume, 0.0);
    assert!(d.earlier_labels.iter().all(|l| *l == ChangeLabel::Unchanged));
    let all = DemolitionScript { removals: vec![Removal { epoch: 1, region: Aabb::new([-1.0, -1.0, -1.0], [11.0, 11.0, 4.0]) }], rubble: None };
    let d = apply_demolition(&c, &spec.envelope(), &all, 1, 0).unwrap();
    assert!(d.later.is_empty());
    assert!(d.earlier_labels.iter().all(|l| *l == ChangeLabel::Changed));
    assert!((d.removed_volume - spec.envelope().volume()).abs() < 1e-9);
}

#[test]
fn series_volumes_do_not_double_count() {
    let spec = closed_box(50.0);
    let c: PointCloud = generate_building(&spec, 3).unwrap();
    let script = DemolitionScript {
        removals: vec![
            Removal { epoch: 1, region: Aabb::new([0.0, 0.0, 0.0], [4.0, 10.0, 3.0]) },
            Removal { epoch: 2, region: Aabb::new([2.0, 0.0, 0.0], [7.0, 10.0, 3.0]) },
        ],
        rubble: None,
    };
    let (clouds, vols) = demolition_series(&c, &spec.envelope(), &script, 1).unwrap();
    assert_eq!(clouds.len(), 3);
    assert!((vols[0] - 120.0).abs() < 1e-9 && (vols[1] - 90.0).abs() < 1e-9, "{vols:?}");
    assert!(clouds[2].len() < clouds[1].len() && clouds[1].len() < clouds[0].len());
}

#[test]
fn pose_scenario_construction() {
    let clean = generate_pose_scenario(&PoseScenarioConfig::default()).unwrap();
    let truth = clean.truth.as_ref().unwrap();
    let res = compute_residuals(truth).unwrap();
    assert!(res.rms < 1e-9, "{}", res.rms);
    let cfg = PoseScenarioConfig { outlier_fraction: 0.05, ..Default::default() };
    let s = generate_pose_scenario(&cfg).unwrap();
    let m = s.initial.observations.len();
    assert_eq!(s.outliers.len(), (0.05 * m as f64).floor() as usize);
    let per_obs = compute_residuals(s.truth.as_ref().unwrap()).unwrap().per_observation;
    for &i in &s.outliers {
        let r = per_obs[i];
        assert!((r[0] * r[0] + r[1] * r[1]).sqrt() >= 50.0 - 1e-9);
    }
    let fixed = s.initial.cameras.iter().filter(|c| c.fixed).count();
    assert_eq!(fixed, 20);
    assert_eq!(s.initial.cameras.len(), 40);
}
