use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use volchange::synth::{add_noise, apply_demolition, generate_building, generate_pose_scenario, BuildingSpec, DemolitionScript, PoseScenarioConfig};
use volchange::{ChangeParams, CloudFormat, PointCloud};

use crate::config::{parse_timestamp, EpochEntry, PipelineConfig};
use crate::report::write_report;

/// A synthetic demolition series plus an optional pose scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub seed: u64,
    /// Isotropic per-axis noise added to every epoch, metres.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_format")]
    pub format: CloudFormat,
    /// One timestamp per epoch; defaults to the first of consecutive months.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dates: Vec<String>,
    /// Emit per-interval truth-labelled clouds.
    #[serde(default = "yes")]
    pub truth_clouds: bool,
    pub building: BuildingSpec,
    pub script: DemolitionScript,
    /// Detection parameters written into the generated pipeline config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change: Option<ChangeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poses: Option<PoseScenarioConfig>,
}

fn default_format() -> CloudFormat {
    CloudFormat::PlyBinaryLe
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneTruth {
    /// Removed volume per interval, m³.
    pub interval_volumes: Vec<f64>,
    pub total_volume: f64,
    pub epoch_points: Vec<usize>,
    pub building: BuildingSpec,
    pub script: DemolitionScript,
    pub seed: u64,
    pub noise: f64,
}

#[derive(Debug, Clone)]
pub struct SceneOutput {
    pub epochs: Vec<PathBuf>,
    pub config_path: PathBuf,
    pub config: PipelineConfig,
    pub truth: SceneTruth,
}

fn extension(f: CloudFormat) -> &'static str {
    match f {
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => "ply",
        CloudFormat::XyzText => "xyz",
    }
}

fn default_dates(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{:04}-{:02}-01", 2024 + k / 12, k % 12 + 1)).collect()
}

fn save(cloud: &PointCloud, path: &Path, format: CloudFormat) -> anyhow::Result<()> {
    volchange::cloud::save_cloud(cloud, path, format).with_context(|| format!("writing {}", path.display()))
}

/// Writes `epoch_K` clouds, optional `truth_K_{earlier,later}.ply`,
/// `truth.json`, `pipeline.toml` and, if requested, `scenario.json` into `out`.
pub fn generate_scene(cfg: &SceneConfig, out: &Path) -> anyhow::Result<SceneOutput> {
    cfg.building.validate()?;
    cfg.script.validate()?;
    let n = cfg.script.last_epoch() as usize + 1;
    if n < 2 {
        bail!("script: at least one removal epoch is required");
    }
    let dates = if cfg.dates.is_empty() { default_dates(n) } else { cfg.dates.clone() };
    if dates.len() != n {
        bail!("dates: expected {n} entries (one per epoch), got {}", dates.len());
    }
    for (i, d) in dates.iter().enumerate() {
        if parse_timestamp(d).is_none() {
            bail!("dates[{i}]: cannot parse {d:?}");
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let env = cfg.building.envelope();
    let base: PointCloud = generate_building(&cfg.building, cfg.seed)?;
    let mut clean = vec![base];
    let mut volumes = Vec::new();
    let mut paths = Vec::new();
    let ext = extension(cfg.format);
    for e in 1..n {
        let d = apply_demolition(&clean[e - 1], &env, &cfg.script, e as u32, cfg.seed.wrapping_add(e as u64))?;
        volumes.push(d.removed_volume);
        if cfg.truth_clouds {
            let earlier = clean[e - 1].clone().with_labels(d.earlier_labels)?;
            save(&earlier, &out.join(format!("truth_{e}_earlier.ply")), CloudFormat::PlyBinaryLe)?;
            let later = d.later.clone().with_labels(d.later_labels)?;
            save(&later, &out.join(format!("truth_{e}_later.ply")), CloudFormat::PlyBinaryLe)?;
        }
        clean.push(d.later);
    }
    let mut epoch_points = Vec::new();
    for (k, c) in clean.iter().enumerate() {
        let noisy = add_noise(&c.clone().without_labels(), cfg.noise, cfg.seed.wrapping_add(1000 + k as u64))?;
        let p = out.join(format!("epoch_{k}.{ext}"));
        save(&noisy, &p, cfg.format)?;
        epoch_points.push(noisy.len());
        paths.push(p);
    }
    let truth = SceneTruth {
        total_volume: volumes.iter().sum(),
        interval_volumes: volumes,
        epoch_points,
        building: cfg.building.clone(),
        script: cfg.script.clone(),
        seed: cfg.seed,
        noise: cfg.noise,
    };
    write_report(&out.join("truth.json"), "scene-truth", &truth)?;
    if let Some(p) = &cfg.poses {
        let scenario = generate_pose_scenario(p)?;
        write_report(&out.join("scenario.json"), "pose-scenario", &scenario)?;
    }
    let entries = paths
        .iter()
        .zip(&dates)
        .map(|(p, d)| EpochEntry {
            path: PathBuf::from(p.file_name().expect("file name")),
            timestamp: d.clone(),
            label: None,
        })
        .collect();
    let mut pipeline = PipelineConfig::new(entries);
    pipeline.seed = cfg.seed;
    if let Some(c) = &cfg.change {
        pipeline.change = c.clone();
    }
    let config_path = out.join("pipeline.toml");
    std::fs::write(&config_path, pipeline.to_toml_string()).with_context(|| format!("writing {}", config_path.display()))?;
    let config = crate::config::parse_config(&config_path)?;
    Ok(SceneOutput { epochs: paths, config_path, config, truth })
}
