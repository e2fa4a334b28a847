use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use chrono::Utc;
use serde::Serialize;
use volchange::change::{hierarchical_detect, typical_spacing, ChangedVoxel, LevelStats};
use volchange::cloud::apply_transform;
use volchange::registration::{icp_align, IcpResult};
use volchange::volume::{build_ground_grid, change_volume, timeline_report, CellKind};
use volchange::{BoundingCube, ChangeLabel, ChangeParams, ChangeSet, CloudFormat, GroundGrid, PointCloud, VolumeReport};

use crate::config::{PipelineConfig, RegistrationMode};
use crate::report::write_report;

/// One color per interval, cycled.
pub const INTERVAL_COLORS: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [128, 128, 0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Setup,
    Load,
    Register,
    Detect,
    Volume,
    Timeline,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Setup => "setup",
            Stage::Load => "load",
            Stage::Register => "register",
            Stage::Detect => "detect",
            Stage::Volume => "volume",
            Stage::Timeline => "timeline",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub interval: Option<usize>,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.interval {
            Some(i) => write!(f, "[{}] interval {}: {:#}", self.stage, i, self.source),
            None => write!(f, "[{}] {:#}", self.stage, self.source),
        }
    }
}

impl std::error::Error for StageError {}

trait StageExt<T> {
    fn stage(self, stage: Stage, interval: Option<usize>) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage, interval: Option<usize>) -> Result<T, StageError> {
        self.map_err(|e| StageError { stage, interval, source: e.into() })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionSummary {
    pub root: BoundingCube,
    pub finest_edge: f64,
    pub component_radius: f64,
    pub voxels: usize,
    pub retained_voxels: usize,
    pub earlier_changed: usize,
    pub later_changed: usize,
    pub earlier_in_voxels: usize,
    pub later_in_voxels: usize,
    pub later_outside_root: usize,
    pub levels: Vec<LevelStats>,
    pub params: ChangeParams,
}

impl DetectionSummary {
    pub fn new(cs: &ChangeSet) -> Self {
        DetectionSummary {
            root: cs.root,
            finest_edge: cs.finest_edge,
            component_radius: cs.component_radius,
            voxels: cs.voxels.len(),
            retained_voxels: cs.retained_voxels().count(),
            earlier_changed: cs.reference_changed.len(),
            later_changed: cs.other_changed.len(),
            earlier_in_voxels: cs.reference_in_voxels,
            later_in_voxels: cs.other_in_voxels,
            later_outside_root: cs.other_outside_root,
            levels: cs.levels.clone(),
            params: cs.params.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VoxelList<'a> {
    pub root: BoundingCube,
    pub finest_edge: f64,
    pub voxels: &'a [ChangedVoxel<f64>],
}

#[derive(Debug, Clone, Serialize)]
pub struct GridVolume {
    pub cell_size: f64,
    pub volume: f64,
    pub cells: usize,
    pub removed_only: usize,
    pub added_only: usize,
    pub both: usize,
}

impl GridVolume {
    pub fn new(grid: &GroundGrid) -> Self {
        let count = |k: CellKind| grid.cells.iter().filter(|c| c.kind == k).count();
        GridVolume {
            cell_size: grid.cell_size,
            volume: change_volume(grid),
            cells: grid.cells.len(),
            removed_only: count(CellKind::RemovedOnly),
            added_only: count(CellKind::AddedOnly),
            both: count(CellKind::Both),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalRecord {
    pub index: usize,
    pub from: String,
    pub to: String,
    pub directory: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registration: Option<IcpResult<f64>>,
    pub detection: DetectionSummary,
    pub volume: GridVolume,
}

#[derive(Debug, Clone, Serialize)]
struct Versions {
    cli: &'static str,
    library: &'static str,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_stage: Option<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_interval: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    versions: Versions,
    seed: u64,
    threads: usize,
    config: &'a PipelineConfig,
    intervals: &'a [IntervalRecord],
    #[serde(skip_serializing_if = "Option::is_none")]
    timeline: Option<&'a VolumeReport>,
    artifacts: &'a [String],
}

#[derive(Debug, Clone, Serialize)]
struct StageTiming {
    stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval: Option<usize>,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct Timings {
    started_at: String,
    finished_at: String,
    worker_threads: usize,
    total_seconds: f64,
    stages: Vec<StageTiming>,
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output: PathBuf,
    pub intervals: Vec<IntervalRecord>,
    pub timeline: VolumeReport,
    pub artifacts: Vec<String>,
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    out: &'a Path,
    intervals: Vec<IntervalRecord>,
    timeline: Option<VolumeReport>,
    artifacts: Vec<String>,
    timings: Vec<StageTiming>,
}

impl Run<'_> {
    fn timed<R>(&mut self, stage: Stage, interval: Option<usize>, f: impl FnOnce(&mut Self) -> R) -> R {
        let t = Instant::now();
        let r = f(self);
        self.timings.push(StageTiming { stage, interval, seconds: t.elapsed().as_secs_f64() });
        r
    }

    fn artifact(&mut self, rel: impl Into<String>) -> PathBuf {
        let rel = rel.into();
        let p = self.out.join(&rel);
        self.artifacts.push(rel);
        p
    }

    fn save(&mut self, cloud: &PointCloud, rel: String, interval: Option<usize>) -> Result<(), StageError> {
        let p = self.artifact(rel);
        volchange::cloud::save_cloud(cloud, &p, CloudFormat::PlyBinaryLe)
            .with_context(|| format!("writing {}", p.display()))
            .stage(Stage::Write, interval)
    }

    fn report<S: Serialize>(&mut self, rel: String, kind: &str, data: &S, interval: Option<usize>) -> Result<(), StageError> {
        let p = self.artifact(rel);
        write_report(&p, kind, data).stage(Stage::Write, interval)
    }

    fn stages(&mut self) -> Result<(), StageError> {
        let cfg = self.cfg;
        let clouds = self.timed(Stage::Load, None, |_| load_epochs(cfg))?;
        let epochs = cfg.timeline_epochs();
        let mut all_changes: Option<PointCloud> = None;
        let mut grids = Vec::new();
        let mut earlier = clouds[0].clone();
        for (i, later) in clouds.into_iter().enumerate().skip(1) {
            let (from, to) = (cfg.epochs[i - 1].label().to_string(), cfg.epochs[i].label().to_string());
            log::info!("interval {i}: {from} -> {to}");
            let at = Some(i);
            let (later, registration) = match cfg.registration {
                RegistrationMode::None => (later, None),
                RegistrationMode::Icp => {
                    let r = self.timed(Stage::Register, at, |_| icp_align(&later, &earlier, &cfg.icp)).stage(Stage::Register, at)?;
                    log::info!("icp: {} iterations, rms {:.4}", r.iterations, r.final_rms);
                    (apply_transform(&later, &r.transform), Some(r))
                }
            };
            let cs = self
                .timed(Stage::Detect, at, |_| hierarchical_detect(&earlier, &later, &cfg.change))
                .stage(Stage::Detect, at)?;
            log::info!("detect: {} voxels, {} + {} changed points", cs.voxels.len(), cs.reference_changed.len(), cs.other_changed.len());
            let cell = cfg.cell_size.unwrap_or_else(|| default_cell_size(&cs, &earlier));
            let grid = self
                .timed(Stage::Volume, at, |_| build_ground_grid(&cs, &earlier, &later, cell))
                .stage(Stage::Volume, at)?;
            let volume = GridVolume::new(&grid);
            log::info!("volume: {:.3} m3 over {} cells", volume.volume, volume.cells);

            let dir = format!("interval_{i:02}");
            std::fs::create_dir_all(self.out.join(&dir)).stage(Stage::Write, at)?;
            let t = Instant::now();
            let earlier_l = earlier.clone().with_labels(cs.reference_labels(earlier.len())).stage(Stage::Write, at)?;
            let later_l = later.clone().with_labels(cs.other_labels(later.len())).stage(Stage::Write, at)?;
            let changes = change_cloud(&earlier_l, &later_l, &cs, i).stage(Stage::Write, at)?;
            self.save(&earlier_l, format!("{dir}/earlier_labeled.ply"), at)?;
            self.save(&later_l, format!("{dir}/later_labeled.ply"), at)?;
            self.save(&changes, format!("{dir}/changes.ply"), at)?;
            let voxels = VoxelList { root: cs.root, finest_edge: cs.finest_edge, voxels: &cs.voxels };
            self.report(format!("{dir}/voxels.json"), "voxels", &voxels, at)?;
            self.report(format!("{dir}/grid.json"), "ground-grid", &grid, at)?;
            self.report(format!("{dir}/volume.json"), "grid-volume", &volume, at)?;
            if let Some(r) = &registration {
                self.report(format!("{dir}/registration.json"), "registration", r, at)?;
            }
            self.timings.push(StageTiming { stage: Stage::Write, interval: at, seconds: t.elapsed().as_secs_f64() });
            all_changes = Some(match all_changes {
                None => changes,
                Some(c) if c.is_empty() => changes,
                Some(c) if changes.is_empty() => c,
                Some(c) => c.concat(&changes),
            });
            self.intervals.push(IntervalRecord {
                index: i,
                from,
                to,
                directory: dir,
                registration,
                detection: DetectionSummary::new(&cs),
                volume,
            });
            grids.push(grid);
            earlier = later;
        }
        let timeline = self.timed(Stage::Timeline, None, |_| timeline_report(&epochs, &grids)).stage(Stage::Timeline, None)?;
        log::info!("total volume {:.3} m3", timeline.total);
        if let Some(c) = all_changes {
            self.save(&c, "changes_all.ply".into(), None)?;
        }
        self.report("timeline.json".into(), "volume-report", &timeline, None)?;
        self.timeline = Some(timeline);
        Ok(())
    }
}

fn load_epochs(cfg: &PipelineConfig) -> Result<Vec<PointCloud>, StageError> {
    for (i, e) in cfg.epochs.iter().enumerate() {
        if !e.path.is_file() {
            return Err(anyhow!("epochs[{i}]: input file not found: {}", e.path.display())).stage(Stage::Load, None);
        }
    }
    cfg.epochs
        .iter()
        .map(|e| load_any(&e.path))
        .collect::<anyhow::Result<Vec<_>>>()
        .stage(Stage::Load, None)
}

pub fn load_any(path: &Path) -> anyhow::Result<PointCloud> {
    let fmt = CloudFormat::from_path(path).ok_or_else(|| anyhow!("{}: unrecognized cloud extension", path.display()))?;
    volchange::cloud::load_cloud(path, fmt).with_context(|| format!("loading {}", path.display()))
}

/// Twice the typical sample spacing of the earlier epoch, never below the
/// finest voxel edge.
pub fn default_cell_size(cs: &ChangeSet, earlier: &PointCloud) -> f64 {
    cs.finest_edge.max(2.0 * typical_spacing(earlier))
}

/// Changed points of both epochs in the interval color, tagged with the
/// interval index.
pub fn change_cloud(earlier: &PointCloud, later: &PointCloud, cs: &ChangeSet, interval: usize) -> anyhow::Result<PointCloud> {
    let a = earlier.select(&cs.reference_changed);
    let b = later.select(&cs.other_changed);
    let pts = if a.is_empty() {
        b
    } else if b.is_empty() {
        a
    } else {
        a.concat(&b)
    };
    let n = pts.len();
    let color = INTERVAL_COLORS[(interval - 1) % INTERVAL_COLORS.len()];
    Ok(pts
        .with_colors(vec![color; n])?
        .with_epochs(vec![interval as u32; n])?
        .with_labels(vec![ChangeLabel::Changed; n])?)
}

/// Runs every stage and writes `manifest.json` and `timings.json` whether or
/// not a stage fails.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, StageError> {
    cfg.validate().stage(Stage::Setup, None)?;
    let out = cfg.output.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).stage(Stage::Setup, None)?;
    let started = Utc::now();
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().stage(Stage::Setup, None)?;
    let workers = pool.current_num_threads();
    let mut run = Run { cfg, out, intervals: Vec::new(), timeline: None, artifacts: Vec::new(), timings: Vec::new() };
    let result = pool.install(|| run.stages());
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml_string()).stage(Stage::Write, None)?;
    let mut artifacts = vec!["config.toml".to_string()];
    artifacts.append(&mut run.artifacts);
    let (status, failed_stage, failed_interval, error) = match &result {
        Ok(()) => ("complete", None, None, None),
        Err(e) => ("incomplete", Some(e.stage), e.interval, Some(e.to_string())),
    };
    let manifest = Manifest {
        status,
        failed_stage,
        failed_interval,
        error,
        versions: Versions { cli: env!("CARGO_PKG_VERSION"), library: volchange::VERSION },
        seed: cfg.seed,
        threads: cfg.threads,
        config: cfg,
        intervals: &run.intervals,
        timeline: run.timeline.as_ref(),
        artifacts: &artifacts,
    };
    write_report(&out.join("manifest.json"), "manifest", &manifest).stage(Stage::Write, None)?;
    let timings = Timings {
        started_at: started.to_rfc3339(),
        finished_at: Utc::now().to_rfc3339(),
        worker_threads: workers,
        total_seconds: clock.elapsed().as_secs_f64(),
        stages: run.timings,
    };
    write_report(&out.join("timings.json"), "timings", &timings).stage(Stage::Write, None)?;
    result?;
    Ok(RunSummary {
        output: out.to_path_buf(),
        intervals: run.intervals,
        timeline: run.timeline.expect("timeline on success"),
        artifacts,
    })
}
