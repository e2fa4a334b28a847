use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use volchange::change::hierarchical_detect;
use volchange::cloud::{apply_transform, save_cloud};
use volchange::eval::{change_metrics, confusion_counts, distance_stats, ChangeMetrics, ConfusionCounts, DistanceStats};
use volchange::posegraph::{refine_progressive, RefineOptions};
use volchange::registration::{icp_align, point_to_plane_distances, IcpParams};
use volchange::synth::PoseScenario;
use volchange::volume::{build_ground_grid, timeline_report};
use volchange::{ChangeParams, ChangeSet, CloudFormat, GroundGrid};

use crate::config::{parse_config, PipelineConfig};
use crate::pipeline::{load_any, run_pipeline, DetectionSummary, GridVolume, VoxelList};
use crate::report::{read_report, write_report};
use crate::scene::{generate_scene, SceneConfig};

#[derive(Debug, Parser)]
#[command(name = "volchange", version, about = "Octree-based volumetric change detection for multi-temporal point clouds")]
pub struct Cli {
    /// TOML config (pipeline config for `run`/`detect`/`timeline`, scene config for `synth`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Repeat for more logging.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic demolition series (and pose scenario).
    Synth,
    /// Align a moving cloud onto a reference cloud with ICP.
    Register(RegisterArgs),
    /// Progressive bundle adjustment of a pose scenario.
    RefinePoses(RefineArgs),
    /// Detect changed voxels and points between two epochs.
    Detect(DetectArgs),
    /// Integrate a detection into a ground-grid volume.
    Volume(VolumeArgs),
    /// Per-interval and cumulative volumes from ground grids.
    Timeline(TimelineArgs),
    /// Accuracy reports.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Full pipeline over every consecutive epoch pair.
    Run,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub moving: PathBuf,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub rejection_distance: Option<f64>,
    #[arg(long)]
    pub trim_fraction: Option<f64>,
    #[arg(long)]
    pub align_centroids: bool,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Scenario report written by `synth`.
    #[arg(long)]
    pub scenario: PathBuf,
    /// TOML with refinement options.
    #[arg(long)]
    pub options: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ChangeOverrides {
    #[arg(long)]
    pub start_depth: Option<u32>,
    #[arg(long)]
    pub max_depth: Option<u32>,
    #[arg(long)]
    pub subdivisions: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Comma-separated, one per depth from start to max.
    #[arg(long, value_delimiter = ',')]
    pub depth_thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub raw_distance: bool,
    #[arg(long)]
    pub min_points_to_split: Option<usize>,
    #[arg(long)]
    pub component_radius: Option<f64>,
    #[arg(long)]
    pub component_min_size: Option<usize>,
}

impl ChangeOverrides {
    pub fn apply(&self, p: &mut ChangeParams) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { p.$f = v; })*};
        }
        set!(start_depth, max_depth, subdivisions, threshold, depth_thresholds, min_points_to_split, component_min_size);
        if self.component_radius.is_some() {
            p.component_radius = self.component_radius;
        }
        if self.raw_distance {
            p.normalize = false;
        }
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub earlier: PathBuf,
    #[arg(long)]
    pub later: PathBuf,
    #[command(flatten)]
    pub change: ChangeOverrides,
}

#[derive(Debug, Args)]
pub struct VolumeArgs {
    #[arg(long)]
    pub earlier: PathBuf,
    #[arg(long)]
    pub later: PathBuf,
    /// `changes.json` written by `detect`.
    #[arg(long)]
    pub changes: PathBuf,
    /// Defaults to twice the earlier epoch's sample spacing.
    #[arg(long)]
    pub cell_size: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TimelineArgs {
    /// `grid.json` files in interval order; epochs come from `--config`.
    #[arg(long, num_args = 1.., required = true)]
    pub grids: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Confusion counts and metrics from two label-carrying clouds.
    Labels {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Point-to-plane distances from a probe cloud to a reference cloud.
    Distances {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Histogram upper edge; defaults to the largest distance.
        #[arg(long)]
        max_distance: Option<f64>,
    },
}

#[derive(Debug, Serialize)]
struct LabelReport {
    counts: ConfusionCounts,
    metrics: ChangeMetrics,
}

#[derive(Debug, Serialize)]
struct Histogram {
    bin_width: f64,
    max: f64,
    counts: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct DistanceSummary {
    k: usize,
    stats: DistanceStats<f64>,
    fallback: usize,
    histogram: Histogram,
}

#[derive(Debug, Serialize)]
struct RegistrationReport {
    icp: volchange::registration::IcpResult<f64>,
    params: IcpParams<f64>,
}

#[derive(Debug, Serialize)]
struct RefineReport {
    options: RefineOptions<f64>,
    result: volchange::AdjustmentResult,
}

impl Cli {
    fn output(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn pipeline_config(&self) -> anyhow::Result<Option<PipelineConfig>> {
        self.config.as_deref().map(parse_config).transpose().map_err(Into::into)
    }
}

fn mkdir(p: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn require(p: &Path) -> anyhow::Result<()> {
    if !p.is_file() {
        bail!("input file not found: {}", p.display());
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let out = cli.output();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring threads")?;
    }
    match &cli.command {
        Command::Synth => {
            let path = cli.config.as_deref().context("synth needs --config <scene.toml>")?;
            require(path)?;
            let text = std::fs::read_to_string(path)?;
            let mut scene: SceneConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if let Some(s) = cli.seed {
                scene.seed = s;
            }
            let r = generate_scene(&scene, &out)?;
            println!("{} epochs, analytic volume {:.3} m3, config {}", r.epochs.len(), r.truth.total_volume, r.config_path.display());
        }
        Command::Register(a) => {
            require(&a.reference)?;
            require(&a.moving)?;
            let mut params = cli.pipeline_config()?.map(|c| c.icp).unwrap_or_default();
            if let Some(v) = a.max_iterations {
                params.max_iterations = v;
            }
            if let Some(v) = a.rejection_distance {
                params.rejection_distance = v;
            }
            if let Some(v) = a.trim_fraction {
                params.trim_fraction = v;
            }
            params.align_centroids |= a.align_centroids;
            let (reference, moving) = (load_any(&a.reference)?, load_any(&a.moving)?);
            let icp = icp_align(&moving, &reference, &params)?;
            mkdir(&out)?;
            save_cloud(&apply_transform(&moving, &icp.transform), &out.join("aligned.ply"), CloudFormat::PlyBinaryLe)?;
            println!("{:?} after {} iterations, rms {:.5}", icp.termination, icp.iterations, icp.final_rms);
            write_report(&out.join("registration.json"), "registration", &RegistrationReport { icp, params })?;
        }
        Command::RefinePoses(a) => {
            require(&a.scenario)?;
            let scenario: PoseScenario = read_report(&a.scenario, "pose-scenario")?;
            let options: RefineOptions<f64> = match &a.options {
                Some(p) => {
                    require(p)?;
                    toml::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?
                }
                None => RefineOptions::default(),
            };
            let result = refine_progressive(&scenario.initial, &options)?;
            mkdir(&out)?;
            println!("rms {:.4} px, {} rejected, converged {}", result.rms, result.rejected.len(), result.converged);
            write_report(&out.join("adjustment.json"), "adjustment", &RefineReport { options, result })?;
        }
        Command::Detect(a) => {
            require(&a.earlier)?;
            require(&a.later)?;
            let mut params = cli.pipeline_config()?.map(|c| c.change).unwrap_or_default();
            a.change.apply(&mut params);
            params.validate()?;
            let (earlier, later) = (load_any(&a.earlier)?, load_any(&a.later)?);
            let cs = hierarchical_detect(&earlier, &later, &params)?;
            mkdir(&out)?;
            save_cloud(&earlier.clone().with_labels(cs.reference_labels(earlier.len()))?, &out.join("earlier_labeled.ply"), CloudFormat::PlyBinaryLe)?;
            save_cloud(&later.clone().with_labels(cs.other_labels(later.len()))?, &out.join("later_labeled.ply"), CloudFormat::PlyBinaryLe)?;
            let changes = crate::pipeline::change_cloud(&earlier, &later, &cs, 1)?;
            save_cloud(&changes, &out.join("changes.ply"), CloudFormat::PlyBinaryLe)?;
            write_report(&out.join("voxels.json"), "voxels", &VoxelList { root: cs.root, finest_edge: cs.finest_edge, voxels: &cs.voxels })?;
            write_report(&out.join("detection.json"), "detection", &DetectionSummary::new(&cs))?;
            println!("{} voxels, {} + {} changed points", cs.voxels.len(), cs.reference_changed.len(), cs.other_changed.len());
            write_report(&out.join("changes.json"), "change-set", &cs)?;
        }
        Command::Volume(a) => {
            for p in [&a.earlier, &a.later, &a.changes] {
                require(p)?;
            }
            let cs: ChangeSet = read_report(&a.changes, "change-set")?;
            let (earlier, later) = (load_any(&a.earlier)?, load_any(&a.later)?);
            let grid = build_ground_grid(&cs, &earlier, &later, a.cell_size.unwrap_or_else(|| crate::pipeline::default_cell_size(&cs, &earlier)))?;
            let v = GridVolume::new(&grid);
            mkdir(&out)?;
            println!("{:.4} m3 over {} cells", v.volume, v.cells);
            write_report(&out.join("grid.json"), "ground-grid", &grid)?;
            write_report(&out.join("volume.json"), "grid-volume", &v)?;
        }
        Command::Timeline(a) => {
            let cfg = cli.pipeline_config()?.context("timeline needs --config <pipeline.toml> for epoch labels and times")?;
            let grids = a
                .grids
                .iter()
                .map(|p| {
                    require(p)?;
                    read_report::<GroundGrid>(p, "ground-grid")
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let report = timeline_report(&cfg.timeline_epochs(), &grids)?;
            mkdir(&out)?;
            println!("total {:.4} m3", report.total);
            write_report(&out.join("timeline.json"), "volume-report", &report)?;
        }
        Command::Eval(EvalCommand::Labels { predicted, truth }) => {
            require(predicted)?;
            require(truth)?;
            let (p, t) = (load_any(predicted)?, load_any(truth)?);
            let (Some(pl), Some(tl)) = (p.labels(), t.labels()) else {
                bail!("both clouds need a change_label property");
            };
            let counts = confusion_counts(pl, tl)?;
            let metrics = change_metrics(&counts);
            mkdir(&out)?;
            println!("{metrics:?}");
            write_report(&out.join("metrics.json"), "label-metrics", &LabelReport { counts, metrics })?;
        }
        Command::Eval(EvalCommand::Distances { probe, reference, k, bins, max_distance }) => {
            require(probe)?;
            require(reference)?;
            let d = point_to_plane_distances(&load_any(probe)?, &load_any(reference)?, *k)?;
            let stats = distance_stats(&d)?;
            let max = max_distance.unwrap_or(stats.max);
            if !(max > 0.0) || *bins == 0 {
                bail!("histogram needs bins > 0 and a positive max distance");
            }
            let histogram = Histogram { bin_width: max / *bins as f64, max, counts: d.histogram(*bins, max) };
            mkdir(&out)?;
            println!("mean {:.5} std {:.5}", stats.mean, stats.std);
            let summary = DistanceSummary { k: *k, stats, fallback: d.fallback.len(), histogram };
            write_report(&out.join("distances.json"), "distances", &summary)?;
        }
        Command::Run => {
            let mut cfg = cli.pipeline_config()?.context("run needs --config <pipeline.toml>")?;
            if let Some(o) = &cli.output {
                cfg.output = std::path::absolute(o)?;
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(t) = cli.threads {
                cfg.threads = t;
            }
            let r = run_pipeline(&cfg)?;
            for i in &r.intervals {
                println!("{} -> {}: {:.3} m3", i.from, i.to, i.volume.volume);
            }
            println!("total {:.3} m3, outputs in {}", r.timeline.total, r.output.display());
        }
    }
    Ok(())
}
