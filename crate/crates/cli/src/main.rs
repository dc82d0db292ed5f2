//! `graspkit`: annotation, association datasets, training, simulation and
//! evaluation from the command line. Every command prints one JSON summary
//! line on stdout. Exit codes: 0 success, 2 invalid input, 3 I/O failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use graspkit_core::annotation::{annotate_object, project_to_scene, AnnotationGrid, GraspLabelSet};
use graspkit_core::association::{train_embedding, TrainConfig};
use graspkit_core::eval::{downsample_dataset, evaluate_ap, Axis, PlacedObject};
use graspkit_core::io;
use graspkit_core::se3::{GraspPose, Vec3};
use graspkit_core::simulator::{
    association_pair, run_episodes, summarize, ActionRecord, PairOptions, PairRecord, SceneConfig, SimWorld,
};
use graspkit_core::{Error, Result};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "graspkit", version, about = "Dense grasp labels, association and dynamic grasping simulation")]
struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Controller {
    Anygrasp,
    Nearest,
}

impl Controller {
    fn name(self) -> &'static str {
        match self {
            Controller::Anygrasp => "anygrasp",
            Controller::Nearest => "nearest",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AxisArg {
    Pose,
    Image,
    Scene,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dense analytic labels for one object model, written as JSON lines.
    Annotate {
        #[arg(long)]
        object: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        views: usize,
        #[arg(long, default_value_t = 12)]
        rotations: usize,
        #[arg(long, default_value_t = 512)]
        seeds: usize,
    },
    /// Moves per-object labels (`<dir>/<object id>.jsonl`) into a scene and
    /// drops grasps that collide with any object.
    SceneLabel {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders two-viewpoint association pairs into a directory.
    Associate {
        #[arg(long)]
        scene: PathBuf,
        /// Camera azimuths of the two views, degrees.
        #[arg(long, value_parser = parse_viewpoints, default_value = "0,30")]
        viewpoints: (f64, f64),
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
        /// Number of pairs; pair k uses seed `seed + k`.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        max_grasps: usize,
        /// Precomputed object-frame labels instead of annotating the scene.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Trains the linear grasp embedding on a directory of pairs.
    TrainAssoc {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 64)]
        dims: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs seeded closed-loop episodes and writes a JSON report plus a CSV
    /// action log next to it.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value_t = Controller::Anygrasp)]
        controller: Controller,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Precision of a ranked world-frame prediction file against the scene.
    EvalAp {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value_t = 0.4)]
        theta: f64,
    },
    /// Stride subsampling of a label dataset.
    Downsample {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long)]
        factor: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// One line of the action log CSV.
#[derive(serde::Serialize)]
struct ActionRow<'a> {
    seed: u64,
    t: f64,
    phase: &'a str,
    action: &'a str,
    x: f64,
    y: f64,
    z: f64,
    tcp_x: f64,
    tcp_y: f64,
    tcp_z: f64,
    n_grasps: usize,
}

impl<'a> ActionRow<'a> {
    fn new(seed: u64, a: &'a ActionRecord) -> Self {
        ActionRow {
            seed,
            t: a.t,
            phase: &a.phase,
            action: &a.action,
            x: a.x,
            y: a.y,
            z: a.z,
            tcp_x: a.tcp_x,
            tcp_y: a.tcp_y,
            tcp_z: a.tcp_z,
            n_grasps: a.n_grasps,
        }
    }
}

fn parse_viewpoints(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok((a.parse().map_err(|e| format!("{a}: {e}"))?, b.parse().map_err(|e| format!("{b}: {e}"))?)),
        _ => Err("expected two comma-separated azimuths, e.g. 0,30".into()),
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Labels are stamped with the scene's id for the object.
fn read_label_dir(dir: &Path, ids: impl Iterator<Item = u32>) -> Result<BTreeMap<u32, Vec<GraspPose>>> {
    ids.map(|id| {
        let labels = io::read_labels(&dir.join(format!("{id}.jsonl")))?;
        Ok((id, labels.into_iter().map(|g| GraspPose { object_id: Some(id), ..g }).collect()))
    })
    .collect()
}

fn load_world(scene: &Path, labels: Option<&Path>) -> Result<SimWorld> {
    let cfg = SceneConfig::load(scene)?;
    let base = base_dir(scene);
    match labels {
        Some(dir) => {
            let models = cfg.build_models(&base)?;
            let sets = read_label_dir(dir, models.iter().map(|m| m.object_id))?;
            SimWorld::with_labels(cfg, models, sets, &base)
        }
        None => SimWorld::build(cfg, &base),
    }
}

fn pair_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Io { path: dir.into(), source: e })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Annotate { object, out, views, rotations, seeds } => {
            let obj = io::load_object(&object, None)?;
            let grid = AnnotationGrid { n_views: views, n_rotations: rotations, n_seeds: seeds, ..Default::default() };
            let set = annotate_object(&obj, &grid, &Default::default())?;
            io::write_labels(&out, &set.labels)?;
            let best = set.labels.iter().map(|g| g.score).fold(0.0, f64::max);
            Ok(json!({"command": "annotate", "object_id": obj.object_id, "labels": set.labels.len(), "max_score": best, "out": out}))
        }
        Command::SceneLabel { scene, labels, out } => {
            let cfg = SceneConfig::load(&scene)?;
            let models = cfg.build_models(&base_dir(&scene))?;
            let poses = cfg.initial_poses();
            let sets = read_label_dir(&labels, models.iter().map(|m| m.object_id))?;
            let label_sets: Vec<GraspLabelSet> =
                sets.into_iter().map(|(id, l)| GraspLabelSet::new(Some(id), l)).collect();
            // BTreeMap order is id order; align poses with it.
            let mut placed: Vec<_> = models.iter().zip(&poses).collect();
            placed.sort_by_key(|(m, _)| m.object_id);
            let cloud: Vec<Vec3> = placed
                .iter()
                .flat_map(|(m, p)| m.points.iter().map(move |q| p.transform_point(q)))
                .collect();
            let ordered_poses: Vec<_> = placed.iter().map(|(_, p)| **p).collect();
            let mut set = project_to_scene(&label_sets, &ordered_poses, &cloud, &cfg.gripper)?;
            set.labels.sort_by(|a, b| b.score.total_cmp(&a.score));
            io::write_labels(&out, &set.labels)?;
            Ok(json!({"command": "scene-label", "objects": models.len(), "grasps": set.labels.len(), "out": out}))
        }
        Command::Associate { scene, viewpoints, sigma, out, count, max_grasps, labels } => {
            let world = load_world(&scene, labels.as_deref())?;
            let opts = PairOptions { azimuths: viewpoints, max_grasps, sigma };
            let mut positives = 0usize;
            for k in 0..count as u64 {
                let seed = cli.seed.wrapping_add(k);
                let pair = association_pair(&world, seed, &opts)?;
                positives += pair.labels.positive.iter().filter(|p| **p).count();
                let path = out.join(format!("pair_{seed:06}.json"));
                io::write_json(&path, &PairRecord::new(&pair, seed, &opts))?;
            }
            Ok(json!({"command": "associate", "pairs": count, "positives": positives, "out": out}))
        }
        Command::TrainAssoc { pairs, dims, steps, lr, tau, out } => {
            let files = pair_files(&pairs)?;
            if files.is_empty() {
                return Err(Error::InvalidInput(format!("no pair files in {}", pairs.display())));
            }
            let training = files
                .iter()
                .map(|f| io::read_json::<PairRecord>(f)?.training_pair())
                .collect::<Result<Vec<_>>>()?;
            let cfg = TrainConfig { dims, steps, learning_rate: lr, tau, seed: cli.seed, ..Default::default() };
            let outcome = train_embedding(&training, &cfg)?;
            io::write_text(&out, &outcome.model.to_text())?;
            let history = out.with_extension("loss.csv");
            io::write_loss_history(&history, &outcome.loss_history)?;
            Ok(json!({
                "command": "train-assoc",
                "pairs": training.len(),
                "initial_loss": outcome.loss_history.first(),
                "final_loss": outcome.loss_history.last(),
                "out": out,
                "loss_history": history,
            }))
        }
        Command::Simulate { scene, controller, episodes, report, labels } => {
            let world = load_world(&scene, labels.as_deref())?;
            let reports = run_episodes(&world, controller.name(), episodes, cli.seed)?;
            let summary = summarize(&reports);
            let episodes_json: Vec<_> = reports
                .iter()
                .map(|r| {
                    json!({
                        "seed": r.seed,
                        "outcome": r.outcome,
                        "failure_class": r.failure_class.map(|c| c.as_str()),
                        "time_to_grasp": r.time_to_grasp,
                        "mean_tracking_distance": r.mean_tracking_distance(),
                        "executes": r.executes,
                        "switches": r.switches,
                        "evidence": r.evidence,
                    })
                })
                .collect();
            io::write_json(&report, &json!({"summary": summary, "episodes": episodes_json}))?;
            let rows: Vec<ActionRow> = reports
                .iter()
                .flat_map(|r| r.log.iter().map(move |a| ActionRow::new(r.seed, a)))
                .collect();
            let log = report.with_extension("actions.csv");
            io::write_csv(&log, &rows)?;
            Ok(json!({
                "command": "simulate",
                "controller": controller.name(),
                "episodes": summary.episodes,
                "success_rate": summary.success_rate,
                "mean_time_to_success": summary.mean_time_to_success,
                "mean_tracking_distance": summary.mean_tracking_distance,
                "report": report,
                "actions": log,
            }))
        }
        Command::EvalAp { pred, scene, k, theta } => {
            let cfg = SceneConfig::load(&scene)?;
            let models = cfg.build_models(&base_dir(&scene))?;
            let placed: Vec<PlacedObject> = models
                .iter()
                .zip(cfg.initial_poses())
                .map(|(model, pose)| PlacedObject { model, pose })
                .collect();
            let preds = io::read_labels(&pred)?;
            let curve = evaluate_ap(&preds, &placed, &cfg.gripper, &cfg.annotation, k, theta)?;
            Ok(json!({
                "command": "eval-ap",
                "k": curve.k,
                "mean_ap": curve.mean_ap,
                "precision_at_k": curve.precision_at_k,
            }))
        }
        Command::Downsample { axis, factor, input, out } => {
            let axis = match axis {
                AxisArg::Pose => Axis::Pose,
                AxisArg::Image => Axis::Image,
                AxisArg::Scene => Axis::Scene,
            };
            let stats = downsample_dataset(&input, &out, axis, factor)?;
            Ok(json!({"command": "downsample", "axis": axis, "factor": factor, "seen": stats.seen, "kept": stats.kept, "out": out}))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
