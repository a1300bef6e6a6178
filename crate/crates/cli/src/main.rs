//! `freespace`: run the road free-space pipeline or any single stage of it.
//!
//! Frame directories hold `image.ppm`, `probs.pfm2`, `cloud.ply` (camera
//! frame), `pose.json` and optionally `gt.pgm`; a sequence directory holds
//! `camera.json` and one `frame_NNN` directory per frame.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use freespace_core::eval::{compare_masks, metrics, ConfusionCounts};
use freespace_core::freespace::{backproject_mask, export_overlay, DEFAULT_TINT};
use freespace_core::geom3d::{CameraModel, OrientedBox, PoseSE3, RoadPlane};
use freespace_core::io::{
    read_json, read_pfm2, read_pgm_mask, read_ply, read_ppm, write_json, write_pfm2, write_pgm_mask, write_ply,
    write_ppm,
};
use freespace_core::pipeline::{
    fit_frame_boxes, fit_frame_plane, run_pipeline, segment_frame, FrameInput, PipelineConfig, Priors,
};
use freespace_core::scenegen::{gen_scene, SceneSpec};
use freespace_core::{Error, Execution, Result};

#[derive(Parser)]
#[command(name = "freespace", version, about = "Road free-space detection from images and sparse point clouds")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON); missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence with ground truth.
    Synth {
        /// Scene description (JSON); defaults to the built-in two-car scene.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        flip_rate: Option<f64>,
        #[arg(long)]
        outliers: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the road plane to a camera-frame cloud. Writes plane.json.
    FitPlane {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit obstacle boxes above the plane. Writes boxes.json.
    FitBoxes {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        plane: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Solve the CRF for one frame. Writes mask.pgm and overlay.ppm.
    Segment {
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        plane: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        /// Previous frame's plane, for the temporal prior.
        #[arg(long, requires = "prev_boxes")]
        prev_plane: Option<PathBuf>,
        #[arg(long, requires = "prev_plane")]
        prev_boxes: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        frame_id: usize,
        /// Ground-truth mask; writes metrics.json when given.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Back-project road pixels onto the plane. Writes freespace.ply.
    Backproject {
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        plane: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame_id: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Precision, recall and F1 of a predicted mask.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every stage over a sequence directory.
    Pipeline {
        /// Directory with camera.json and frame_NNN subdirectories.
        #[arg(long)]
        input: PathBuf,
        /// Ground truth as `<frame dir>/<name>`; defaults to gt.pgm when present.
        #[arg(long)]
        gt: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn frame_dir(k: usize) -> String {
    format!("frame_{k:03}")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let cfg = match &common.config {
        Some(p) => read_json::<PipelineConfig>(p)?,
        None => PipelineConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_metrics(path: &Path, frames: &[(usize, ConfusionCounts)]) -> Result<()> {
    let per_frame: Vec<_> = frames
        .iter()
        .map(|(k, c)| {
            let m = metrics(c);
            json!({"frame": k, "precision": m.precision, "recall": m.recall, "fval": m.fval, "counts": c})
        })
        .collect();
    let total = frames.iter().fold(ConfusionCounts::default(), |a, (_, c)| a + *c);
    let m = metrics(&total);
    let doc = json!({
        "frames": per_frame,
        "aggregate": {"precision": m.precision, "recall": m.recall, "fval": m.fval, "counts": total},
    });
    write_json(path, &doc)
}

fn synth(
    scene: Option<PathBuf>,
    flip_rate: Option<f64>,
    outliers: Option<f64>,
    seed: Option<u64>,
    common: &Common,
) -> Result<()> {
    let mut spec = match scene {
        Some(p) => read_json::<SceneSpec>(&p)?,
        None => SceneSpec::acceptance(),
    };
    if let Some(r) = flip_rate {
        spec.label_flip_rate = r;
    }
    if let Some(f) = outliers {
        spec.outlier_fraction = f;
    }
    if let Some(s) = seed {
        spec.rng_seed = s;
    }
    let frames = gen_scene(&spec)?;
    ensure_dir(&common.out)?;
    write_json(&common.out.join("scene.json"), &spec)?;
    write_json(&common.out.join("camera.json"), &spec.camera)?;
    for f in &frames {
        let dir = common.out.join(frame_dir(f.index));
        ensure_dir(&dir)?;
        write_ppm(&dir.join("image.ppm"), &f.image)?;
        write_pfm2(&dir.join("probs.pfm2"), &f.prob_map)?;
        write_ply(&dir.join("cloud.ply"), &f.cloud)?;
        write_json(&dir.join("pose.json"), &f.pose)?;
        write_pgm_mask(&dir.join("gt.pgm"), &f.gt_mask)?;
    }
    info!("wrote {} frames to {}", frames.len(), common.out.display());
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    let exec = Execution::default();
    match cmd {
        Command::Synth {
            scene,
            flip_rate,
            outliers,
            seed,
            common,
        } => synth(scene, flip_rate, outliers, seed, &common),
        Command::FitPlane { cloud, pose, common } => {
            let cfg = load_config(&common)?;
            let plane = fit_frame_plane(&read_ply(&cloud)?, &read_json(&pose)?, &cfg, exec)?;
            ensure_dir(&common.out)?;
            write_json(&common.out.join("plane.json"), &plane)
        }
        Command::FitBoxes {
            cloud,
            pose,
            plane,
            common,
        } => {
            let cfg = load_config(&common)?;
            let plane: RoadPlane = read_json(&plane)?;
            let boxes = fit_frame_boxes(&read_ply(&cloud)?, &read_json(&pose)?, &plane, &cfg, exec);
            ensure_dir(&common.out)?;
            write_json(&common.out.join("boxes.json"), &boxes)
        }
        Command::Segment {
            camera,
            pose,
            image,
            probs,
            plane,
            boxes,
            prev_plane,
            prev_boxes,
            frame_id,
            gt,
            common,
        } => {
            let cfg = load_config(&common)?;
            let cam: CameraModel = read_json(&camera)?;
            cam.validate()?;
            let pose: PoseSE3 = read_json(&pose)?;
            let image = read_ppm(&image)?;
            let probs = read_pfm2(&probs)?;
            let plane: RoadPlane = read_json(&plane)?;
            let boxes: Vec<OrientedBox> = read_json(&boxes)?;
            let prev = match (prev_plane, prev_boxes) {
                (Some(p), Some(b)) => Some((read_json::<RoadPlane>(&p)?, read_json::<Vec<OrientedBox>>(&b)?)),
                _ => None,
            };
            let gt = gt.map(|p| read_pgm_mask(&p)).transpose()?;
            let current = Priors {
                plane: &plane,
                boxes: &boxes,
            };
            let previous = prev.as_ref().map(|(p, b)| Priors { plane: p, boxes: b });
            let seg = segment_frame(frame_id, &cam, &pose, &image, &probs, current, previous, &cfg, exec)?;
            ensure_dir(&common.out)?;
            write_pgm_mask(&common.out.join("mask.pgm"), &seg.mask)?;
            write_ppm(&common.out.join("overlay.ppm"), &export_overlay(&image, &seg.mask, DEFAULT_TINT)?)?;
            if let Some(gt) = gt {
                let c = compare_masks(&seg.mask, &gt)?;
                write_metrics(&common.out.join("metrics.json"), &[(frame_id, c)])?;
            }
            Ok(())
        }
        Command::Backproject {
            camera,
            pose,
            plane,
            mask,
            frame_id,
            common,
        } => {
            let cfg = load_config(&common)?;
            let cam: CameraModel = read_json(&camera)?;
            cam.validate()?;
            let cloud = backproject_mask(
                &read_pgm_mask(&mask)?,
                &cam,
                &read_json(&pose)?,
                &read_json(&plane)?,
                &cfg.backproject,
                frame_id,
            )?;
            ensure_dir(&common.out)?;
            write_ply(&common.out.join("freespace.ply"), &cloud.points)
        }
        Command::Eval { pred, gt, common } => {
            let c = compare_masks(&read_pgm_mask(&pred)?, &read_pgm_mask(&gt)?)?;
            let m = metrics(&c);
            println!("{}", json!({"precision": m.precision, "recall": m.recall, "fval": m.fval}));
            ensure_dir(&common.out)?;
            write_metrics(&common.out.join("metrics.json"), &[(0, c)])
        }
        Command::Pipeline { input, gt, common } => {
            let cfg = load_config(&common)?;
            let cam: CameraModel = read_json(&input.join("camera.json"))?;
            let mut frames = Vec::new();
            for k in 0.. {
                let dir = input.join(frame_dir(k));
                if !dir.is_dir() {
                    break;
                }
                let gt_path = dir.join(gt.as_deref().unwrap_or("gt.pgm"));
                let gt_mask = if gt.is_some() || gt_path.is_file() {
                    Some(read_pgm_mask(&gt_path)?)
                } else {
                    None
                };
                frames.push(FrameInput {
                    image: read_ppm(&dir.join("image.ppm"))?,
                    prob_map: read_pfm2(&dir.join("probs.pfm2"))?,
                    cloud: read_ply(&dir.join("cloud.ply"))?,
                    pose: read_json(&dir.join("pose.json"))?,
                    gt_mask,
                });
            }
            if frames.is_empty() {
                return Err(Error::Format {
                    path: input,
                    msg: "no frame_000 directory".into(),
                });
            }
            let outputs = run_pipeline(&cam, &frames, &cfg)?;
            let mut scored = Vec::new();
            for (o, f) in outputs.iter().zip(&frames) {
                let dir = common.out.join(frame_dir(o.index));
                ensure_dir(&dir)?;
                write_json(&dir.join("plane.json"), &o.plane)?;
                write_json(&dir.join("boxes.json"), &o.boxes)?;
                write_pgm_mask(&dir.join("mask.pgm"), &o.segmentation.mask)?;
                write_ppm(
                    &dir.join("overlay.ppm"),
                    &export_overlay(&f.image, &o.segmentation.mask, DEFAULT_TINT)?,
                )?;
                write_ply(&dir.join("freespace.ply"), &o.free_space.points)?;
                if let Some(c) = o.confusion {
                    scored.push((o.index, c));
                }
            }
            if !scored.is_empty() {
                write_metrics(&common.out.join("metrics.json"), &scored)?;
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoPlaneFound { .. } => 3,
        Error::Invariant(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
