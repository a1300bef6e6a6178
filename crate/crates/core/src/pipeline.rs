//! Per-frame orchestration: plane, boxes, data terms, color-lines smoothness,
//! graph cut, back-projection. Every stage is a public function so the CLI
//! can run them one at a time through files and reproduce the full run.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::color_lines::{build_model, edge_capacities, road_scores_with, ColorLinesParams, EdgeField};
use crate::crf::{solve, CostField};
use crate::error::{Error, Result};
use crate::eval::{compare_masks, metrics, ConfusionCounts, Metrics};
use crate::exec::Execution;
use crate::freespace::{backproject_mask_with, BackprojectParams, FreeSpaceCloud};
use crate::geom3d::{CameraModel, OrientedBox, PoseSE3, RoadPlane, Vec3};
use crate::obstacles::{fit_obstacles_with, ObstacleParams};
use crate::plane_fit::{fit_plane_hough_with, refine_plane_ls, PlaneSearchConfig};
use crate::priors::{
    accumulate_unaries, indicator_map_with, transfer_priors, unary_from_indicator, unary_from_probmap, CrfWeights,
    ProbMap, UnaryField,
};
use crate::raster::{Label, LabelMask, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub weights: CrfWeights,
    pub plane_search: PlaneSearchConfig,
    /// Least-squares polish of the grid optimum.
    pub refine_plane: bool,
    /// Refit the plane every this many frames; others reuse the last plane.
    pub refit_interval: usize,
    pub obstacles: ObstacleParams,
    pub color_lines: ColorLinesParams,
    pub backproject: BackprojectParams,
    /// Pixels with `S_R(p)` at or above this seed the color model.
    pub bootstrap_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            weights: CrfWeights::default(),
            plane_search: PlaneSearchConfig::default(),
            refine_plane: true,
            refit_interval: 1,
            obstacles: ObstacleParams::default(),
            color_lines: ColorLinesParams::default(),
            backproject: BackprojectParams::default(),
            bootstrap_threshold: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.plane_search.validate()?;
        self.backproject.validate()?;
        if self.refit_interval == 0 {
            return Err(Error::domain("refit_interval must be at least 1"));
        }
        let o = &self.obstacles;
        if !(o.h_min < o.h_max) || o.k == Some(0) {
            return Err(Error::domain(format!("invalid obstacle parameters {o:?}")));
        }
        let c = &self.color_lines;
        if !(c.bin_width > 0.0 && c.variance_floor > 0.0) {
            return Err(Error::domain(format!("invalid color-lines parameters {c:?}")));
        }
        if !(self.bootstrap_threshold > 0.0 && self.bootstrap_threshold < 1.0) {
            return Err(Error::domain(format!(
                "bootstrap threshold {} must lie in (0, 1)",
                self.bootstrap_threshold
            )));
        }
        Ok(())
    }
}

/// Plane from a camera-frame cloud; `pose` places it in the world.
pub fn fit_frame_plane(cloud: &[Vec3], pose: &PoseSE3, cfg: &PipelineConfig, exec: Execution) -> Result<RoadPlane> {
    let mut fit = fit_plane_hough_with(cloud, &cfg.plane_search, exec)?;
    if cfg.refine_plane {
        fit = refine_plane_ls(cloud, &fit, &cfg.plane_search)?;
    }
    RoadPlane::from_theta_d(fit.theta, fit.dist, *pose)
}

/// Boxes around the above-road part of a camera-frame cloud, in world coordinates.
pub fn fit_frame_boxes(
    cloud: &[Vec3],
    pose: &PoseSE3,
    plane: &RoadPlane,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Vec<OrientedBox> {
    let world: Vec<Vec3> = cloud.iter().map(|p| pose.transform_point(p)).collect();
    fit_obstacles_with(&world, plane, &cfg.obstacles, exec)
}

/// A plane and its boxes in world coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Priors<'a> {
    pub plane: &'a RoadPlane,
    pub boxes: &'a [OrientedBox],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataTerms {
    pub d1: UnaryField,
    pub d2: UnaryField,
    pub d3: UnaryField,
}

#[allow(clippy::too_many_arguments)]
pub fn data_terms(
    cam: &CameraModel,
    pose: &PoseSE3,
    probs: &ProbMap,
    current: Priors<'_>,
    previous: Option<Priors<'_>>,
    weights: &CrfWeights,
    exec: Execution,
) -> Result<DataTerms> {
    Error::check_dims(cam.dims(), probs.dims())?;
    let ind = indicator_map_with(cam, pose, current.plane, current.boxes, exec);
    let d1 = unary_from_indicator(&ind, weights.w1, weights.w2);
    let d2 = match previous {
        Some(p) => {
            let ind = indicator_map_with(cam, pose, p.plane, p.boxes, exec);
            unary_from_indicator(&ind, weights.w1, weights.w2)
        }
        None => UnaryField::zeros(cam.width, cam.height),
    };
    let d3 = unary_from_probmap(probs, weights.w3);
    Ok(DataTerms { d1, d2, d3 })
}

/// `{p : S_R(p) ≥ threshold}`.
pub fn bootstrap_mask(probs: &ProbMap, threshold: f64) -> LabelMask {
    LabelMask {
        width: probs.width,
        height: probs.height,
        labels: probs
            .s_road
            .iter()
            .map(|&s| if s as f64 >= threshold { Label::Road } else { Label::NotRoad })
            .collect(),
    }
}

/// Color-lines smoothness. Falls back to no smoothing when the bootstrap
/// mask is too small to fit a model.
pub fn pairwise_field(image: &RgbImage, probs: &ProbMap, cfg: &PipelineConfig, exec: Execution) -> Result<EdgeField> {
    Error::check_dims(image.dims(), probs.dims())?;
    let boot = bootstrap_mask(probs, cfg.bootstrap_threshold);
    match build_model(image, &boot, &cfg.color_lines) {
        Ok(model) => Ok(edge_capacities(&road_scores_with(image, &model, exec))),
        Err(Error::ModelUnderdetermined { found, required }) => {
            warn!("color model needs {required} bootstrap pixels, found {found}; segmenting without smoothness");
            Ok(EdgeField::zeros(image.width, image.height))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask: LabelMask,
    pub energy: f64,
    pub flow: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn segment_frame(
    frame_id: usize,
    cam: &CameraModel,
    pose: &PoseSE3,
    image: &RgbImage,
    probs: &ProbMap,
    current: Priors<'_>,
    previous: Option<Priors<'_>>,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<Segmentation> {
    Error::check_dims(cam.dims(), image.dims())?;
    let terms = data_terms(cam, pose, probs, current, previous, &cfg.weights, exec)?;
    let unary = accumulate_unaries(&[&terms.d1, &terms.d2, &terms.d3])?;
    let pairwise = pairwise_field(image, probs, cfg, exec)?;
    let sol = solve(&CostField::new(unary, pairwise)?)?;
    let gap = (sol.flow + sol.offset - sol.min_energy).abs();
    if gap > 1e-6 * sol.min_energy.abs().max(1.0) {
        return Err(Error::Invariant(format!(
            "frame {frame_id}: cut energy {} differs from flow + offset {}",
            sol.min_energy,
            sol.flow + sol.offset
        )));
    }
    info!("frame={frame_id} energy={} flow={}", sol.min_energy, sol.flow);
    Ok(Segmentation {
        mask: sol.mask,
        energy: sol.min_energy,
        flow: sol.flow,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub image: RgbImage,
    pub prob_map: ProbMap,
    /// Sparse cloud in this frame's camera coordinates.
    pub cloud: Vec<Vec3>,
    pub pose: PoseSE3,
    pub gt_mask: Option<LabelMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub index: usize,
    pub plane: RoadPlane,
    pub boxes: Vec<OrientedBox>,
    pub segmentation: Segmentation,
    pub free_space: FreeSpaceCloud,
    pub confusion: Option<ConfusionCounts>,
    pub metrics: Option<Metrics>,
}

pub fn run_pipeline(cam: &CameraModel, frames: &[FrameInput], cfg: &PipelineConfig) -> Result<Vec<FrameOutput>> {
    run_pipeline_with(cam, frames, cfg, Execution::default())
}

/// Frames run in order: each one's priors feed the next one's D2. Poses are
/// taken to share one world frame, so the previous priors transfer with the
/// identity.
pub fn run_pipeline_with(
    cam: &CameraModel,
    frames: &[FrameInput],
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<Vec<FrameOutput>> {
    cfg.validate()?;
    cam.validate()?;
    let mut outputs: Vec<FrameOutput> = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        let last = outputs.last();
        let plane = if k % cfg.refit_interval == 0 || last.is_none() {
            match (fit_frame_plane(&f.cloud, &f.pose, cfg, exec), last) {
                (Ok(p), _) => p,
                (Err(Error::NoPlaneFound { best, required }), Some(prev)) => {
                    warn!("frame {k}: no plane ({best} of {required} inliers), reusing the previous plane");
                    prev.plane
                }
                (Err(e), _) => return Err(e),
            }
        } else {
            last.map(|o| o.plane).expect("checked above")
        };
        let boxes = fit_frame_boxes(&f.cloud, &f.pose, &plane, cfg, exec);
        let moved = last.map(|o| transfer_priors(&o.plane, &o.boxes, &PoseSE3::identity()));
        let previous = moved.as_ref().map(|(p, b)| Priors { plane: p, boxes: b });
        let current = Priors {
            plane: &plane,
            boxes: &boxes,
        };
        let seg = segment_frame(k, cam, &f.pose, &f.image, &f.prob_map, current, previous, cfg, exec)?;
        let free_space = backproject_mask_with(&seg.mask, cam, &f.pose, &plane, &cfg.backproject, k, exec)?;
        let confusion = f.gt_mask.as_ref().map(|gt| compare_masks(&seg.mask, gt)).transpose()?;
        outputs.push(FrameOutput {
            index: k,
            plane,
            boxes,
            segmentation: seg,
            free_space,
            confusion,
            metrics: confusion.as_ref().map(metrics),
        });
    }
    Ok(outputs)
}

/// Two-channel map from per-class softmax rasters: the road class and the
/// largest of the rest.
pub fn ingest_softmax(class_maps: &[Vec<f32>], width: usize, height: usize, road_class: usize) -> Result<ProbMap> {
    if class_maps.len() < 2 {
        return Err(Error::domain(format!("need at least 2 classes, got {}", class_maps.len())));
    }
    if road_class >= class_maps.len() {
        return Err(Error::domain(format!(
            "road class {road_class} out of range for {} classes",
            class_maps.len()
        )));
    }
    for m in class_maps {
        Error::check_dims((width * height, 1), (m.len(), 1))?;
    }
    let n = width * height;
    let s_road = class_maps[road_class].clone();
    let s_nonroad_max = (0..n)
        .map(|i| {
            class_maps
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != road_class)
                .map(|(_, m)| m[i])
                .fold(f32::NEG_INFINITY, f32::max)
        })
        .collect();
    ProbMap::new(width, height, s_road, s_nonroad_max)
}
