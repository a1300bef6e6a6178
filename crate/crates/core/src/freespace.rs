//! Road pixels back-projected onto the road plane, and mask overlays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geom3d::{pixel_ray_unchecked, ray_plane_intersect, CameraModel, PoseSE3, RoadPlane, Vec3};
use crate::raster::{LabelMask, RgbImage};

pub const DEFAULT_T_MAX: f64 = 60.0;
pub const DEFAULT_STRIDE: usize = 2;
pub const DEFAULT_TINT: [u8; 3] = [255, 0, 255];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FreeSpaceCloud {
    pub points: Vec<Vec3>,
    pub frame_id: usize,
}

impl FreeSpaceCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackprojectParams {
    pub stride: usize,
    pub t_max: f64,
}

impl Default for BackprojectParams {
    fn default() -> Self {
        BackprojectParams {
            stride: DEFAULT_STRIDE,
            t_max: DEFAULT_T_MAX,
        }
    }
}

impl BackprojectParams {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::domain("stride must be at least 1"));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::domain(format!("t_max must be positive, got {}", self.t_max)));
        }
        Ok(())
    }
}

/// Source pixel `(x, y)` of each road pixel that is sampled: every
/// `stride²`-th road pixel in row-major order, starting with the first.
pub fn sampled_road_pixels(mask: &LabelMask, stride: usize) -> Vec<(usize, usize)> {
    let step = stride.max(1).pow(2);
    mask.labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_road())
        .step_by(step)
        .map(|(i, _)| (i % mask.width, i / mask.width))
        .collect()
}

pub fn backproject_mask(
    mask: &LabelMask,
    cam: &CameraModel,
    pose: &PoseSE3,
    plane: &RoadPlane,
    params: &BackprojectParams,
    frame_id: usize,
) -> Result<FreeSpaceCloud> {
    backproject_mask_with(mask, cam, pose, plane, params, frame_id, Execution::default())
}

pub fn backproject_mask_with(
    mask: &LabelMask,
    cam: &CameraModel,
    pose: &PoseSE3,
    plane: &RoadPlane,
    params: &BackprojectParams,
    frame_id: usize,
    exec: Execution,
) -> Result<FreeSpaceCloud> {
    params.validate()?;
    Error::check_dims(cam.dims(), mask.dims())?;
    let pixels = sampled_road_pixels(mask, params.stride);
    let hits = exec.map_range(pixels.len(), |i| {
        let (x, y) = pixels[i];
        let ray = pixel_ray_unchecked(cam, pose, x as f64, y as f64);
        ray_plane_intersect(&ray, plane)
            .filter(|(t, _)| *t <= params.t_max)
            .map(|(_, p)| p)
    });
    Ok(FreeSpaceCloud {
        points: hits.into_iter().flatten().collect(),
        frame_id,
    })
}

/// Road pixels blended half-and-half with `tint`, rounding down.
pub fn export_overlay(image: &RgbImage, mask: &LabelMask, tint: [u8; 3]) -> Result<RgbImage> {
    Error::check_dims(image.dims(), mask.dims())?;
    let pixels = image
        .pixels
        .iter()
        .zip(&mask.labels)
        .map(|(px, l)| {
            if l.is_road() {
                std::array::from_fn(|c| ((px[c] as u16 + tint[c] as u16) / 2) as u8)
            } else {
                *px
            }
        })
        .collect();
    Ok(RgbImage {
        width: image.width,
        height: image.height,
        pixels,
    })
}
