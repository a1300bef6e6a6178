//! Per-pixel data costs.
//!
//! 3D priors become a binary indicator by casting every pixel into the scene:
//! `I(p) = 1` when the viewing ray reaches the road plane before any box.
//! The indicator turns into a unary field with one weight for "called road
//! but the ray missed the road" and another for "called not-road but the ray
//! hit it". Segmentation probabilities give a third field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geom3d::{first_hit, pixel_ray_unchecked, CameraModel, OrientedBox, PoseSE3, RoadPlane};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorMap {
    pub width: usize,
    pub height: usize,
    /// 1 where the ray hits the road plane first, 0 otherwise.
    pub values: Vec<u8>,
}

impl IndicatorMap {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }
}

/// Two-channel road probability map: `S_R(p)` and the largest non-road class
/// probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    pub width: usize,
    pub height: usize,
    pub s_road: Vec<f32>,
    pub s_nonroad_max: Vec<f32>,
}

impl ProbMap {
    pub fn new(width: usize, height: usize, s_road: Vec<f32>, s_nonroad_max: Vec<f32>) -> Result<Self> {
        let n = width * height;
        Error::check_dims((n, n), (s_road.len(), s_nonroad_max.len()))?;
        let bad = s_road
            .iter()
            .chain(&s_nonroad_max)
            .position(|v| !(0.0..=1.0).contains(v));
        if let Some(i) = bad {
            return Err(Error::domain(format!("probability at element {i} outside [0, 1]")));
        }
        Ok(ProbMap {
            width,
            height,
            s_road,
            s_nonroad_max,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfWeights {
    /// Cost of labeling road where the ray misses the plane.
    pub w1: f64,
    /// Cost of labeling not-road where the ray hits the plane first.
    pub w2: f64,
    /// Weight on the segmentation probabilities.
    pub w3: f64,
}

impl Default for CrfWeights {
    fn default() -> Self {
        CrfWeights {
            w1: 0.9,
            w2: 0.9,
            w3: 1.0,
        }
    }
}

impl CrfWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w1, self.w2, self.w3].iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::domain(format!("CRF weights must be non-negative: {self:?}")))
        }
    }
}

/// Per-pixel cost of each label.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    pub width: usize,
    pub height: usize,
    pub cost_road: Vec<f64>,
    pub cost_nonroad: Vec<f64>,
}

impl UnaryField {
    pub fn zeros(width: usize, height: usize) -> Self {
        UnaryField {
            width,
            height,
            cost_road: vec![0.0; width * height],
            cost_nonroad: vec![0.0; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.cost_road.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost_road.is_empty()
    }
}

pub fn indicator_map(cam: &CameraModel, pose: &PoseSE3, plane: &RoadPlane, boxes: &[OrientedBox]) -> IndicatorMap {
    indicator_map_with(cam, pose, plane, boxes, Execution::default())
}

pub fn indicator_map_with(
    cam: &CameraModel,
    pose: &PoseSE3,
    plane: &RoadPlane,
    boxes: &[OrientedBox],
    exec: Execution,
) -> IndicatorMap {
    let (w, h) = cam.dims();
    let mut values = vec![0u8; w * h];
    exec.fill_chunks(&mut values, w, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            let ray = pixel_ray_unchecked(cam, pose, x as f64, y as f64);
            *v = first_hit(&ray, plane, boxes).is_plane() as u8;
        }
    });
    IndicatorMap {
        width: w,
        height: h,
        values,
    }
}

/// Move previous-frame priors into the current frame's world coordinates.
pub fn transfer_priors(
    plane: &RoadPlane,
    boxes: &[OrientedBox],
    relative_pose: &PoseSE3,
) -> (RoadPlane, Vec<OrientedBox>) {
    (
        plane.transformed(relative_pose),
        boxes.iter().map(|b| b.transformed(relative_pose)).collect(),
    )
}

pub fn unary_from_indicator(ind: &IndicatorMap, w_road_miss: f64, w_plane_hit: f64) -> UnaryField {
    let (cost_road, cost_nonroad) = ind
        .values
        .iter()
        .map(|&i| {
            let i = i as f64;
            (w_road_miss * (1.0 - i), w_plane_hit * i)
        })
        .unzip();
    UnaryField {
        width: ind.width,
        height: ind.height,
        cost_road,
        cost_nonroad,
    }
}

pub fn unary_from_probmap(probs: &ProbMap, w3: f64) -> UnaryField {
    UnaryField {
        width: probs.width,
        height: probs.height,
        cost_road: probs.s_nonroad_max.iter().map(|&s| w3 * s as f64).collect(),
        cost_nonroad: probs.s_road.iter().map(|&s| w3 * s as f64).collect(),
    }
}

/// Per-pixel, per-label sum.
pub fn accumulate_unaries(fields: &[&UnaryField]) -> Result<UnaryField> {
    let first = fields
        .first()
        .ok_or_else(|| Error::domain("no unary fields to accumulate"))?;
    let mut out = UnaryField::zeros(first.width, first.height);
    for f in fields {
        Error::check_dims(out.dims(), f.dims())?;
        for (o, v) in out.cost_road.iter_mut().zip(&f.cost_road) {
            *o += v;
        }
        for (o, v) in out.cost_nonroad.iter_mut().zip(&f.cost_nonroad) {
            *o += v;
        }
    }
    Ok(out)
}
