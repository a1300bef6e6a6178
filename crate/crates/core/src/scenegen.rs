//! Synthetic scenes with known geometry: a road plane, box obstacles and a
//! camera trajectory, rendered into point clouds, ground-truth masks,
//! degraded probability maps and flat-shaded RGB frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geom3d::{first_hit, pixel_ray_unchecked, CameraModel, Hit, OrientedBox, PoseSE3, RoadPlane, Vec3};
use crate::priors::ProbMap;
use crate::raster::{Label, LabelMask, RgbImage};

/// Road samples cover this lateral half-width around the camera (m).
pub const ROAD_HALF_WIDTH: f64 = 10.0;
/// Road samples start this far ahead of the camera foot point (m).
pub const ROAD_NEAR: f64 = 2.0;
pub const ROAD_FAR: f64 = 40.0;
/// Outliers are drawn between these heights above the road (m).
pub const OUTLIER_HEIGHT: (f64, f64) = (-1.0, 4.0);

pub const ROAD_PROB: (f32, f32) = (0.9, 0.1);
pub const NONROAD_PROB: (f32, f32) = (0.1, 0.9);

pub const ROAD_RGB: [u8; 3] = [110, 110, 110];
pub const SKY_RGB: [u8; 3] = [135, 185, 235];
pub const BOX_RGB: [[u8; 3]; 4] = [[180, 30, 30], [30, 140, 50], [40, 50, 190], [210, 170, 20]];
pub const RGB_NOISE_SIGMA: f64 = 6.0;

pub const CAR_HALF_EXTENTS: [f64; 3] = [2.1, 0.85, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub theta: f64,
    pub d: f64,
}

/// Scene description. The plane is given in the world frame; boxes and
/// trajectory poses are world-frame too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub plane: PlaneSpec,
    pub boxes: Vec<OrientedBox>,
    pub camera: CameraModel,
    pub trajectory: Vec<PoseSE3>,
    /// Surface samples per square meter.
    pub cloud_density: f64,
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    pub label_flip_rate: f64,
    pub rng_seed: u64,
}

impl SceneSpec {
    /// Flat road at `θ = 0.03`, `d = 1.6`, two parked cars, a 640×480
    /// camera and five frames one meter apart along the road.
    pub fn acceptance() -> Self {
        let plane = PlaneSpec { theta: 0.03, d: 1.6 };
        let gt = RoadPlane::from_theta_d(plane.theta, plane.d, PoseSE3::identity()).expect("valid plane");
        let forward = road_forward(&gt, &PoseSE3::identity());
        SceneSpec {
            plane,
            boxes: vec![car_on_plane(&gt, 8.0, -2.5), car_on_plane(&gt, 15.0, 2.0)],
            camera: CameraModel::new(525.0, 525.0, 320.0, 240.0, 640, 480).expect("valid camera"),
            trajectory: (0..5)
                .map(|k| PoseSE3::from_translation(forward * k as f64))
                .collect(),
            cloud_density: 20.0,
            noise_sigma: 0.02,
            outlier_fraction: 0.0,
            label_flip_rate: 0.0,
            rng_seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gt_plane()?;
        self.camera.validate()?;
        for b in &self.boxes {
            b.validate()?;
        }
        if self.trajectory.is_empty() {
            return Err(Error::domain("trajectory must have at least one pose"));
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.cloud_density >= 0.0 && self.cloud_density.is_finite()) {
            return Err(Error::domain(format!("cloud_density {} must be non-negative", self.cloud_density)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::domain(format!("noise_sigma {} must be non-negative", self.noise_sigma)));
        }
        if !in_unit(self.outlier_fraction) || !in_unit(self.label_flip_rate) {
            return Err(Error::domain("outlier_fraction and label_flip_rate must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Ground-truth plane in world coordinates.
    pub fn gt_plane(&self) -> Result<RoadPlane> {
        RoadPlane::from_theta_d(self.plane.theta, self.plane.d, PoseSE3::identity())
    }
}

/// Unit vector along the road in the direction the camera looks.
pub fn road_forward(plane: &RoadPlane, pose: &PoseSE3) -> Vec3 {
    let z = pose.transform_vector(&Vec3::z());
    (z - plane.normal * plane.normal.dot(&z)).normalize()
}

/// Car-sized box resting on the plane, `ahead` meters along the road from the
/// point below the world origin and `lateral` meters to the side.
pub fn car_on_plane(plane: &RoadPlane, ahead: f64, lateral: f64) -> OrientedBox {
    let n = plane.normal;
    let f = road_forward(plane, &PoseSE3::identity());
    let side = n.cross(&f);
    let foot = -n * plane.signed_height(&Vec3::zeros());
    let h = Vec3::from(CAR_HALF_EXTENTS);
    OrientedBox {
        center: foot + f * ahead + side * lateral + n * h.z,
        axes: [f, side, n],
        half_extents: h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointSource {
    Road,
    Obstacle(usize),
    Outlier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub index: usize,
    pub pose: PoseSE3,
    /// Sparse cloud in this frame's camera coordinates.
    pub cloud: Vec<Vec3>,
    pub sources: Vec<PointSource>,
    pub gt_mask: LabelMask,
    pub prob_map: ProbMap,
    pub image: RgbImage,
}

impl FrameBundle {
    pub fn world_cloud(&self) -> Vec<Vec3> {
        self.cloud.iter().map(|p| self.pose.transform_point(p)).collect()
    }
}

pub fn gen_scene(spec: &SceneSpec) -> Result<Vec<FrameBundle>> {
    gen_scene_with(spec, Execution::default())
}

/// Frame `k` draws from its own stream seeded with `rng_seed ^ k`, so frames
/// are generated independently and in any order.
pub fn gen_scene_with(spec: &SceneSpec, exec: Execution) -> Result<Vec<FrameBundle>> {
    spec.validate()?;
    let plane = spec.gt_plane()?;
    Ok(exec.map_range(spec.trajectory.len(), |k| gen_frame(spec, &plane, k)))
}

fn gen_frame(spec: &SceneSpec, plane: &RoadPlane, k: usize) -> FrameBundle {
    let pose = spec.trajectory[k];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed ^ k as u64);
    let (world, sources) = sample_cloud(spec, plane, &pose, &mut rng);
    let inv = pose.inverse();
    let cloud = world.iter().map(|p| inv.transform_point(p)).collect();

    let hits = render_hits(&spec.camera, &pose, plane, &spec.boxes, Execution::Sequential);
    let labels: Vec<Label> = hits
        .iter()
        .map(|h| if h.is_plane() { Label::Road } else { Label::NotRoad })
        .collect();
    let (w, h) = spec.camera.dims();

    let (s_road, s_nonroad_max) = labels
        .iter()
        .map(|l| {
            let l = if rng.random_bool(spec.label_flip_rate) { l.flipped() } else { *l };
            if l.is_road() {
                ROAD_PROB
            } else {
                NONROAD_PROB
            }
        })
        .unzip();
    let prob_map = ProbMap {
        width: w,
        height: h,
        s_road,
        s_nonroad_max,
    };

    let noise = Normal::new(0.0, RGB_NOISE_SIGMA).expect("finite sigma");
    let pixels = hits
        .iter()
        .map(|hit| {
            let base = match hit {
                Hit::Plane(_) => ROAD_RGB,
                Hit::Box { index, .. } => BOX_RGB[index % BOX_RGB.len()],
                Hit::Miss => SKY_RGB,
            };
            base.map(|c| (c as f64 + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
        })
        .collect();

    FrameBundle {
        index: k,
        pose,
        cloud,
        sources,
        gt_mask: LabelMask {
            width: w,
            height: h,
            labels,
        },
        prob_map,
        image: RgbImage {
            width: w,
            height: h,
            pixels,
        },
    }
}

/// First surface hit by every pixel ray, row-major.
pub fn render_hits(
    cam: &CameraModel,
    pose: &PoseSE3,
    plane: &RoadPlane,
    boxes: &[OrientedBox],
    exec: Execution,
) -> Vec<Hit> {
    let (w, h) = cam.dims();
    let mut hits = vec![Hit::Miss; w * h];
    exec.fill_chunks(&mut hits, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = first_hit(&pixel_ray_unchecked(cam, pose, x as f64, y as f64), plane, boxes);
        }
    });
    hits
}

/// Ground-truth mask: road wherever the plane is the first surface hit.
pub fn render_gt_mask(cam: &CameraModel, pose: &PoseSE3, plane: &RoadPlane, boxes: &[OrientedBox]) -> LabelMask {
    let (w, h) = cam.dims();
    LabelMask {
        width: w,
        height: h,
        labels: render_hits(cam, pose, plane, boxes, Execution::default())
            .iter()
            .map(|h| if h.is_plane() { Label::Road } else { Label::NotRoad })
            .collect(),
    }
}

fn sample_cloud(
    spec: &SceneSpec,
    plane: &RoadPlane,
    pose: &PoseSE3,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec3>, Vec<PointSource>) {
    let n = plane.normal;
    let f = road_forward(plane, pose);
    let side = n.cross(&f);
    let c = pose.center();
    let foot = c - n * plane.signed_height(&c);
    let on_road = |rng: &mut ChaCha8Rng| {
        foot + f * rng.random_range(ROAD_NEAR..ROAD_FAR) + side * rng.random_range(-ROAD_HALF_WIDTH..ROAD_HALF_WIDTH)
    };

    let mut points = Vec::new();
    let mut sources = Vec::new();
    let area = 2.0 * ROAD_HALF_WIDTH * (ROAD_FAR - ROAD_NEAR);
    let nominal_road = (spec.cloud_density * area).round() as usize;
    if spec.outlier_fraction < 1.0 {
        for _ in 0..nominal_road {
            let p = on_road(rng);
            // road under a box is not observable
            if spec.boxes.iter().any(|b| b.contains(&p, 1e-6)) {
                continue;
            }
            points.push(p);
            sources.push(PointSource::Road);
        }
        for (i, b) in spec.boxes.iter().enumerate() {
            for p in sample_box_surface(b, &n, spec.cloud_density, rng) {
                points.push(p);
                sources.push(PointSource::Obstacle(i));
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).expect("finite sigma");
        for p in &mut points {
            *p += Vec3::from_fn(|_, _| noise.sample(rng));
        }
    }
    let n_out = if spec.outlier_fraction >= 1.0 {
        nominal_road
    } else {
        (points.len() as f64 * spec.outlier_fraction / (1.0 - spec.outlier_fraction)).round() as usize
    };
    for _ in 0..n_out {
        let p = on_road(rng) + n * rng.random_range(OUTLIER_HEIGHT.0..OUTLIER_HEIGHT.1);
        points.push(p);
        sources.push(PointSource::Outlier);
    }
    (points, sources)
}

/// Uniform samples on every face except the one resting on the road.
fn sample_box_surface(b: &OrientedBox, up: &Vec3, density: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let h = b.half_extents;
    let mut out = Vec::new();
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let area = 4.0 * h[j] * h[k];
        let count = (density * area).round() as usize;
        for sign in [-1.0, 1.0] {
            if (b.axes[i] * sign).dot(up) < -0.5 {
                continue;
            }
            for _ in 0..count {
                let u: f64 = rng.random_range(-1.0..=1.0);
                let v: f64 = rng.random_range(-1.0..=1.0);
                out.push(b.center + b.axes[i] * (sign * h[i]) + b.axes[j] * (u * h[j]) + b.axes[k] * (v * h[k]));
            }
        }
    }
    out
}
