//! Geometric primitives: pinhole camera, rigid poses, the parametric road
//! plane, oriented obstacle boxes and the ray queries used to cast pixels
//! into the scene.
//!
//! Camera frame: x right, y up, z forward along the principal axis. Image
//! rows grow downward, so a camera-frame direction `(x, y, z)` lands on pixel
//! `(cx + fx·x/z, cy − fy·y/z)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rays whose direction is this close to parallel with the plane never hit it.
pub const PARALLEL_EPS: f64 = 1e-12;

const ORTHO_TOL: f64 = 1e-9;

/// Pinhole intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid camera model {self:?}")))
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Unnormalized camera-frame direction through pixel `(u, v)`.
    pub fn back_project(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, -(v - self.cy) / self.fy, 1.0)
    }

    /// Pixel coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.cx + self.fx * p.x / p.z, self.cy - self.fy * p.y / p.z))
    }
}

/// Rigid world-from-camera transform: `X_world = R·X_cam + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let pose = PoseSE3 {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        PoseSE3 {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        PoseSE3 {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` radians about the unit `axis` (Rodrigues), then translation.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        PoseSE3 {
            rotation: *rot.matrix(),
            translation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Mat3::identity()).abs().max();
        let det = r.determinant();
        let finite = r.iter().chain(self.translation.iter()).all(|v| v.is_finite());
        if finite && ortho <= ORTHO_TOL && (det - 1.0).abs() <= ORTHO_TOL {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "pose rotation is not in SO(3) (|RᵀR − I| = {ortho:e}, det = {det})"
            )))
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Camera center in the world frame.
    pub fn center(&self) -> Vec3 {
        self.translation
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl Serialize for PoseSE3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = &self.rotation;
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = r[(i, j)];
            }
        }
        PoseRepr {
            rotation,
            translation: self.translation.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseSE3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        let pose = PoseSE3 {
            rotation: Mat3::from_row_slice(&repr.rotation),
            translation: Vec3::from(repr.translation),
        };
        pose.validate().map_err(serde::de::Error::custom)?;
        Ok(pose)
    }
}

/// Road plane `z·sin θ − y·cos θ = d·cos θ` in the keyframe camera frame,
/// together with its world-frame normal form `n·X = c`.
///
/// The normal points toward the camera side, so `n·X − c` is the signed
/// height of `X` above the road.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadPlane {
    pub theta: f64,
    pub dist: f64,
    pub keyframe_pose: PoseSE3,
    pub normal: Vec3,
    pub offset: f64,
}

impl RoadPlane {
    pub fn from_theta_d(theta: f64, dist: f64, keyframe_pose: PoseSE3) -> Result<Self> {
        if !theta.is_finite() || !dist.is_finite() {
            return Err(Error::domain("plane parameters must be finite"));
        }
        if theta.abs() >= std::f64::consts::FRAC_PI_2 || theta.cos() <= 0.0 {
            return Err(Error::domain(format!(
                "plane angle {theta} rad is degenerate (cos θ ≤ 0)"
            )));
        }
        if dist <= 0.0 {
            return Err(Error::domain(format!("plane distance {dist} must be positive")));
        }
        let (s, c) = theta.sin_cos();
        // Camera frame: (0, c, −s)·X = −d·c, camera origin on the positive side.
        let normal_cam = Vec3::new(0.0, c, -s);
        let offset_cam = -dist * c;
        let normal = keyframe_pose.transform_vector(&normal_cam);
        let offset = offset_cam + normal.dot(&keyframe_pose.translation);
        Ok(RoadPlane {
            theta,
            dist,
            keyframe_pose,
            normal,
            offset,
        })
    }

    /// Signed height of a world point above the plane.
    pub fn signed_height(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Algebraic residual `z·sin θ − y·cos θ − d·cos θ` of a keyframe camera-frame point.
    pub fn camera_residual(&self, p_cam: &Vec3) -> f64 {
        plane_residual(self.theta, self.dist, p_cam)
    }

    /// Rigidly move the plane: `relative` maps the old world frame into the new one.
    pub fn transformed(&self, relative: &PoseSE3) -> RoadPlane {
        let normal = relative.transform_vector(&self.normal);
        RoadPlane {
            theta: self.theta,
            dist: self.dist,
            keyframe_pose: relative.compose(&self.keyframe_pose),
            normal,
            offset: self.offset + normal.dot(&relative.translation),
        }
    }
}

/// Residual of the parametric plane equation for a camera-frame point.
#[inline]
pub fn plane_residual(theta: f64, dist: f64, p: &Vec3) -> f64 {
    let (s, c) = theta.sin_cos();
    p.z * s - p.y * c - dist * c
}

/// Box with orthonormal axes `[u1, u2, n]` and half extents along each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    pub axes: [Vec3; 3],
    pub half_extents: Vec3,
}

impl OrientedBox {
    pub fn new(center: Vec3, axes: [Vec3; 3], half_extents: Vec3) -> Result<Self> {
        let b = OrientedBox {
            center,
            axes,
            half_extents,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn axis_aligned(center: Vec3, half_extents: Vec3) -> Self {
        OrientedBox {
            center,
            axes: [Vec3::x(), Vec3::y(), Vec3::z()],
            half_extents,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.axes;
        let unit = a.iter().all(|v| (v.norm() - 1.0).abs() <= ORTHO_TOL);
        let ortho = a[0].dot(&a[1]).abs() <= ORTHO_TOL
            && a[0].dot(&a[2]).abs() <= ORTHO_TOL
            && a[1].dot(&a[2]).abs() <= ORTHO_TOL;
        let pos = self.half_extents.iter().all(|h| *h > 0.0 && h.is_finite());
        if unit && ortho && pos && self.center.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid oriented box {self:?}")))
        }
    }

    /// Coordinates of a world point in the box frame (relative to the center).
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let d = p - self.center;
        Vec3::new(self.axes[0].dot(&d), self.axes[1].dot(&d), self.axes[2].dot(&d))
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= self.half_extents[i] + tol)
    }

    pub fn transformed(&self, pose: &PoseSE3) -> OrientedBox {
        OrientedBox {
            center: pose.transform_point(&self.center),
            axes: self.axes.map(|a| pose.transform_vector(&a)),
            half_extents: self.half_extents,
        }
    }

    /// The eight corners in world coordinates.
    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.center
                + self.axes[0] * (sx * self.half_extents[0])
                + self.axes[1] * (sy * self.half_extents[1])
                + self.axes[2] * (sz * self.half_extents[2]);
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    center: [f64; 3],
    axes: [[f64; 3]; 3],
    half_extents: [f64; 3],
}

impl Serialize for OrientedBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BoxRepr {
            center: self.center.into(),
            axes: self.axes.map(Into::into),
            half_extents: self.half_extents.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OrientedBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = BoxRepr::deserialize(d)?;
        OrientedBox::new(
            r.center.into(),
            r.axes.map(Vec3::from),
            r.half_extents.into(),
        )
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; fails on a zero or non-finite direction.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::domain("ray direction must be non-zero and finite"));
        }
        Ok(Ray {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// World-frame viewing ray through pixel `(u, v)`.
pub fn pixel_ray(cam: &CameraModel, pose: &PoseSE3, u: f64, v: f64) -> Result<Ray> {
    if !(u >= 0.0 && v >= 0.0 && u < cam.width as f64 && v < cam.height as f64) {
        return Err(Error::domain(format!(
            "pixel ({u}, {v}) outside {}x{} image",
            cam.width, cam.height
        )));
    }
    Ok(pixel_ray_unchecked(cam, pose, u, v))
}

#[inline]
pub(crate) fn pixel_ray_unchecked(cam: &CameraModel, pose: &PoseSE3, u: f64, v: f64) -> Ray {
    let d = pose.transform_vector(&cam.back_project(u, v));
    Ray {
        origin: pose.center(),
        direction: d / d.norm(),
    }
}

/// Forward intersection with the plane: `(t, point)` for the unique `t > 0`.
pub fn ray_plane_intersect(ray: &Ray, plane: &RoadPlane) -> Option<(f64, Vec3)> {
    let denom = plane.normal.dot(&ray.direction);
    if denom.abs() < PARALLEL_EPS {
        return None;
    }
    let t = (plane.offset - plane.normal.dot(&ray.origin)) / denom;
    if t > 0.0 && t.is_finite() {
        Some((t, ray.at(t)))
    } else {
        None
    }
}

/// Slab test in the box frame. Returns the entry distance, or the exit
/// distance for rays that start inside the box.
pub fn ray_box_intersect(ray: &Ray, b: &OrientedBox) -> Option<f64> {
    let o = b.to_local(&ray.origin);
    let d = Vec3::new(
        b.axes[0].dot(&ray.direction),
        b.axes[1].dot(&ray.direction),
        b.axes[2].dot(&ray.direction),
    );
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        let h = b.half_extents[i];
        if d[i].abs() < PARALLEL_EPS {
            if o[i].abs() > h {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let (t0, t1) = {
            let a = (-h - o[i]) * inv;
            let c = (h - o[i]) * inv;
            if a <= c {
                (a, c)
            } else {
                (c, a)
            }
        };
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_far <= 0.0 {
        None
    } else if t_near > 0.0 {
        Some(t_near)
    } else {
        Some(t_far)
    }
}

/// What a viewing ray hits first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hit {
    Plane(f64),
    Box { t: f64, index: usize },
    Miss,
}

impl Hit {
    pub fn is_plane(&self) -> bool {
        matches!(self, Hit::Plane(_))
    }
}

/// Nearest forward hit among the plane and the boxes. Plane/box ties go to the box.
pub fn first_hit(ray: &Ray, plane: &RoadPlane, boxes: &[OrientedBox]) -> Hit {
    let mut best_box: Option<(f64, usize)> = None;
    for (i, b) in boxes.iter().enumerate() {
        if let Some(t) = ray_box_intersect(ray, b) {
            if best_box.is_none_or(|(bt, _)| t < bt) {
                best_box = Some((t, i));
            }
        }
    }
    let plane_t = ray_plane_intersect(ray, plane).map(|(t, _)| t);
    match (plane_t, best_box) {
        (Some(tp), Some((tb, _))) if tp < tb => Hit::Plane(tp),
        (Some(tp), None) => Hit::Plane(tp),
        (_, Some((t, index))) => Hit::Box { t, index },
        (None, None) => Hit::Miss,
    }
}

/// Any unit vector orthogonal to `n`, plus a second completing a right-handed basis.
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let e1 = helper.cross(n).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}
