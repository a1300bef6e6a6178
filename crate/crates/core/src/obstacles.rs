//! Obstacle priors: points above the road are clustered with K-means and each
//! cluster is wrapped in a box aligned with its in-plane principal axes and
//! the road normal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::geom3d::{tangent_basis, OrientedBox, RoadPlane, Vec3};

/// Half-extent floor so degenerate clusters still yield a valid box.
pub const MIN_HALF_EXTENT: f64 = 1e-3;

pub const DEFAULT_H_MIN: f64 = 0.15;
pub const DEFAULT_H_MAX: f64 = 3.5;
pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    /// Indices into the clustered point list, one list per non-empty cluster.
    pub clusters: Vec<Vec<usize>>,
    pub centroids: Vec<Vec3>,
    /// Sum of squared distances to the assigned centroid, after each Lloyd iteration.
    pub inertia: Vec<f64>,
}

impl ClusterSet {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }
}

/// `max(4, ⌈n/150⌉)` capped at 32.
pub fn default_k(n_points: usize) -> usize {
    n_points.div_ceil(150).clamp(4, 32)
}

/// Indices with `h_min < height ≤ h_max` above the plane.
pub fn points_above_plane(points: &[Vec3], plane: &RoadPlane, h_min: f64, h_max: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let h = plane.signed_height(p);
            h > h_min && h <= h_max
        })
        .map(|(i, _)| i)
        .collect()
}

fn nearest(p: &Vec3, centroids: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_pp_seed(points: &[Vec3], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| (p - centroids[0]).norm_squared())
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding leaving us on a zero-weight tail point
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|w| *w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // Every point coincides with a centroid; duplicates end up empty and are dropped.
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min((p - c).norm_squared());
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeding. Empty clusters are dropped, so
/// the returned set may hold fewer than `k` clusters.
pub fn kmeans(points: &[Vec3], k: usize, seed: u64, max_iters: usize) -> ClusterSet {
    if points.is_empty() || k == 0 {
        return ClusterSet {
            clusters: Vec::new(),
            centroids: Vec::new(),
            inertia: Vec::new(),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_seed(points, k, &mut rng);
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut inertia = Vec::new();

    for _ in 0..max_iters.max(1) {
        // update
        let mut sums = vec![Vec3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            sums[a] += p;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j] / counts[j] as f64;
            }
        }
        // assign
        let mut changed = false;
        let mut total = 0.0;
        for (p, a) in points.iter().zip(assign.iter_mut()) {
            let (j, d) = nearest(p, &centroids);
            total += d;
            if j != *a {
                *a = j;
                changed = true;
            }
        }
        inertia.push(total);
        if !changed {
            break;
        }
    }

    let mut clusters = vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        clusters[a].push(i);
    }
    let (clusters, centroids): (Vec<_>, Vec<_>) = clusters
        .into_iter()
        .zip(centroids)
        .filter(|(c, _)| !c.is_empty())
        .map(|(c, _)| {
            let mean = c.iter().map(|&i| points[i]).sum::<Vec3>() / c.len() as f64;
            (c, mean)
        })
        .unzip();
    ClusterSet {
        clusters,
        centroids,
        inertia,
    }
}

/// Box around `points` with `u1, u2` the principal axes of the points'
/// projection onto the road plane (descending variance) and `n` the road normal.
pub fn fit_box(points: &[Vec3], plane: &RoadPlane) -> Option<OrientedBox> {
    if points.is_empty() {
        return None;
    }
    let n = plane.normal;
    let (e1, e2) = tangent_basis(&n);
    let count = points.len() as f64;
    let mean = points.iter().sum::<Vec3>() / count;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        let (a, b) = (d.dot(&e1), d.dot(&e2));
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    // closed-form major axis of [[saa, sab], [sab, sbb]]
    let phi = 0.5 * (2.0 * sab).atan2(saa - sbb);
    let u1 = (e1 * phi.cos() + e2 * phi.sin()).normalize();
    let u2 = n.cross(&u1).normalize();
    let axes = [u1, u2, n];

    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        for (i, ax) in axes.iter().enumerate() {
            let s = ax.dot(p);
            lo[i] = lo[i].min(s);
            hi[i] = hi[i].max(s);
        }
    }
    let mid = (lo + hi) * 0.5;
    let center = axes[0] * mid[0] + axes[1] * mid[1] + axes[2] * mid[2];
    // Half-span plus a few ulps of the coordinate magnitude so the extreme
    // points stay inside after the center round trip.
    let half = Vec3::from_fn(|i, _| {
        let slack = 8.0 * f64::EPSILON * (lo[i].abs().max(hi[i].abs()) + 1.0);
        ((hi[i] - lo[i]) * 0.5 + slack).max(MIN_HALF_EXTENT)
    });
    Some(OrientedBox {
        center,
        axes,
        half_extents: half,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObstacleParams {
    /// `None` picks [`default_k`] from the above-plane point count.
    pub k: Option<usize>,
    pub seed: u64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_iters: usize,
}

impl Default for ObstacleParams {
    fn default() -> Self {
        ObstacleParams {
            k: None,
            seed: 0,
            h_min: DEFAULT_H_MIN,
            h_max: DEFAULT_H_MAX,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

/// Height filter, K-means, then one box per cluster.
pub fn fit_obstacles(points: &[Vec3], plane: &RoadPlane, params: &ObstacleParams) -> Vec<OrientedBox> {
    fit_obstacles_with(points, plane, params, Execution::default())
}

pub fn fit_obstacles_with(
    points: &[Vec3],
    plane: &RoadPlane,
    params: &ObstacleParams,
    exec: Execution,
) -> Vec<OrientedBox> {
    let above = points_above_plane(points, plane, params.h_min, params.h_max);
    if above.is_empty() {
        return Vec::new();
    }
    let sub: Vec<Vec3> = above.iter().map(|&i| points[i]).collect();
    let k = params.k.unwrap_or_else(|| default_k(sub.len()));
    let clusters = kmeans(&sub, k, params.seed, params.max_iters);
    exec.map_range(clusters.k(), |c| {
        let pts: Vec<Vec3> = clusters.clusters[c].iter().map(|&i| sub[i]).collect();
        fit_box(&pts, plane).expect("clusters are non-empty")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3d::PoseSE3;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal};

    fn flat() -> RoadPlane {
        RoadPlane::from_theta_d(0.0, 1.5, PoseSE3::identity()).unwrap()
    }

    #[test]
    fn height_filter() {
        let plane = flat();
        let on: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, -1.5, 3.0)).collect();
        assert!(points_above_plane(&on, &plane, 0.1, 3.0).is_empty());
        let p = vec![Vec3::new(0.0, -1.0, 4.0)];
        assert_eq!(points_above_plane(&p, &plane, 0.1, 3.0), vec![0]);
    }

    #[test]
    fn height_filter_matches_brute_force() {
        let plane = RoadPlane::from_theta_d(0.07, 1.4, PoseSE3::from_axis_angle(Vec3::x(), 0.2, Vec3::new(1.0, 2.0, 3.0))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-5.0..5.0), rng.random_range(-10.0..10.0)))
            .collect();
        let got = points_above_plane(&pts, &plane, 0.15, 3.5);
        // oracle: height = −(camera-frame residual), since the normal is unit length
        let inv = plane.keyframe_pose.inverse();
        for (i, p) in pts.iter().enumerate() {
            let h = -plane.camera_residual(&inv.transform_point(p));
            if (h - 0.15).abs() < 1e-9 || (h - 3.5).abs() < 1e-9 {
                continue;
            }
            assert_eq!(got.contains(&i), h > 0.15 && h <= 3.5, "point {i} height {h}");
        }
        assert!(!got.is_empty());
    }

    #[test]
    fn k1_centroid_is_mean() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, 3.0, 0.0)];
        let cs = kmeans(&pts, 1, 0, 10);
        assert_eq!(cs.k(), 1);
        assert_relative_eq!(cs.centroids[0], Vec3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn separated_blobs_are_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = Normal::new(0.0, 0.5).unwrap();
        let mut pts = Vec::new();
        for center in [Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)] {
            for _ in 0..200 {
                pts.push(center + Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)));
            }
        }
        let cs = kmeans(&pts, 2, 5, 50);
        assert_eq!(cs.k(), 2);
        for c in &cs.clusters {
            let first_blob = c[0] < 200;
            assert!(c.iter().all(|&i| (i < 200) == first_blob));
            assert_eq!(c.len(), 200);
        }
    }

    #[test]
    fn more_clusters_than_distinct_points() {
        let pts = vec![Vec3::x(), Vec3::x(), Vec3::y(), Vec3::y(), Vec3::z()];
        let cs = kmeans(&pts, 10, 3, 20);
        assert!(cs.k() <= 3);
        assert!(cs.clusters.iter().all(|c| !c.is_empty()));
        let mut all: Vec<usize> = cs.clusters.concat();
        all.sort();
        assert_eq!(all, (0..5).collect::<Vec<_>>());
    }

    #[test]
    fn inertia_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<Vec3> = (0..600)
            .map(|_| Vec3::new(rng.random_range(0.0..20.0), rng.random_range(0.0..2.0), rng.random_range(0.0..20.0)))
            .collect();
        for seed in 0..5 {
            let cs = kmeans(&pts, 12, seed, 100);
            for w in cs.inertia.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0]);
            }
        }
    }

    fn cuboid_grid(center: Vec3, axes: [Vec3; 3], half: Vec3, step: f64) -> Vec<Vec3> {
        let mut out = Vec::new();
        let n = |h: f64| (2.0 * h / step).round() as i32;
        for i in 0..=n(half.x) {
            for j in 0..=n(half.y) {
                for k in 0..=n(half.z) {
                    let l = Vec3::new(-half.x + i as f64 * step, -half.y + j as f64 * step, -half.z + k as f64 * step);
                    out.push(center + axes[0] * l.x + axes[1] * l.y + axes[2] * l.z);
                }
            }
        }
        out
    }

    #[test]
    fn axis_aligned_cuboid_recovered() {
        let plane = flat();
        // long axis along z, width along x, height along y (plane normal)
        let axes = [Vec3::z(), Vec3::x(), Vec3::y()];
        let half = Vec3::new(2.0, 0.8, 0.7);
        let pts = cuboid_grid(Vec3::new(1.0, -0.8, 10.0), axes, half, 0.1);
        let b = fit_box(&pts, &plane).unwrap();
        assert!(b.axes[0].dot(&Vec3::z()).abs() > 1.0 - 1e-6);
        assert!(b.axes[1].dot(&Vec3::x()).abs() > 1.0 - 1e-6);
        assert_relative_eq!(b.axes[2], Vec3::y(), epsilon = 1e-12);
        for i in 0..3 {
            assert!((b.half_extents[i] - half[i]).abs() <= 0.1);
        }
        assert!(pts.iter().all(|p| b.contains(p, 1e-9)));
        b.validate().unwrap();
    }

    #[test]
    fn single_point_gets_floor_extents() {
        let b = fit_box(&[Vec3::new(1.0, 2.0, 3.0)], &flat()).unwrap();
        assert_eq!(b.half_extents, Vec3::repeat(MIN_HALF_EXTENT));
        assert_relative_eq!(b.center, Vec3::new(1.0, 2.0, 3.0), epsilon = 1e-12);
    }

    #[test]
    fn rotated_cuboid_long_axis() {
        let plane = flat();
        let rot = PoseSE3::from_axis_angle(Vec3::y(), 30f64.to_radians(), Vec3::zeros());
        let long = rot.transform_vector(&Vec3::z());
        let axes = [long, rot.transform_vector(&Vec3::x()), Vec3::y()];
        let pts = cuboid_grid(Vec3::new(0.0, -0.7, 12.0), axes, Vec3::new(2.1, 0.85, 0.75), 0.05);
        let b = fit_box(&pts, &plane).unwrap();
        let ang = b.axes[0].dot(&long).abs().min(1.0).acos();
        assert!(ang < 1e-3, "angle error {ang}");
    }

    #[test]
    fn rotation_about_normal_is_equivariant() {
        let plane = flat();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pts: Vec<Vec3> = (0..300)
            .map(|_| Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.5..0.0), rng.random_range(5.0..6.0)))
            .collect();
        let b0 = fit_box(&pts, &plane).unwrap();
        // rotate about the plane normal through a point on the plane
        let rot = PoseSE3::from_axis_angle(Vec3::y(), 0.7, Vec3::zeros());
        let rpts: Vec<Vec3> = pts.iter().map(|p| rot.transform_point(p)).collect();
        let b1 = fit_box(&rpts, &plane).unwrap();
        for i in 0..2 {
            let expect = rot.transform_vector(&b0.axes[i]);
            assert!(b1.axes[i].dot(&expect).abs() > 1.0 - 1e-6);
        }
        for i in 0..3 {
            assert!((b1.half_extents[i] - b0.half_extents[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_scene_has_no_obstacles() {
        let pts: Vec<Vec3> = (0..100).map(|i| Vec3::new(i as f64 * 0.1, -1.5, 5.0)).collect();
        assert!(fit_obstacles(&pts, &flat(), &ObstacleParams::default()).is_empty());
    }

    #[test]
    fn over_clustered_car_is_still_covered() {
        let plane = flat();
        let pts = cuboid_grid(Vec3::new(0.0, -0.75, 10.0), [Vec3::z(), Vec3::x(), Vec3::y()], Vec3::new(2.1, 0.85, 0.75), 0.1);
        let params = ObstacleParams {
            k: Some(2),
            seed: 9,
            ..Default::default()
        };
        let boxes = fit_obstacles(&pts, &plane, &params);
        assert_eq!(boxes.len(), 2);
        let above = points_above_plane(&pts, &plane, params.h_min, params.h_max);
        assert!(above.iter().all(|&i| boxes.iter().any(|b| b.contains(&pts[i], 1e-9))));
    }

    #[test]
    fn default_k_rule() {
        assert_eq!(default_k(0), 4);
        assert_eq!(default_k(600), 4);
        assert_eq!(default_k(601), 5);
        assert_eq!(default_k(100_000), 32);
    }
}
