//! Road plane estimation by exhaustive voting over a `(θ, d)` grid.
//!
//! Each grid cell counts the points whose algebraic residual
//! `|z·sin θ − y·cos θ − d·cos θ|` is within `inlier_tol`. For a fixed θ
//! the residual is a shift of `r = z·sin θ − y·cos θ`, so the projected values
//! are sorted once and every `d` is answered with two binary searches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geom3d::{plane_residual, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaneSearchConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_step: f64,
    /// Known camera mounting height.
    pub d_init: f64,
    pub d_window: f64,
    pub d_step: f64,
    pub inlier_tol: f64,
    pub min_inliers: usize,
}

impl Default for PlaneSearchConfig {
    fn default() -> Self {
        PlaneSearchConfig {
            theta_min: -0.15,
            theta_max: 0.15,
            theta_step: 0.005,
            d_init: 1.6,
            d_window: 0.5,
            d_step: 0.02,
            inlier_tol: 0.05,
            min_inliers: 100,
        }
    }
}

impl PlaneSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.theta_step > 0.0
            && self.d_step > 0.0
            && self.inlier_tol > 0.0
            && self.theta_min < self.theta_max
            && self.d_window >= 0.0
            && self.theta_min > -std::f64::consts::FRAC_PI_2
            && self.theta_max < std::f64::consts::FRAC_PI_2;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid plane search config {self:?}")))
        }
    }

    pub fn thetas(&self) -> Vec<f64> {
        grid(self.theta_min, self.theta_max, self.theta_step)
    }

    /// Candidate distances; non-positive values are dropped.
    pub fn dists(&self) -> Vec<f64> {
        grid(
            self.d_init - self.d_window,
            self.d_init + self.d_window,
            self.d_step,
        )
        .into_iter()
        .filter(|d| *d > 0.0)
        .collect()
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneFitResult {
    pub theta: f64,
    pub dist: f64,
    pub inlier_count: usize,
    pub inlier_indices: Vec<usize>,
}

/// Best cell of one θ column: (count, d index).
fn best_for_theta(points: &[Vec3], theta: f64, dists: &[f64], tol: f64) -> (usize, usize) {
    let (s, c) = theta.sin_cos();
    let mut r: Vec<f64> = points.iter().map(|p| p.z * s - p.y * c).collect();
    r.sort_unstable_by(f64::total_cmp);
    let mut best = (0usize, 0usize);
    for (j, d) in dists.iter().enumerate() {
        let dc = d * c;
        // r − dc is monotone in r, so both bounds are partition points of the
        // exact inlier predicate |r − dc| ≤ tol.
        let lo = r.partition_point(|&x| x - dc < -tol);
        let hi = r.partition_point(|&x| x - dc <= tol);
        let count = hi.saturating_sub(lo);
        if count > best.0 {
            best = (count, j);
        }
    }
    best
}

fn inliers(points: &[Vec3], theta: f64, dist: f64, tol: f64) -> Vec<usize> {
    let (s, c) = theta.sin_cos();
    let dc = dist * c;
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| ((p.z * s - p.y * c) - dc).abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

pub fn fit_plane_hough(points: &[Vec3], cfg: &PlaneSearchConfig) -> Result<PlaneFitResult> {
    fit_plane_hough_with(points, cfg, Execution::default())
}

pub fn fit_plane_hough_with(
    points: &[Vec3],
    cfg: &PlaneSearchConfig,
    exec: Execution,
) -> Result<PlaneFitResult> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::domain("plane fit needs at least one point"));
    }
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::domain("plane fit input contains non-finite points"));
    }
    let thetas = cfg.thetas();
    let dists = cfg.dists();
    if dists.is_empty() {
        return Err(Error::domain("distance search window contains no positive value"));
    }

    let columns = exec.map_range(thetas.len(), |i| {
        best_for_theta(points, thetas[i], &dists, cfg.inlier_tol)
    });
    // Strictly-greater scan in (θ, d) order keeps the smallest θ, then d, on ties.
    let mut best = (0usize, 0usize, 0usize);
    for (i, &(count, j)) in columns.iter().enumerate() {
        if count > best.0 {
            best = (count, i, j);
        }
    }
    let (count, ti, dj) = best;
    if count < cfg.min_inliers || count == 0 {
        return Err(Error::NoPlaneFound {
            best: count,
            required: cfg.min_inliers,
        });
    }
    let theta = thetas[ti];
    let dist = dists[dj];
    let inlier_indices = inliers(points, theta, dist, cfg.inlier_tol);
    if inlier_indices.len() != count {
        return Err(Error::Invariant(format!(
            "grid vote {count} disagrees with inlier scan {}",
            inlier_indices.len()
        )));
    }
    Ok(PlaneFitResult {
        theta,
        dist,
        inlier_count: count,
        inlier_indices,
    })
}

fn residual_ss(points: &[Vec3], idx: &[usize], theta: f64, dist: f64) -> f64 {
    idx.iter()
        .map(|&i| plane_residual(theta, dist, &points[i]).powi(2))
        .sum()
}

/// Least-squares polish of a grid fit.
///
/// The residual `z·sin θ − y·cos θ − d·cos θ` is a unit normal `(sin θ, −cos θ)`
/// dotted with `(z, y)` minus an offset, so the minimizer is the total
/// least-squares line through the inliers' `(z, y)` coordinates. Degenerate
/// inlier sets (fewer than three points, collinear in 3D, or isotropic in
/// `(z, y)`) return the input unchanged.
pub fn refine_plane_ls(
    points: &[Vec3],
    result: &PlaneFitResult,
    cfg: &PlaneSearchConfig,
) -> Result<PlaneFitResult> {
    let idx = &result.inlier_indices;
    if idx.is_empty() {
        return Err(Error::domain("refinement needs at least one inlier"));
    }
    if idx.len() < 3 {
        return Ok(result.clone());
    }
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| points[i]).sum::<Vec3>() / n;

    // 3D collinearity guard
    let mut cov3 = nalgebra::Matrix3::<f64>::zeros();
    for &i in idx {
        let d = points[i] - mean;
        cov3 += d * d.transpose();
    }
    let mut ev = nalgebra::SymmetricEigen::new(cov3).eigenvalues;
    ev.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0] {
        return Ok(result.clone());
    }

    let (mut szz, mut syy, mut szy) = (0.0, 0.0, 0.0);
    for &i in idx {
        let dz = points[i].z - mean.z;
        let dy = points[i].y - mean.y;
        szz += dz * dz;
        syy += dy * dy;
        szy += dz * dy;
    }
    // Major axis angle of the (z, y) scatter; the line normal is perpendicular.
    let spread = ((szz - syy).powi(2) + 4.0 * szy * szy).sqrt();
    if spread <= 1e-12 * (szz + syy) {
        return Ok(result.clone());
    }
    let phi = 0.5 * (2.0 * szy).atan2(szz - syy);
    // direction (cos φ, sin φ) in (z, y) is ⟂ to (sin θ, −cos θ), so θ = φ mod π
    let (mut s, mut c) = (phi.sin(), phi.cos());
    if c < 0.0 {
        s = -s;
        c = -c;
    }
    let theta = s.atan2(c);
    // offset: d·cos θ = sin θ·z̄ − cos θ·ȳ
    let dist = (s * mean.z - c * mean.y) / c;
    if !(dist > 0.0 && dist.is_finite() && theta.abs() < std::f64::consts::FRAC_PI_2) {
        return Ok(result.clone());
    }
    if residual_ss(points, idx, theta, dist) > residual_ss(points, idx, result.theta, result.dist) {
        return Ok(result.clone());
    }
    let inlier_indices = inliers(points, theta, dist, cfg.inlier_tol);
    if inlier_indices.len() < cfg.min_inliers.max(1) {
        return Ok(result.clone());
    }
    Ok(PlaneFitResult {
        theta,
        dist,
        inlier_count: inlier_indices.len(),
        inlier_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Points on `z sin θ − y cos θ = d cos θ`, y solved from x/z samples.
    fn plane_points(theta: f64, d: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        let (s, c) = theta.sin_cos();
        (0..n)
            .map(|_| {
                let x = rng.random_range(-8.0..8.0);
                let z = rng.random_range(2.0..40.0);
                Vec3::new(x, (z * s - d * c) / c, z)
            })
            .collect()
    }

    fn cfg() -> PlaneSearchConfig {
        PlaneSearchConfig {
            theta_step: 0.01,
            d_step: 0.05,
            d_init: 1.5,
            d_window: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn exact_plane_recovered_within_one_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = plane_points(0.05, 1.5, 1000, &mut rng);
        let fit = fit_plane_hough(&pts, &cfg()).unwrap();
        assert!((0.04..=0.06).contains(&fit.theta), "{}", fit.theta);
        assert!((1.45..=1.55).contains(&fit.dist), "{}", fit.dist);
        assert_eq!(fit.inlier_count, 1000);
        assert_eq!(fit.inlier_indices.len(), 1000);
    }

    #[test]
    fn too_few_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = plane_points(0.0, 1.5, 10, &mut rng);
        let c = PlaneSearchConfig {
            min_inliers: 50,
            ..cfg()
        };
        assert!(matches!(
            fit_plane_hough(&pts, &c),
            Err(Error::NoPlaneFound { best: 10, required: 50 })
        ));
    }

    #[test]
    fn empty_and_nonfinite_rejected() {
        assert!(matches!(fit_plane_hough(&[], &cfg()), Err(Error::Domain(_))));
        let pts = vec![Vec3::new(f64::NAN, 0.0, 1.0)];
        assert!(matches!(fit_plane_hough(&pts, &cfg()), Err(Error::Domain(_))));
    }

    #[test]
    fn noisy_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut pts: Vec<Vec3> = plane_points(0.05, 1.5, 500, &mut rng)
            .into_iter()
            .map(|p| p + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
            .collect();
        for _ in 0..200 {
            pts.push(Vec3::new(
                rng.random_range(-8.0..8.0),
                rng.random_range(-2.0..3.0),
                rng.random_range(2.0..40.0),
            ));
        }
        let c = PlaneSearchConfig {
            inlier_tol: 0.05,
            ..cfg()
        };
        let fit = fit_plane_hough(&pts, &c).unwrap();
        assert!((fit.theta - 0.05).abs() <= 0.02);
        assert!((fit.dist - 1.5).abs() <= 0.05);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = plane_points(-0.03, 1.7, 2000, &mut rng);
        let a = fit_plane_hough_with(&pts, &cfg(), Execution::Sequential).unwrap();
        let b = fit_plane_hough_with(&pts, &cfg(), Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shift_along_y_moves_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = plane_points(0.0, 1.5, 800, &mut rng);
        let c = PlaneSearchConfig {
            d_step: 0.02,
            theta_step: 0.005,
            ..cfg()
        };
        let a = fit_plane_hough(&pts, &c).unwrap();
        let shifted: Vec<Vec3> = pts.iter().map(|p| p + Vec3::new(0.0, 0.2, 0.0)).collect();
        let b = fit_plane_hough(&shifted, &c).unwrap();
        assert!(((a.dist - b.dist) - 0.2).abs() <= c.d_step + 1e-12);
    }

    #[test]
    fn refine_noiseless_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = plane_points(0.043, 1.537, 600, &mut rng);
        let c = cfg();
        let grid = fit_plane_hough(&pts, &c).unwrap();
        let fine = refine_plane_ls(&pts, &grid, &c).unwrap();
        assert!((fine.theta - 0.043).abs() < 1e-9);
        assert!((fine.dist - 1.537).abs() < 1e-9);
        assert_eq!(fine.inlier_count, 600);
    }

    #[test]
    fn refine_improves_off_grid_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let pts: Vec<Vec3> = plane_points(0.0321, 1.512, 800, &mut rng)
            .into_iter()
            .map(|p| p + Vec3::new(0.0, noise.sample(&mut rng), 0.0))
            .collect();
        let c = cfg();
        let grid = fit_plane_hough(&pts, &c).unwrap();
        let fine = refine_plane_ls(&pts, &grid, &c).unwrap();
        let err = |t: f64, d: f64| (t - 0.0321).abs() + (d - 1.512).abs();
        assert!(err(fine.theta, fine.dist) < err(grid.theta, grid.dist));
        assert!(
            residual_ss(&pts, &grid.inlier_indices, fine.theta, fine.dist)
                <= residual_ss(&pts, &grid.inlier_indices, grid.theta, grid.dist)
        );
    }

    #[test]
    fn refine_two_inliers_unchanged() {
        let pts = vec![Vec3::new(0.0, -1.5, 3.0), Vec3::new(1.0, -1.5, 5.0)];
        let r = PlaneFitResult {
            theta: 0.0,
            dist: 1.5,
            inlier_count: 2,
            inlier_indices: vec![0, 1],
        };
        assert_eq!(refine_plane_ls(&pts, &r, &cfg()).unwrap(), r);
    }

    #[test]
    fn refine_collinear_unchanged() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(0.0, -1.5, 2.0 + i as f64)).collect();
        let r = PlaneFitResult {
            theta: 0.01,
            dist: 1.5,
            inlier_count: 10,
            inlier_indices: (0..10).collect(),
        };
        assert_eq!(refine_plane_ls(&pts, &r, &cfg()).unwrap(), r);
    }

    #[test]
    fn larger_tolerance_never_loses_votes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let pts: Vec<Vec3> = plane_points(0.02, 1.6, 700, &mut rng)
            .into_iter()
            .map(|p| p + Vec3::new(0.0, noise.sample(&mut rng), 0.0))
            .collect();
        let mut prev = 0;
        for tol in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let c = PlaneSearchConfig {
                inlier_tol: tol,
                min_inliers: 1,
                ..cfg()
            };
            let fit = fit_plane_hough(&pts, &c).unwrap();
            assert!(fit.inlier_count >= prev);
            prev = fit.inlier_count;
        }
    }
}
