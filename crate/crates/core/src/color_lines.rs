//! Illumination-tolerant road color model.
//!
//! RGB space is cut into concentric spherical shells of constant width. Each
//! shell that contains bootstrap road pixels is summarized by their mean and
//! an isotropic variance. A single 3D line through the shell means (the
//! road's color line) supplies means for shells the bootstrap never reached,
//! so darker or brighter road than the bootstrap saw still scores as road.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geom3d::Vec3;
use crate::raster::{LabelMask, RgbImage};

/// Largest possible RGB norm, `255·√3`.
pub const MAX_RGB_NORM: f64 = 441.672_955_930_063_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorLinesParams {
    pub bin_width: f64,
    pub variance_floor: f64,
    pub min_bootstrap_pixels: usize,
}

impl Default for ColorLinesParams {
    fn default() -> Self {
        ColorLinesParams {
            bin_width: 16.0,
            variance_floor: 25.0,
            min_bootstrap_pixels: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorBin {
    pub occupied: bool,
    pub mean: [f64; 3],
    pub variance: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorLine {
    pub anchor: [f64; 3],
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorLinesModel {
    pub bin_width: f64,
    pub bins: Vec<ColorBin>,
    pub line: ColorLine,
}

/// Road / not-road scores per pixel; `p_nonroad = 1 − p_road`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadScoreMap {
    pub width: usize,
    pub height: usize,
    pub p_road: Vec<f64>,
    pub p_nonroad: Vec<f64>,
}

/// 4-neighbor edge weights. `horizontal[y·(w−1) + x]` joins `(x, y)`–`(x+1, y)`,
/// `vertical[y·w + x]` joins `(x, y)`–`(x, y+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub width: usize,
    pub height: usize,
    pub horizontal: Vec<f64>,
    pub vertical: Vec<f64>,
}

impl EdgeField {
    pub fn uniform(width: usize, height: usize, v: f64) -> Self {
        EdgeField {
            width,
            height,
            horizontal: vec![v; width.saturating_sub(1) * height],
            vertical: vec![v; width * height.saturating_sub(1)],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, 0.0)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn right(&self, x: usize, y: usize) -> f64 {
        self.horizontal[y * (self.width - 1) + x]
    }

    pub fn down(&self, x: usize, y: usize) -> f64 {
        self.vertical[y * self.width + x]
    }
}

fn rgb_vec(rgb: [u8; 3]) -> Vec3 {
    Vec3::new(rgb[0] as f64, rgb[1] as f64, rgb[2] as f64)
}

/// Shell index `⌊|rgb| / bin_width⌋`.
pub fn bin_index(rgb: [f64; 3], bin_width: f64) -> usize {
    let n = (rgb[0] * rgb[0] + rgb[1] * rgb[1] + rgb[2] * rgb[2]).sqrt();
    (n / bin_width).floor() as usize
}

pub fn bin_count(bin_width: f64) -> usize {
    (MAX_RGB_NORM / bin_width).floor() as usize + 1
}

impl ColorLinesModel {
    pub fn bin_for(&self, rgb: [u8; 3]) -> usize {
        bin_index(rgb.map(f64::from), self.bin_width).min(self.bins.len() - 1)
    }

    /// Gaussian road likelihood of a color under its shell's statistics.
    pub fn road_probability(&self, rgb: [u8; 3]) -> f64 {
        let bin = &self.bins[self.bin_for(rgb)];
        let d2 = (rgb_vec(rgb) - Vec3::from(bin.mean)).norm_squared();
        (-d2 / (2.0 * bin.variance)).exp()
    }
}

/// Point on the line at distance `radius` from the origin, preferring the
/// outward root. Lines that never reach the radius give the closest point
/// pushed out radially.
fn point_at_radius(anchor: &Vec3, dir: &Vec3, radius: f64) -> Vec3 {
    let b = anchor.dot(dir);
    let disc = b * b - anchor.norm_squared() + radius * radius;
    if disc >= 0.0 {
        anchor + dir * (-b + disc.sqrt())
    } else {
        let closest = anchor - dir * b;
        closest * (radius / closest.norm())
    }
}

/// Clamp a mean's norm into its shell `[k·w, (k+1)·w)`.
fn clamp_to_shell(mean: Vec3, k: usize, w: f64) -> Vec3 {
    let lo = k as f64 * w;
    let hi = (k + 1) as f64 * w;
    let n = mean.norm();
    if n >= lo && n < hi {
        return mean;
    }
    let target = if n < lo { lo * (1.0 + 1e-12) } else { hi * (1.0 - 1e-12) };
    let dir = if n > 0.0 {
        mean / n
    } else {
        Vec3::repeat(1.0).normalize()
    };
    dir * target
}

/// Count-weighted total least-squares line through the occupied shell means.
fn fit_line(bins: &[ColorBin]) -> ColorLine {
    let occ: Vec<&ColorBin> = bins.iter().filter(|b| b.occupied).collect();
    let gray = Vec3::repeat(1.0).normalize();
    if occ.len() < 2 {
        let m = occ.first().map(|b| Vec3::from(b.mean)).unwrap_or_else(Vec3::zeros);
        let dir = if m.norm() > 0.0 { m.normalize() } else { gray };
        return ColorLine {
            anchor: [0.0; 3],
            direction: dir.into(),
        };
    }
    let total: f64 = occ.iter().map(|b| b.count as f64).sum();
    let anchor = occ
        .iter()
        .map(|b| Vec3::from(b.mean) * b.count as f64)
        .sum::<Vec3>()
        / total;
    let mut scatter = Matrix3::zeros();
    for b in &occ {
        let d = Vec3::from(b.mean) - anchor;
        scatter += d * d.transpose() * b.count as f64;
    }
    let eig = SymmetricEigen::new(scatter);
    let imax = eig.eigenvalues.imax();
    let mut dir: Vec3 = eig.eigenvectors.column(imax).into();
    if dir.norm() == 0.0 || !dir.iter().all(|v| v.is_finite()) {
        dir = gray;
    }
    dir.normalize_mut();
    // point outward, toward brighter colors
    if dir.sum() < 0.0 {
        dir = -dir;
    }
    ColorLine {
        anchor: anchor.into(),
        direction: dir.into(),
    }
}

/// Build the model from the pixels `bootstrap` marks as road.
pub fn build_model(image: &RgbImage, bootstrap: &LabelMask, params: &ColorLinesParams) -> Result<ColorLinesModel> {
    Error::check_dims(image.dims(), bootstrap.dims())?;
    if !(params.bin_width > 0.0 && params.variance_floor > 0.0) {
        return Err(Error::domain(format!("invalid color-lines params {params:?}")));
    }
    let w = params.bin_width;
    let nbins = bin_count(w);
    let mut sums = vec![Vec3::zeros(); nbins];
    let mut counts = vec![0usize; nbins];
    let road: Vec<Vec3> = image
        .pixels
        .iter()
        .zip(&bootstrap.labels)
        .filter(|(_, l)| l.is_road())
        .map(|(p, _)| rgb_vec(*p))
        .collect();
    if road.len() < params.min_bootstrap_pixels.max(1) {
        return Err(Error::ModelUnderdetermined {
            found: road.len(),
            required: params.min_bootstrap_pixels.max(1),
        });
    }
    let bin_of = |c: &Vec3| bin_index([c.x, c.y, c.z], w).min(nbins - 1);
    for c in &road {
        let k = bin_of(c);
        sums[k] += c;
        counts[k] += 1;
    }
    let means: Vec<Vec3> = (0..nbins)
        .map(|k| {
            if counts[k] > 0 {
                clamp_to_shell(sums[k] / counts[k] as f64, k, w)
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    let mut sq = vec![0.0; nbins];
    for c in &road {
        let k = bin_of(c);
        sq[k] += (c - means[k]).norm_squared();
    }
    let mut bins: Vec<ColorBin> = (0..nbins)
        .map(|k| ColorBin {
            occupied: counts[k] > 0,
            mean: means[k].into(),
            variance: if counts[k] > 0 {
                (sq[k] / counts[k] as f64).max(params.variance_floor)
            } else {
                0.0
            },
            count: counts[k],
        })
        .collect();

    let line = fit_line(&bins);
    let occupied: Vec<f64> = bins.iter().filter(|b| b.occupied).map(|b| b.variance).collect();
    let avg_var = occupied.iter().sum::<f64>() / occupied.len() as f64;
    let (anchor, dir) = (Vec3::from(line.anchor), Vec3::from(line.direction));
    for (k, b) in bins.iter_mut().enumerate() {
        if !b.occupied {
            b.mean = point_at_radius(&anchor, &dir, (k as f64 + 0.5) * w).into();
            b.variance = avg_var;
        }
    }
    Ok(ColorLinesModel {
        bin_width: w,
        bins,
        line,
    })
}

pub fn road_scores(image: &RgbImage, model: &ColorLinesModel) -> RoadScoreMap {
    road_scores_with(image, model, Execution::default())
}

pub fn road_scores_with(image: &RgbImage, model: &ColorLinesModel, exec: Execution) -> RoadScoreMap {
    let mut p_road = vec![0.0; image.pixels.len()];
    let w = image.width.max(1);
    exec.fill_chunks(&mut p_road, w, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = model.road_probability(image.pixels[y * w + x]);
        }
    });
    let p_nonroad = p_road.iter().map(|p| 1.0 - p).collect();
    RoadScoreMap {
        width: image.width,
        height: image.height,
        p_road,
        p_nonroad,
    }
}

/// `V(p,q) = P_R(p)·P_R(q) + P_¬R(p)·P_¬R(q)` over the 4-neighborhood.
pub fn edge_capacities(scores: &RoadScoreMap) -> EdgeField {
    let (w, h) = (scores.width, scores.height);
    let v = |a: usize, b: usize| {
        scores.p_road[a] * scores.p_road[b] + scores.p_nonroad[a] * scores.p_nonroad[b]
    };
    let mut horizontal = Vec::with_capacity(w.saturating_sub(1) * h);
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            horizontal.push(v(y * w + x, y * w + x + 1));
        }
    }
    let mut vertical = Vec::with_capacity(w * h.saturating_sub(1));
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            vertical.push(v(y * w + x, (y + 1) * w + x));
        }
    }
    EdgeField {
        width: w,
        height: h,
        horizontal,
        vertical,
    }
}
