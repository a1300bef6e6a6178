//! Binary road / not-road CRF over the pixel grid.
//!
//! The energy is the sum of per-pixel label costs plus `V(p,q)` for every
//! 4-neighbor pair that takes different labels. With `V ≥ 0` the pairwise
//! term is submodular and a single minimum s–t cut gives the exact minimizer:
//! source side is road, a pixel on the sink side cuts its source link (paying
//! the not-road cost) and a pixel on the source side cuts its sink link.

pub mod maxflow;

use crate::color_lines::EdgeField;
use crate::error::{Error, Result};
use crate::priors::UnaryField;
use crate::raster::{Label, LabelMask};

use maxflow::{MaxFlowGraph, Segment};

/// Largest instance [`brute_force_solve`] accepts.
pub const BRUTE_FORCE_MAX_PIXELS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct CostField {
    pub unary: UnaryField,
    pub pairwise: EdgeField,
}

impl CostField {
    pub fn new(unary: UnaryField, pairwise: EdgeField) -> Result<Self> {
        Error::check_dims(unary.dims(), pairwise.dims())?;
        let (w, h) = unary.dims();
        if pairwise.horizontal.len() != w.saturating_sub(1) * h
            || pairwise.vertical.len() != w * h.saturating_sub(1)
            || unary.cost_road.len() != w * h
            || unary.cost_nonroad.len() != w * h
        {
            return Err(Error::domain("cost field buffers do not match their dimensions"));
        }
        Ok(CostField { unary, pairwise })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.unary.dims()
    }

    /// Every cost finite and non-negative.
    pub fn validate(&self) -> Result<()> {
        let u = &self.unary;
        let all = u
            .cost_road
            .iter()
            .chain(&u.cost_nonroad)
            .chain(&self.pairwise.horizontal)
            .chain(&self.pairwise.vertical);
        for (index, v) in all.enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidCost { index });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub mask: LabelMask,
    /// `energy(mask)` evaluated directly.
    pub min_energy: f64,
    /// Flow pushed by the max-flow solver.
    pub flow: f64,
    /// Constant removed from the terminal links before solving.
    pub offset: f64,
}

pub fn energy(mask: &LabelMask, costs: &CostField) -> Result<f64> {
    Error::check_dims(costs.dims(), mask.dims())?;
    let (w, h) = mask.dims();
    let u = &costs.unary;
    let mut e = 0.0;
    for (i, l) in mask.labels.iter().enumerate() {
        e += match l {
            Label::Road => u.cost_road[i],
            Label::NotRoad => u.cost_nonroad[i],
        };
    }
    for y in 0..h {
        for x in 0..w {
            let l = mask.get(x, y);
            if x + 1 < w && l != mask.get(x + 1, y) {
                e += costs.pairwise.right(x, y);
            }
            if y + 1 < h && l != mask.get(x, y + 1) {
                e += costs.pairwise.down(x, y);
            }
        }
    }
    Ok(e)
}

/// Exact minimizer by minimum cut.
pub fn solve(costs: &CostField) -> Result<Solution> {
    costs.validate()?;
    let (w, h) = costs.dims();
    let n = w * h;
    let u = &costs.unary;
    let mut g = MaxFlowGraph::with_capacity(n, 2 * n);
    g.add_nodes(n);
    let mut offset = 0.0;
    for i in 0..n {
        let (road, nonroad) = (u.cost_road[i], u.cost_nonroad[i]);
        let m = road.min(nonroad);
        offset += m;
        g.add_tweights(i, nonroad - m, road - m);
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                let v = costs.pairwise.right(x, y);
                if v > 0.0 {
                    g.add_edge(i, i + 1, v, v);
                }
            }
            if y + 1 < h {
                let v = costs.pairwise.down(x, y);
                if v > 0.0 {
                    g.add_edge(i, i + w, v, v);
                }
            }
        }
    }
    let flow = g.maxflow();
    let labels = (0..n)
        .map(|i| match g.segment(i) {
            Segment::Source => Label::Road,
            Segment::Sink => Label::NotRoad,
        })
        .collect();
    let mask = LabelMask {
        width: w,
        height: h,
        labels,
    };
    let min_energy = energy(&mask, costs)?;
    Ok(Solution {
        mask,
        min_energy,
        flow,
        offset,
    })
}

/// Exhaustive search over all `2^(w·h)` labelings. Ties keep the first
/// labeling in enumeration order (bit i set = pixel i is road).
pub fn brute_force_solve(costs: &CostField) -> Result<(LabelMask, f64)> {
    let (w, h) = costs.dims();
    let n = w * h;
    if n > BRUTE_FORCE_MAX_PIXELS {
        return Err(Error::InstanceTooLarge {
            pixels: n,
            max: BRUTE_FORCE_MAX_PIXELS,
        });
    }
    let mut best: Option<(LabelMask, f64)> = None;
    for bits in 0u32..(1u32 << n) {
        let labels = (0..n)
            .map(|i| if bits >> i & 1 == 1 { Label::Road } else { Label::NotRoad })
            .collect();
        let mask = LabelMask {
            width: w,
            height: h,
            labels,
        };
        let e = energy(&mask, costs)?;
        if best.as_ref().is_none_or(|(_, be)| e < *be) {
            best = Some((mask, e));
        }
    }
    Ok(best.expect("at least one labeling"))
}
