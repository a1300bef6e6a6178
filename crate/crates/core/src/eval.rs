//! Pixel-level confusion counts and precision / recall / F1.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::LabelMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;
    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

/// `None` marks a metric whose denominator is zero. Serialized as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub fval: Option<f64>,
}

pub fn compare_masks(pred: &LabelMask, gt: &LabelMask) -> Result<ConfusionCounts> {
    Error::check_dims(gt.dims(), pred.dims())?;
    let mut c = ConfusionCounts::default();
    for (p, g) in pred.labels.iter().zip(&gt.labels) {
        match (p.is_road(), g.is_road()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let fval = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        precision,
        recall,
        fval,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> LabelMask {
        LabelMask {
            width: w,
            height: h,
            labels: (0..w * h)
                .map(|_| if rng.random_bool(0.5) { Label::Road } else { Label::NotRoad })
                .collect(),
        }
    }

    #[test]
    fn identical_and_inverted_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = random_mask(&mut rng, 8, 8);
        let c = compare_masks(&gt, &gt).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let inv = LabelMask {
            labels: gt.labels.iter().map(|l| l.flipped()).collect(),
            ..gt.clone()
        };
        let c = compare_masks(&inv, &gt).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
    }

    #[test]
    fn counts_match_a_direct_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pred = random_mask(&mut rng, 8, 8);
        let gt = random_mask(&mut rng, 8, 8);
        let c = compare_masks(&pred, &gt).unwrap();
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for y in 0..8 {
            for x in 0..8 {
                let p = pred.get(x, y) == Label::Road;
                let g = gt.get(x, y) == Label::Road;
                if p && g {
                    tp += 1;
                } else if p {
                    fp += 1;
                } else if g {
                    fn_ += 1;
                } else {
                    tn += 1;
                }
            }
        }
        assert_eq!(c, counts(tp, fp, fn_, tn));
        assert_eq!(c.total(), 64);
    }

    #[test]
    fn dimension_mismatch() {
        let a = LabelMask::filled(2, 3, Label::Road);
        let b = LabelMask::filled(3, 2, Label::Road);
        assert!(matches!(compare_masks(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&counts(90, 10, 10, 0));
        assert_eq!((m.precision, m.recall, m.fval), (Some(0.9), Some(0.9), Some(0.9)));
        let m = metrics(&counts(5, 0, 0, 3));
        assert_eq!((m.precision, m.recall, m.fval), (Some(1.0), Some(1.0), Some(1.0)));
        let m = metrics(&counts(0, 4, 3, 1));
        assert_eq!((m.precision, m.recall, m.fval), (Some(0.0), Some(0.0), None));
        let m = metrics(&counts(0, 0, 0, 9));
        assert_eq!((m.precision, m.recall, m.fval), (None, None, None));
    }

    #[test]
    fn fval_between_precision_and_recall() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let c = counts(rng.random_range(0..50), rng.random_range(0..50), rng.random_range(0..50), 0);
            let m = metrics(&c);
            if let (Some(p), Some(r), Some(f)) = (m.precision, m.recall, m.fval) {
                assert!(f <= 1.0);
                assert!(p.min(r) - 1e-15 <= f && f <= p.max(r) + 1e-15);
            }
        }
    }

    #[test]
    fn undefined_serializes_as_null() {
        let s = serde_json::to_string(&metrics(&counts(0, 0, 0, 1))).unwrap();
        assert_eq!(s, r#"{"precision":null,"recall":null,"fval":null}"#);
        let s = serde_json::to_string(&counts(1, 2, 3, 4)).unwrap();
        assert_eq!(s, r#"{"tp":1,"fp":2,"fn":3,"tn":4}"#);
    }
}
