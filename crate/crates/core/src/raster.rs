//! Row-major image containers.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Road,
    NotRoad,
}

impl Label {
    pub fn is_road(self) -> bool {
        self == Label::Road
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Road => Label::NotRoad,
            Label::NotRoad => Label::Road,
        }
    }
}

/// Binary road / not-road labeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<Label>,
}

impl LabelMask {
    pub fn filled(width: usize, height: usize, label: Label) -> Self {
        LabelMask {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        Error::check_dims((width * height, 1), (labels.len(), 1))?;
        Ok(LabelMask {
            width,
            height,
            labels,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    pub fn road_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_road()).count()
    }
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        RgbImage {
            width,
            height,
            pixels: vec![rgb; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}
