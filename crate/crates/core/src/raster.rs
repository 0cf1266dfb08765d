//! Dense row-major rasters: probability maps and binary masks.
//!
//! Coordinates are `(row, col)` with row 0 at the top of the image. Both
//! raster types validate their invariants at construction and are immutable
//! afterwards.

use crate::error::{Error, Result};

/// Pixel coordinate as `(row, col)`.
pub type Point = (usize, usize);

/// Threshold used when nothing else is specified.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Shape(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    match width.checked_mul(height) {
        Some(n) if n == len => Ok(()),
        _ => Err(Error::Shape(format!(
            "{width}x{height} raster needs {} values, got {len}",
            width.saturating_mul(height)
        ))),
    }
}

/// One model's per-pixel foreground probability.
///
/// Samples are stored as `f32`, the precision of the on-disk PFM format, so a
/// map read from a file and written back is bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ProbMap {
    /// Builds a map, rejecting wrong lengths and samples that are not finite
    /// values in `[0, 1]`.
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some((index, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidArgument(format!(
                "probability sample {v} at index {index} is outside [0, 1]"
            )));
        }
        Ok(ProbMap {
            width,
            height,
            values,
        })
    }

    /// A map with every sample equal to `value`.
    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    /// Thresholds the map: a pixel is foreground iff its value is `>= threshold`.
    pub fn binarize(&self, threshold: f64) -> Result<Mask> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidArgument(format!(
                "threshold {threshold} is outside [0, 1]"
            )));
        }
        Ok(Mask {
            width: self.width,
            height: self.height,
            bits: self
                .values
                .iter()
                .map(|&v| f64::from(v) >= threshold)
                .collect(),
        })
    }
}

/// Free-function form of [`ProbMap::binarize`].
pub fn binarize(map: &ProbMap, threshold: f64) -> Result<Mask> {
    map.binarize(threshold)
}

/// A binary foreground/background raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    /// All-background mask.
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width.saturating_mul(height)])
    }

    /// Mask whose foreground is exactly the given points. Out-of-bounds points
    /// are rejected.
    pub fn from_points(width: usize, height: usize, points: &[Point]) -> Result<Self> {
        let mut mask = Self::empty(width, height)?;
        for &(r, c) in points {
            if r >= height || c >= width {
                return Err(Error::Shape(format!(
                    "point ({r}, {c}) lies outside a {width}x{height} raster"
                )));
            }
            mask.bits[r * width + c] = true;
        }
        Ok(mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Foreground coordinates in row-major order.
    pub fn foreground_points(&self) -> Vec<Point> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    /// Euclidean length of the raster diagonal between the two extreme pixel
    /// centers.
    pub fn diagonal(&self) -> f64 {
        let dr = (self.height - 1) as f64;
        let dc = (self.width - 1) as f64;
        (dr * dr + dc * dc).sqrt()
    }

    /// Lossless conversion to a 0/1 probability map.
    pub fn to_probmap(&self) -> ProbMap {
        ProbMap {
            width: self.width,
            height: self.height,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Free-function form of [`Mask::foreground_points`].
pub fn foreground_points(mask: &Mask) -> Vec<Point> {
    mask.foreground_points()
}

/// Pixel tallies of a prediction against a reference mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, rhs: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
            tn: self.tn + rhs.tn,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

/// Tallies `prediction` against `truth`. Both masks must share dimensions.
pub fn confusion(prediction: &Mask, truth: &Mask) -> Result<ConfusionCounts> {
    if prediction.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "prediction is {}x{} but truth is {}x{}",
            prediction.width, prediction.height, truth.width, truth.height
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in prediction.bits.iter().zip(&truth.bits) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}
