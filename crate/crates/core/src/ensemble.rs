//! Weighted convex fusion of probability maps and exhaustive weight search.
//!
//! Weights live on an exact integer grid: a [`WeightVector`] holds integer
//! numerators over a shared denominator, and the numerators always sum to the
//! denominator. The default grid step is 0.1 (denominator 10).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{iou, z_transform};
use crate::raster::{ConfusionCounts, Mask, ProbMap};

/// Grid denominator used when none is given (step 0.1).
pub const DEFAULT_DENOMINATOR: u32 = 10;

/// Upper bound on the grid denominator. Keeps `n * value` products exact in
/// `f64` for every `f32` sample, which fusion relies on.
pub const MAX_DENOMINATOR: u32 = 1 << 20;

/// Numerators of the documented four-model preset over denominator 10:
/// weights 0.2, 0.1, 0.6, 0.1 for models ordered PAN, FPN, Unet, DeepLabv3+.
pub const REFERENCE_PRESET: [u32; 4] = [2, 1, 6, 1];

/// A point on the weight simplex, stored exactly as integer numerators over a
/// common denominator.
///
/// Ordering is lexicographic on the numerators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WeightVector {
    numerators: Vec<u32>,
    denominator: u32,
}

fn check_denominator(denominator: u32) -> Result<()> {
    if denominator == 0 || denominator > MAX_DENOMINATOR {
        return Err(Error::InvalidArgument(format!(
            "grid denominator must be in 1..={MAX_DENOMINATOR}, got {denominator}"
        )));
    }
    Ok(())
}

impl WeightVector {
    pub fn new(numerators: Vec<u32>, denominator: u32) -> Result<Self> {
        check_denominator(denominator)?;
        if numerators.is_empty() {
            return Err(Error::InvalidArgument("weight vector is empty".into()));
        }
        let sum: u64 = numerators.iter().map(|&n| u64::from(n)).sum();
        if sum != u64::from(denominator) {
            return Err(Error::InvalidArgument(format!(
                "weights {numerators:?}/{denominator} sum to {sum}/{denominator}, not 1"
            )));
        }
        Ok(WeightVector {
            numerators,
            denominator,
        })
    }

    /// All weight on model `k`.
    pub fn one_hot(n_models: usize, k: usize, denominator: u32) -> Result<Self> {
        if k >= n_models {
            return Err(Error::InvalidArgument(format!(
                "model index {k} out of range for {n_models} models"
            )));
        }
        let mut numerators = vec![0; n_models];
        numerators[k] = denominator;
        Self::new(numerators, denominator)
    }

    /// The documented four-model preset (0.2, 0.1, 0.6, 0.1).
    pub fn reference_preset() -> Self {
        WeightVector {
            numerators: REFERENCE_PRESET.to_vec(),
            denominator: DEFAULT_DENOMINATOR,
        }
    }

    /// Parses comma-separated exact decimals (or `n/d` fractions) onto the
    /// grid with the given denominator. Values that do not fall exactly on a
    /// grid point, or do not sum to 1, are rejected.
    pub fn parse(text: &str, denominator: u32) -> Result<Self> {
        check_denominator(denominator)?;
        let numerators = text
            .split(',')
            .map(|field| grid_numerator(field.trim(), denominator))
            .collect::<Result<Vec<_>>>()?;
        Self::new(numerators, denominator)
    }

    pub fn numerators(&self) -> &[u32] {
        &self.numerators
    }

    pub fn denominator(&self) -> u32 {
        self.denominator
    }

    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    /// Weight `k` as a real number.
    pub fn weight(&self, k: usize) -> f64 {
        f64::from(self.numerators[k]) / f64::from(self.denominator)
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    /// Exact decimal (or fraction) rendering of each weight.
    pub fn format_weights(&self) -> Vec<String> {
        self.numerators
            .iter()
            .map(|&n| format_grid_value(n, self.denominator))
            .collect()
    }

    /// Same numerators expressed over `factor * denominator`.
    pub fn rescale(&self, factor: u32) -> Result<Self> {
        let denominator = self
            .denominator
            .checked_mul(factor)
            .ok_or_else(|| Error::InvalidArgument("rescaled denominator overflows".into()))?;
        Self::new(
            self.numerators.iter().map(|&n| n * factor).collect(),
            denominator,
        )
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.format_weights().join(", "))
    }
}

/// Number of decimal digits needed to write `1/denominator` exactly, if any.
fn decimal_digits(denominator: u32) -> Option<u32> {
    let mut d = denominator;
    let (mut twos, mut fives) = (0, 0);
    while d % 2 == 0 {
        d /= 2;
        twos += 1;
    }
    while d % 5 == 0 {
        d /= 5;
        fives += 1;
    }
    (d == 1).then(|| u32::max(twos, fives))
}

/// Renders `numerator / denominator` exactly: a decimal with at least one
/// fractional digit when the denominator divides a power of ten, otherwise
/// the fraction `n/d`.
pub fn format_grid_value(numerator: u32, denominator: u32) -> String {
    match decimal_digits(denominator) {
        Some(digits) => {
            let digits = digits.max(1);
            let scale = 10u64.pow(digits);
            let scaled = u64::from(numerator) * scale / u64::from(denominator);
            format!(
                "{}.{:0width$}",
                scaled / scale,
                scaled % scale,
                width = digits as usize
            )
        }
        None => format!("{numerator}/{denominator}"),
    }
}

/// Parses an exact non-negative decimal (`0.25`, `.5`, `1`) or fraction
/// (`1/3`) into an unreduced `(numerator, denominator)` pair.
pub(crate) fn parse_exact(field: &str) -> Result<(u128, u128)> {
    let bad = |why: &str| Error::InvalidArgument(format!("weight {field:?}: {why}"));
    if let Some((n, d)) = field.split_once('/') {
        let n = n.trim().parse().map_err(|_| bad("not a fraction"))?;
        let d: u128 = d.trim().parse().map_err(|_| bad("not a fraction"))?;
        if d == 0 {
            return Err(bad("zero denominator"));
        }
        return Ok((n, d));
    }
    let (int, frac) = field.split_once('.').unwrap_or((field, ""));
    if int.is_empty() && frac.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
        || frac.len() > 30
    {
        return Err(bad("not a non-negative decimal"));
    }
    let n = format!("{int}{frac}").parse().map_err(|_| bad("too many digits"))?;
    Ok((n, 10u128.pow(frac.len() as u32)))
}

/// Maps an exact decimal or `n/d` fraction to a numerator over `denominator`.
fn grid_numerator(field: &str, denominator: u32) -> Result<u32> {
    let bad = |why: &str| Error::InvalidArgument(format!("weight {field:?}: {why}"));
    let (num, den) = parse_exact(field)?;
    let scaled = num
        .checked_mul(u128::from(denominator))
        .ok_or_else(|| bad("too large"))?;
    if scaled % den != 0 {
        return Err(bad(&format!("not on the 1/{denominator} grid")));
    }
    u32::try_from(scaled / den)
        .ok()
        .filter(|&n| n <= denominator)
        .ok_or_else(|| bad("exceeds 1"))
}

/// Number of weight vectors on the grid: `C(denominator + n - 1, n - 1)`.
pub fn simplex_size(n_models: usize, denominator: u32) -> u128 {
    let k = n_models.saturating_sub(1) as u128;
    let n = u128::from(denominator) + k;
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Every weight vector with `n_models` entries on the `1/denominator` grid,
/// in lexicographic order of numerators.
pub fn enumerate_simplex(n_models: usize, denominator: u32) -> Result<Vec<WeightVector>> {
    if n_models < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 models, got {n_models}"
        )));
    }
    check_denominator(denominator)?;
    let size = simplex_size(n_models, denominator);
    if size > 50_000_000 {
        return Err(Error::InvalidArgument(format!(
            "grid of {size} weight vectors is too large to enumerate"
        )));
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut current = vec![0u32; n_models];
    fill_compositions(&mut current, 0, denominator, denominator, &mut out);
    Ok(out)
}

fn fill_compositions(
    current: &mut [u32],
    pos: usize,
    remaining: u32,
    denominator: u32,
    out: &mut Vec<WeightVector>,
) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(WeightVector {
            numerators: current.to_vec(),
            denominator,
        });
        return;
    }
    for n in 0..=remaining {
        current[pos] = n;
        fill_compositions(current, pos + 1, remaining - n, denominator, out);
    }
}

/// Fuses one pixel from `(numerator, sample)` terms.
///
/// Terms are summed in a canonical order so the result does not depend on
/// model order. Each `numerator * sample` product is exact in `f64`, which
/// makes one-hot weights and identical inputs reproduce the input sample
/// bit for bit.
fn fuse_pixel(terms: &mut [(u32, f32)], denominator: u32) -> f32 {
    terms.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let sum: f64 = terms
        .iter()
        .map(|&(n, v)| f64::from(n) * f64::from(v))
        .sum();
    (sum / f64::from(denominator)).clamp(0.0, 1.0) as f32
}

fn check_maps(maps: &[ProbMap], w: &WeightVector) -> Result<(usize, usize)> {
    if maps.len() < 2 {
        return Err(Error::Shape(format!(
            "fusion needs at least 2 maps, got {}",
            maps.len()
        )));
    }
    if maps.len() != w.len() {
        return Err(Error::Shape(format!(
            "{} maps but {} weights",
            maps.len(),
            w.len()
        )));
    }
    let dims = maps[0].dims();
    if let Some((k, m)) = maps.iter().enumerate().find(|(_, m)| m.dims() != dims) {
        return Err(Error::Shape(format!(
            "map {k} is {}x{} but map 0 is {}x{}",
            m.width(),
            m.height(),
            dims.0,
            dims.1
        )));
    }
    Ok(dims)
}

/// Per-pixel convex combination `sum_k w_k * maps[k]`.
pub fn fuse(maps: &[ProbMap], w: &WeightVector) -> Result<ProbMap> {
    let (width, height) = check_maps(maps, w)?;
    let mut terms = Vec::with_capacity(maps.len());
    let values = (0..width * height)
        .map(|i| {
            terms.clear();
            terms.extend(
                w.numerators
                    .iter()
                    .zip(maps)
                    .filter(|(&n, _)| n > 0)
                    .map(|(&n, m)| (n, m.values()[i])),
            );
            fuse_pixel(&mut terms, w.denominator)
        })
        .collect();
    ProbMap::new(width, height, values)
}

/// Ground truth plus one probability map per model for a single slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSlice {
    pub truth: Mask,
    pub maps: Vec<ProbMap>,
}

impl LabeledSlice {
    pub fn new(truth: Mask, maps: Vec<ProbMap>) -> Result<Self> {
        if let Some((k, m)) = maps.iter().enumerate().find(|(_, m)| m.dims() != truth.dims()) {
            return Err(Error::Shape(format!(
                "map {k} is {}x{} but truth is {}x{}",
                m.width(),
                m.height(),
                truth.width(),
                truth.height()
            )));
        }
        Ok(LabeledSlice { truth, maps })
    }

    /// Fuses with `w`, thresholds, and tallies against the truth without
    /// materialising the fused map.
    fn fused_confusion(&self, w: &WeightVector, threshold: f64) -> ConfusionCounts {
        let mut terms = Vec::with_capacity(self.maps.len());
        let mut c = ConfusionCounts::default();
        for (i, &truth) in self.truth.bits().iter().enumerate() {
            terms.clear();
            terms.extend(
                w.numerators
                    .iter()
                    .zip(&self.maps)
                    .filter(|(&n, _)| n > 0)
                    .map(|(&n, m)| (n, m.values()[i])),
            );
            let predicted = f64::from(fuse_pixel(&mut terms, w.denominator)) >= threshold;
            match (predicted, truth) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }
}

/// How per-slice results are combined into one score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Objective {
    /// IoU of confusion counts pooled over all slices.
    #[default]
    Micro,
    /// Unweighted mean of per-slice IoU.
    Macro,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "micro" => Ok(Objective::Micro),
            "macro" => Ok(Objective::Macro),
            other => Err(Error::InvalidArgument(format!(
                "unknown objective {other:?} (expected micro or macro)"
            ))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Micro => "micro",
            Objective::Macro => "macro",
        })
    }
}

/// Checks the slice set and returns the common model count.
fn check_slices(slices: &[LabeledSlice]) -> Result<usize> {
    let first = slices
        .first()
        .ok_or_else(|| Error::InvalidArgument("no slices to evaluate".into()))?;
    let n = first.maps.len();
    if n < 2 {
        return Err(Error::Shape(format!("need at least 2 models, got {n}")));
    }
    for (i, s) in slices.iter().enumerate() {
        if s.maps.len() != n {
            return Err(Error::Shape(format!(
                "slice {i} has {} maps, expected {n}",
                s.maps.len()
            )));
        }
        if let Some(k) = s.maps.iter().position(|m| m.dims() != s.truth.dims()) {
            return Err(Error::Shape(format!(
                "slice {i}: map {k} does not match the truth dimensions"
            )));
        }
    }
    Ok(n)
}

fn objective_from_counts(per_slice: &[ConfusionCounts], objective: Objective) -> f64 {
    match objective {
        Objective::Micro => iou(&per_slice.iter().copied().sum()),
        Objective::Macro => {
            per_slice.iter().map(iou).sum::<f64>() / per_slice.len() as f64
        }
    }
}

/// Per-slice confusion counts of the fused, thresholded prediction.
pub fn fused_counts(
    slices: &[LabeledSlice],
    w: &WeightVector,
    threshold: f64,
) -> Result<Vec<ConfusionCounts>> {
    let n = check_slices(slices)?;
    if w.len() != n {
        return Err(Error::Shape(format!("{n} models but {} weights", w.len())));
    }
    check_threshold(threshold)?;
    Ok(slices.iter().map(|s| s.fused_confusion(w, threshold)).collect())
}

/// Objective value of a single weight vector.
pub fn evaluate_weights(
    slices: &[LabeledSlice],
    w: &WeightVector,
    threshold: f64,
    objective: Objective,
) -> Result<f64> {
    Ok(objective_from_counts(
        &fused_counts(slices, w, threshold)?,
        objective,
    ))
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} is outside [0, 1]"
        )));
    }
    Ok(())
}

/// Every enumerated weight vector with its objective, plus the argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: WeightVector,
    pub best_objective: f64,
    pub table: Vec<(WeightVector, f64)>,
}

impl GridSearchResult {
    /// Builds a result from a complete table, selecting the lexicographically
    /// smallest vector among those with the highest objective.
    pub fn from_table(mut table: Vec<(WeightVector, f64)>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::InvalidArgument("empty grid-search table".into()));
        }
        if let Some((w, v)) = table.iter().find(|(_, v)| v.is_nan()) {
            return Err(Error::InvalidArgument(format!("objective of {w} is NaN: {v}")));
        }
        table.sort_by(|a, b| a.0.cmp(&b.0));
        let (best, best_objective) = table
            .iter()
            .fold(None::<&(WeightVector, f64)>, |acc, entry| match acc {
                Some(b) if b.1 >= entry.1 => Some(b),
                _ => Some(entry),
            })
            .map(|(w, v)| (w.clone(), *v))
            .expect("table is nonempty");
        Ok(GridSearchResult {
            best,
            best_objective,
            table,
        })
    }

    pub fn n_models(&self) -> usize {
        self.best.len()
    }

    pub fn denominator(&self) -> u32 {
        self.best.denominator()
    }

    /// Objective recorded for `w`, if it is in the table.
    pub fn objective_of(&self, w: &WeightVector) -> Option<f64> {
        self.table
            .binary_search_by(|(entry, _)| entry.cmp(w))
            .ok()
            .map(|i| self.table[i].1)
    }

    /// Whether the table holds exactly the full enumeration of its grid.
    pub fn is_complete(&self) -> bool {
        let n = self.n_models();
        let d = self.denominator();
        simplex_size(n, d) == self.table.len() as u128
            && self
                .table
                .iter()
                .all(|(w, _)| w.len() == n && w.denominator() == d)
            && self.table.windows(2).all(|p| p[0].0 < p[1].0)
    }
}

/// Scores every weight vector on the grid and returns the full table plus the
/// deterministic argmax (ties go to the lexicographically smallest vector).
///
/// Weight vectors are scored in parallel; the table is assembled in
/// enumeration order so the result does not depend on scheduling.
pub fn grid_search(
    slices: &[LabeledSlice],
    denominator: u32,
    threshold: f64,
    objective: Objective,
) -> Result<GridSearchResult> {
    let n = check_slices(slices)?;
    check_threshold(threshold)?;
    let table: Vec<(WeightVector, f64)> = enumerate_simplex(n, denominator)?
        .into_par_iter()
        .map(|w| {
            let counts: Vec<ConfusionCounts> = slices
                .iter()
                .map(|s| s.fused_confusion(&w, threshold))
                .collect();
            let value = objective_from_counts(&counts, objective);
            (w, value)
        })
        .collect();
    GridSearchResult::from_table(table)
}

/// One heatmap cell: grid numerators on the two free axes and its Z value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub horizontal: u32,
    pub vertical: u32,
    pub z: f64,
}

/// Z values over two free weights while one weight is held fixed.
///
/// For four models with `fixed_index` 0, the horizontal axis is the numerator
/// of `w_2`, the vertical axis that of `w_3`, and `w_4` takes what is left.
/// Cells where the fixed and free numerators exceed the denominator are
/// absent.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    pub fixed_index: usize,
    pub fixed_numerator: u32,
    pub denominator: u32,
    /// Model indices of the horizontal, vertical and implied axes.
    pub axes: [usize; 3],
    /// `cells[vertical][horizontal]`, each `(denominator + 1)` long.
    pub cells: Vec<Vec<Option<f64>>>,
    /// Highest-Z cell of this panel.
    pub argmax: HeatCell,
}

impl HeatmapMatrix {
    pub fn get(&self, horizontal: u32, vertical: u32) -> Option<f64> {
        self.cells
            .get(vertical as usize)
            .and_then(|row| row.get(horizontal as usize))
            .copied()
            .flatten()
    }

    pub fn present_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Full weight vector of a cell's grid position.
    pub fn weight_vector(&self, horizontal: u32, vertical: u32) -> Option<WeightVector> {
        let used = self.fixed_numerator + horizontal + vertical;
        if used > self.denominator {
            return None;
        }
        let mut numerators = vec![0; 4];
        numerators[self.fixed_index] = self.fixed_numerator;
        numerators[self.axes[0]] = horizontal;
        numerators[self.axes[1]] = vertical;
        numerators[self.axes[2]] = self.denominator - used;
        WeightVector::new(numerators, self.denominator).ok()
    }
}

/// Builds the Z panel for one fixed weight. Requires a complete four-model
/// enumeration; Z is measured against the global maximum of the table.
pub fn heatmap(
    result: &GridSearchResult,
    fixed_index: usize,
    fixed_numerator: u32,
) -> Result<HeatmapMatrix> {
    if result.n_models() != 4 {
        return Err(Error::InvalidArgument(format!(
            "heatmaps need exactly 4 models, got {}",
            result.n_models()
        )));
    }
    if !result.is_complete() {
        return Err(Error::InvalidArgument(
            "heatmaps need the complete weight enumeration".into(),
        ));
    }
    let denominator = result.denominator();
    if fixed_index >= 4 {
        return Err(Error::InvalidArgument(format!(
            "fixed index {fixed_index} out of range for 4 models"
        )));
    }
    if fixed_numerator > denominator {
        return Err(Error::InvalidArgument(format!(
            "fixed numerator {fixed_numerator} exceeds denominator {denominator}"
        )));
    }
    let free: Vec<usize> = (0..4).filter(|&k| k != fixed_index).collect();
    let mut matrix = HeatmapMatrix {
        fixed_index,
        fixed_numerator,
        denominator,
        axes: [free[0], free[1], free[2]],
        cells: vec![vec![None; denominator as usize + 1]; denominator as usize + 1],
        argmax: HeatCell {
            horizontal: 0,
            vertical: 0,
            z: f64::NEG_INFINITY,
        },
    };
    let max = result.best_objective;
    let mut best: Option<(f64, WeightVector, HeatCell)> = None;
    for vertical in 0..=denominator {
        for horizontal in 0..=denominator {
            let Some(w) = matrix.weight_vector(horizontal, vertical) else {
                continue;
            };
            let objective = result
                .objective_of(&w)
                .ok_or_else(|| Error::InvalidArgument(format!("{w} missing from table")))?;
            let z = z_transform(objective, max)?;
            matrix.cells[vertical as usize][horizontal as usize] = Some(z);
            let cell = HeatCell {
                horizontal,
                vertical,
                z,
            };
            let better = match &best {
                None => true,
                Some((o, bw, _)) => match objective.total_cmp(o) {
                    Ordering::Greater => true,
                    Ordering::Equal => w < *bw,
                    Ordering::Less => false,
                },
            };
            if better {
                best = Some((objective, w, cell));
            }
        }
    }
    matrix.argmax = best.expect("the origin cell is always present").2;
    Ok(matrix)
}
