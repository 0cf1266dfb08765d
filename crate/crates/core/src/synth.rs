//! Seeded synthetic fixtures: lesion-like truth masks and corrupted model maps.
//!
//! Each slice's truth is a union of axis-aligned filled ellipses. Model `k`
//! starts from the truth blobs and is corrupted by its [`ErrorProfile`]:
//!
//! * `miss_rate`: each truth blob is dropped with this probability;
//! * `clutter_rate`: each of `blob_count.1` attempts adds a spurious blob
//!   with this probability;
//! * `blur_sigma`: the binary rendering is smoothed by a Gaussian kernel
//!   truncated at radius `ceil(3 * sigma)` and clamped to `[0, 1]`.
//!
//! # Random stream
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) keyed with
//! `seed_from_u64(seed)`. Every slice and role draws from its own stream,
//! `stream = (slice_index << 32) | role`, where role 0 is the truth and role
//! `k + 1` is model `k`. Uniform reals are `(next_u64() >> 11) * 2^-53` and
//! bounded integers use the multiply-shift `(next_u64() * span) >> 64`, so
//! output depends only on the seed and never on platform, thread count, or
//! `rand` distribution internals.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::ensemble::LabeledSlice;
use crate::error::{Error, Result};
use crate::raster::{Mask, ProbMap};

/// How one synthetic model departs from the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorProfile {
    pub miss_rate: f64,
    pub clutter_rate: f64,
    pub blur_sigma: f64,
}

impl ErrorProfile {
    pub const NOISELESS: ErrorProfile = ErrorProfile {
        miss_rate: 0.0,
        clutter_rate: 0.0,
        blur_sigma: 0.0,
    };

    pub fn new(miss_rate: f64, clutter_rate: f64, blur_sigma: f64) -> Self {
        ErrorProfile {
            miss_rate,
            clutter_rate,
            blur_sigma,
        }
    }
}

/// Parameters of a synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub n_slices: usize,
    pub n_models: usize,
    /// Inclusive range of truth blobs per slice.
    pub blob_count: (u32, u32),
    /// Inclusive range of ellipse semi-axes, in pixels.
    pub blob_radius: (f64, f64),
    /// One profile per model.
    pub profiles: Vec<ErrorProfile>,
}

impl SynthConfig {
    /// A config with mixed error modes: even-indexed models tend to miss
    /// blobs, odd-indexed ones add clutter, all with mild blur.
    pub fn new(seed: u64, width: usize, height: usize, n_slices: usize, n_models: usize) -> Self {
        let max_radius = (width.min(height) as f64 / 4.0).max(1.0);
        SynthConfig {
            seed,
            width,
            height,
            n_slices,
            n_models,
            blob_count: (1, 3),
            blob_radius: (1.0f64.min(max_radius), max_radius),
            profiles: (0..n_models).map(Self::mixed_profile).collect(),
        }
    }

    fn mixed_profile(k: usize) -> ErrorProfile {
        let step = (k / 2) as f64 * 0.05;
        if k % 2 == 0 {
            ErrorProfile::new(0.25 + step, 0.05, 0.8 + step)
        } else {
            ErrorProfile::new(0.05, 0.25 + step, 1.0 + step)
        }
    }

    /// Replaces every model's profile with `profile`.
    pub fn with_uniform_profile(mut self, profile: ErrorProfile) -> Self {
        self.profiles = vec![profile; self.n_models];
        self
    }

    pub fn with_profiles(mut self, profiles: Vec<ErrorProfile>) -> Self {
        self.profiles = profiles;
        self
    }

    pub fn with_blob_count(mut self, lo: u32, hi: u32) -> Self {
        self.blob_count = (lo, hi);
        self
    }

    pub fn with_blob_radius(mut self, lo: f64, hi: f64) -> Self {
        self.blob_radius = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("raster must be nonempty, got {}x{}", self.width, self.height));
        }
        if self.n_slices == 0 {
            return bad("need at least one slice".into());
        }
        if self.n_models < 2 {
            return bad(format!("need at least 2 models, got {}", self.n_models));
        }
        if self.profiles.len() != self.n_models {
            return bad(format!(
                "{} error profiles for {} models",
                self.profiles.len(),
                self.n_models
            ));
        }
        let (lo, hi) = self.blob_count;
        if lo > hi {
            return bad(format!("blob count range {lo}..={hi} is empty"));
        }
        let (rlo, rhi) = self.blob_radius;
        let limit = self.width.max(self.height) as f64 / 2.0;
        if !(rlo.is_finite() && rhi.is_finite() && rlo > 0.0 && rlo <= rhi && rhi <= limit) {
            return bad(format!(
                "blob radius range {rlo}..={rhi} must satisfy 0 < lo <= hi <= {limit}"
            ));
        }
        for (k, p) in self.profiles.iter().enumerate() {
            let unit = |x: f64| (0.0..=1.0).contains(&x);
            if !unit(p.miss_rate) || !unit(p.clutter_rate) {
                return bad(format!("model {k}: rates must lie in [0, 1]"));
            }
            if !(p.blur_sigma.is_finite() && p.blur_sigma >= 0.0) {
                return bad(format!("model {k}: blur sigma must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Axis-aligned filled ellipse in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center_row: f64,
    pub center_col: f64,
    pub radius_row: f64,
    pub radius_col: f64,
}

impl Ellipse {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let dr = (row as f64 - self.center_row) / self.radius_row;
        let dc = (col as f64 - self.center_col) / self.radius_col;
        dr * dr + dc * dc <= 1.0
    }
}

/// Rasterises the union of `blobs`.
pub fn render_ellipses(width: usize, height: usize, blobs: &[Ellipse]) -> Result<Mask> {
    let bits = (0..height)
        .flat_map(|r| (0..width).map(move |c| (r, c)))
        .map(|(r, c)| blobs.iter().any(|b| b.contains(r, c)))
        .collect();
    Mask::new(width, height, bits)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Turns a binary mask into a probability map, blurring with a truncated
/// Gaussian when `sigma > 0`. Pixels outside the raster count as background.
pub fn soften(mask: &Mask, sigma: f64) -> Result<ProbMap> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("blur sigma {sigma} is invalid")));
    }
    if sigma == 0.0 {
        return Ok(mask.to_probmap());
    }
    let (w, h) = mask.dims();
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let src: Vec<f64> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let convolve = |get: &dyn Fn(i64) -> f64, pos: i64| -> f64 {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * get(pos + i as i64 - radius))
            .sum()
    };
    let mut horiz = vec![0.0; w * h];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        let get = |c: i64| if (0..w as i64).contains(&c) { row[c as usize] } else { 0.0 };
        for c in 0..w {
            horiz[r * w + c] = convolve(&get, c as i64);
        }
    }
    let mut out = vec![0.0f32; w * h];
    for c in 0..w {
        let get = |r: i64| {
            if (0..h as i64).contains(&r) {
                horiz[r as usize * w + c]
            } else {
                0.0
            }
        };
        for r in 0..h {
            out[r * w + c] = convolve(&get, r as i64).clamp(0.0, 1.0) as f32;
        }
    }
    ProbMap::new(w, h, out)
}

/// Seed-keyed draws on top of ChaCha8.
struct Stream(ChaCha8Rng);

impl Stream {
    fn new(seed: u64, slice: usize, role: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((slice as u64) << 32) | role);
        Stream(rng)
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn int_inclusive(&mut self, lo: u32, hi: u32) -> u32 {
        let span = u128::from(hi - lo) + 1;
        lo + ((u128::from(self.0.next_u64()) * span) >> 64) as u32
    }

    fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    fn ellipse(&mut self, cfg: &SynthConfig) -> Ellipse {
        let (rlo, rhi) = cfg.blob_radius;
        Ellipse {
            center_row: self.range(0.0, (cfg.height - 1) as f64),
            center_col: self.range(0.0, (cfg.width - 1) as f64),
            radius_row: self.range(rlo, rhi),
            radius_col: self.range(rlo, rhi),
        }
    }
}

/// A generated slice together with the blobs behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSlice {
    pub slice: LabeledSlice,
    pub truth_blobs: Vec<Ellipse>,
}

fn generate_slice(cfg: &SynthConfig, index: usize) -> Result<SynthSlice> {
    let mut truth_rng = Stream::new(cfg.seed, index, 0);
    let count = truth_rng.int_inclusive(cfg.blob_count.0, cfg.blob_count.1);
    let truth_blobs: Vec<Ellipse> = (0..count).map(|_| truth_rng.ellipse(cfg)).collect();
    let truth = render_ellipses(cfg.width, cfg.height, &truth_blobs)?;
    let maps = cfg
        .profiles
        .iter()
        .enumerate()
        .map(|(k, profile)| {
            let mut rng = Stream::new(cfg.seed, index, k as u64 + 1);
            let mut blobs: Vec<Ellipse> = truth_blobs
                .iter()
                .filter(|_| !rng.chance(profile.miss_rate))
                .copied()
                .collect();
            for _ in 0..cfg.blob_count.1 {
                if rng.chance(profile.clutter_rate) {
                    blobs.push(rng.ellipse(cfg));
                }
            }
            let mask = render_ellipses(cfg.width, cfg.height, &blobs)?;
            soften(&mask, profile.blur_sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthSlice {
        slice: LabeledSlice::new(truth, maps)?,
        truth_blobs,
    })
}

/// Generates the fixture set with its blob geometry.
pub fn generate_detailed(cfg: &SynthConfig) -> Result<Vec<SynthSlice>> {
    cfg.validate()?;
    (0..cfg.n_slices)
        .into_par_iter()
        .map(|i| generate_slice(cfg, i))
        .collect()
}

/// Generates `n_slices` slices of truth plus one probability map per model.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<LabeledSlice>> {
    Ok(generate_detailed(cfg)?
        .into_iter()
        .map(|s| s.slice)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{fuse, WeightVector};
    use crate::metrics::slice_metrics;
    use crate::raster::confusion;

    #[test]
    fn noiseless_models_match_truth() {
        let cfg = SynthConfig::new(7, 24, 20, 6, 4).with_uniform_profile(ErrorProfile::NOISELESS);
        for s in generate(&cfg).unwrap() {
            for m in &s.maps {
                let pred = m.binarize(0.5).unwrap();
                assert_eq!(pred, s.truth);
                assert_eq!(slice_metrics(&pred, &s.truth).unwrap().iou, 1.0);
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = SynthConfig::new(42, 16, 16, 4, 3);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 43, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn values_stay_in_unit_interval() {
        let cfg = SynthConfig::new(3, 20, 20, 5, 4)
            .with_uniform_profile(ErrorProfile::new(0.3, 0.6, 2.5));
        for s in generate(&cfg).unwrap() {
            for m in &s.maps {
                assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn first_slice_is_stable_across_slice_counts() {
        let a = generate(&SynthConfig::new(9, 16, 16, 1, 4)).unwrap();
        let b = generate(&SynthConfig::new(9, 16, 16, 5, 4)).unwrap();
        assert_eq!(a[0], b[0]);
    }

    #[test]
    fn rejects_invalid_configs() {
        let ok = SynthConfig::new(1, 16, 16, 2, 2);
        assert!(ok.validate().is_ok());
        assert!(SynthConfig { n_models: 1, ..ok.clone() }.validate().is_err());
        assert!(SynthConfig { n_slices: 0, ..ok.clone() }.validate().is_err());
        assert!(ok.clone().with_blob_count(3, 1).validate().is_err());
        assert!(ok.clone().with_blob_radius(0.0, 2.0).validate().is_err());
        assert!(ok.clone().with_blob_radius(2.0, 100.0).validate().is_err());
        assert!(ok
            .clone()
            .with_uniform_profile(ErrorProfile::new(1.5, 0.0, 0.0))
            .validate()
            .is_err());
        assert!(ok
            .clone()
            .with_uniform_profile(ErrorProfile::new(0.0, 0.0, -1.0))
            .validate()
            .is_err());
        assert!(ok.with_profiles(vec![ErrorProfile::NOISELESS]).validate().is_err());
    }

    #[test]
    fn soften_preserves_large_interiors() {
        let blob = Ellipse {
            center_row: 10.0,
            center_col: 10.0,
            radius_row: 6.0,
            radius_col: 6.0,
        };
        let mask = render_ellipses(21, 21, &[blob]).unwrap();
        let map = soften(&mask, 1.0).unwrap();
        assert!(map.get(10, 10) > 0.99);
        assert!(map.get(0, 0) < 0.01);
        assert!(map.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn gaussian_kernel_is_normalised() {
        let k = gaussian_kernel(1.3);
        assert_eq!(k.len(), 2 * 4 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_misses_are_recovered_by_equal_fusion() {
        let left = Ellipse {
            center_row: 6.0,
            center_col: 5.0,
            radius_row: 3.0,
            radius_col: 3.0,
        };
        let right = Ellipse {
            center_col: 15.0,
            ..left
        };
        let truth = render_ellipses(20, 12, &[left, right]).unwrap();
        let model_a = soften(&render_ellipses(20, 12, &[left]).unwrap(), 0.0).unwrap();
        let model_b = soften(&render_ellipses(20, 12, &[right]).unwrap(), 0.0).unwrap();
        let tp = |m: &ProbMap| confusion(&m.binarize(0.5).unwrap(), &truth).unwrap().tp;
        let fused = fuse(&[model_a.clone(), model_b.clone()], &WeightVector::new(vec![1, 1], 2).unwrap())
            .unwrap();
        // Brute-force pixel counts: each blob alone, then both.
        let (ta, tb, tf) = (tp(&model_a), tp(&model_b), tp(&fused));
        assert_eq!(tf, ta + tb);
        assert!(tf > ta.max(tb));
        assert_eq!(tf as usize, truth.count_foreground());
    }
}
