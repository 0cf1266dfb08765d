//! Command-line front end.
//!
//! Each subcommand is a plain function over its argument struct so it can be
//! driven from tests and examples as well as from the `segfuse` binary.
//! Exit codes: 0 on success, 1 for computation-domain errors, 2 for I/O and
//! parse errors (including bad command-line syntax).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::ensemble::{
    fuse, fused_counts, grid_search, heatmap, HeatmapMatrix, LabeledSlice, Objective, WeightVector,
    DEFAULT_DENOMINATOR,
};
use crate::error::{Error, Result};
use crate::io::{
    fmt4, read_best_weights, read_grid_table, read_manifest, write_best_weights, write_grid_table,
    write_heatmap, write_manifest, write_mask, write_probmap, write_report, Manifest, ManifestEntry,
    Report,
};
use crate::metrics::{slice_metrics_with_percentile, HD95_PERCENTILE};
use crate::raster::DEFAULT_THRESHOLD;
use crate::synth::{generate, ErrorProfile, SynthConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SEGFUSE_OUT_DIR";

/// Model names used for four-model fixtures, in weight order.
pub const REFERENCE_MODEL_NAMES: [&str; 4] = ["PAN", "FPN", "Unet", "DeepLabv3+"];

#[derive(Debug, Parser)]
#[command(name = "segfuse", version, about = "Fuse and evaluate segmentation probability maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic fixture tree and its manifest
    Synth(SynthArgs),
    /// Write the fused probability map and thresholded mask of every slice
    Fuse(FuseArgs),
    /// Score every weight vector on the grid and record the best one
    Optimize(OptimizeArgs),
    /// Write per-slice and aggregate metrics for one weight vector
    Evaluate(EvaluateArgs),
    /// Turn a grid table into Z panels and a per-panel maxima summary
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutDir {
    /// Output directory
    #[arg(long = "out", env = OUT_DIR_ENV, default_value = "segfuse-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct WeightArgs {
    /// Comma-separated exact weights, e.g. 0.2,0.1,0.6,0.1 (default: that preset)
    #[arg(long, conflicts_with = "weights_file")]
    pub weights: Option<String>,
    /// Best-weights file written by `optimize`
    #[arg(long)]
    pub weights_file: Option<PathBuf>,
    /// Grid denominator the weights must fall on (10 means steps of 0.1)
    #[arg(long, default_value_t = DEFAULT_DENOMINATOR)]
    pub denominator: u32,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub out: OutDir,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub slices: usize,
    #[arg(long, default_value_t = 4)]
    pub models: usize,
    /// Fewest truth blobs per slice
    #[arg(long, default_value_t = 1)]
    pub blobs_min: u32,
    /// Most truth blobs per slice
    #[arg(long, default_value_t = 3)]
    pub blobs_max: u32,
    /// Smallest blob semi-axis in pixels (default 1)
    #[arg(long)]
    pub radius_min: Option<f64>,
    /// Largest blob semi-axis in pixels (default a quarter of the short side)
    #[arg(long)]
    pub radius_max: Option<f64>,
    /// Per-model error profile `miss,clutter,sigma`; give once per model
    #[arg(long = "profile", value_parser = parse_profile)]
    pub profiles: Vec<ErrorProfile>,
    /// Make every model reproduce the truth exactly
    #[arg(long, conflicts_with = "profiles")]
    pub noiseless: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub out: OutDir,
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub out: OutDir,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DENOMINATOR)]
    pub denominator: u32,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// micro (pooled counts) or macro (mean per-slice IoU)
    #[arg(long, default_value_t = Objective::Micro)]
    pub objective: Objective,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub out: OutDir,
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Boundary-distance percentile
    #[arg(long, default_value_t = HD95_PERCENTILE)]
    pub percentile: f64,
}

#[derive(Debug, Clone, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub out: OutDir,
    /// Grid table written by `optimize`
    #[arg(long)]
    pub table: PathBuf,
    /// Which weight is held fixed, 1-based
    #[arg(long, default_value_t = 1)]
    pub fixed: usize,
    /// Emit only the panel with this fixed numerator
    #[arg(long)]
    pub only: Option<u32>,
}

fn parse_profile(s: &str) -> std::result::Result<ErrorProfile, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [miss, clutter, sigma] => Ok(ErrorProfile::new(miss, clutter, sigma)),
        _ => Err("expected miss,clutter,sigma".into()),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Resolves weights from the flags without touching the manifest. Inline
/// weights are validated here, before any file is read.
fn requested_weights(args: &WeightArgs) -> Result<Option<WeightVector>> {
    match (&args.weights, &args.weights_file) {
        (Some(text), _) => WeightVector::parse(text, args.denominator).map(Some),
        (None, Some(path)) => read_best_weights(path).map(Some),
        (None, None) => Ok(None),
    }
}

fn weights_for(requested: Option<WeightVector>, n_models: usize) -> Result<WeightVector> {
    let w = match requested {
        Some(w) => w,
        None if n_models == 4 => WeightVector::reference_preset(),
        None => {
            return Err(Error::InvalidArgument(format!(
                "no weights given and the default preset needs 4 models, manifest has {n_models}"
            )))
        }
    };
    if w.len() != n_models {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {n_models} models",
            w.len()
        )));
    }
    Ok(w)
}

fn load(manifest: &Path) -> Result<(Manifest, Vec<(String, LabeledSlice)>)> {
    let manifest = read_manifest(manifest)?;
    let slices = manifest.load_slices()?;
    Ok((manifest, slices))
}

fn default_model_names(n: usize) -> Vec<String> {
    if n == REFERENCE_MODEL_NAMES.len() {
        REFERENCE_MODEL_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|k| format!("model_{k}")).collect()
    }
}

/// Writes a synthetic fixture tree and returns the manifest path.
///
/// Layout: `truth/<id>.pgm`, `model_<k>/<id>.pfm`, `manifest.csv`.
pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf> {
    let mut cfg = SynthConfig::new(args.seed, args.width, args.height, args.slices, args.models)
        .with_blob_count(args.blobs_min, args.blobs_max);
    if args.radius_min.is_some() || args.radius_max.is_some() {
        let (lo, hi) = cfg.blob_radius;
        cfg = cfg.with_blob_radius(args.radius_min.unwrap_or(lo), args.radius_max.unwrap_or(hi));
    }
    if args.noiseless {
        cfg = cfg.with_uniform_profile(ErrorProfile::NOISELESS);
    } else if !args.profiles.is_empty() {
        cfg = cfg.with_profiles(args.profiles.clone());
    }
    let slices = generate(&cfg)?;
    let out = &args.out.out;
    let model_dirs: Vec<String> = (1..=args.models).map(|k| format!("model_{k}")).collect();
    for dir in std::iter::once("truth").chain(model_dirs.iter().map(String::as_str)) {
        create_dir(&out.join(dir))?;
    }
    let width = cfg.n_slices.saturating_sub(1).to_string().len().max(3);
    let entries = slices
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let id = format!("slice_{i:0width$}");
            let truth = PathBuf::from("truth").join(format!("{id}.pgm"));
            write_mask(out.join(&truth), &s.truth)?;
            let models = model_dirs
                .iter()
                .zip(&s.maps)
                .map(|(dir, map)| {
                    let p = PathBuf::from(dir).join(format!("{id}.pfm"));
                    write_probmap(out.join(&p), map)?;
                    Ok(p)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ManifestEntry {
                slice_id: id,
                truth,
                models,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(default_model_names(args.models), entries)?;
    let path = out.join("manifest.csv");
    write_manifest(&path, &manifest)?;
    Ok(path)
}

/// Writes `fused/<id>.pfm` and `fused/<id>.pgm` per slice; returns the
/// weights used.
pub fn cmd_fuse(args: &FuseArgs) -> Result<WeightVector> {
    let requested = requested_weights(&args.weights)?;
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(Error::InvalidArgument(format!(
            "threshold {} is outside [0, 1]",
            args.threshold
        )));
    }
    let (manifest, slices) = load(&args.manifest)?;
    let w = weights_for(requested, manifest.n_models())?;
    let dir = args.out.out.join("fused");
    create_dir(&dir)?;
    for (id, slice) in &slices {
        let fused = fuse(&slice.maps, &w)?;
        write_probmap(dir.join(format!("{id}.pfm")), &fused)?;
        write_mask(dir.join(format!("{id}.pgm")), &fused.binarize(args.threshold)?)?;
    }
    Ok(w)
}

/// Runs the grid search; writes `grid_table.csv` and `best_weights.txt`.
pub fn cmd_optimize(args: &OptimizeArgs) -> Result<crate::ensemble::GridSearchResult> {
    let (manifest, slices) = load(&args.manifest)?;
    let slices: Vec<LabeledSlice> = slices.into_iter().map(|(_, s)| s).collect();
    let result = grid_search(&slices, args.denominator, args.threshold, args.objective)?;
    create_dir(&args.out.out)?;
    write_grid_table(args.out.out.join("grid_table.csv"), &result)?;
    write_best_weights(
        args.out.out.join("best_weights.txt"),
        &result,
        &manifest.model_names,
    )?;
    Ok(result)
}

/// Fuses, thresholds and scores every slice; writes `report.csv`.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Report> {
    let requested = requested_weights(&args.weights)?;
    let (manifest, slices) = load(&args.manifest)?;
    let w = weights_for(requested, manifest.n_models())?;
    let labeled: Vec<LabeledSlice> = slices.iter().map(|(_, s)| s.clone()).collect();
    let counts = fused_counts(&labeled, &w, args.threshold)?;
    let rows = slices
        .par_iter()
        .map(|(id, s)| {
            let pred = fuse(&s.maps, &w)?.binarize(args.threshold)?;
            let record = slice_metrics_with_percentile(&pred, &s.truth, args.percentile)?;
            Ok((id.clone(), record))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = Report::new(rows, &counts.iter().copied().sum());
    create_dir(&args.out.out)?;
    write_report(args.out.out.join("report.csv"), &report)?;
    Ok(report)
}

/// Writes one panel per fixed numerator (`heatmap_w<k>_<value>.csv`) and a
/// `heatmap_summary.csv` listing each panel's maximum.
pub fn cmd_heatmap(args: &HeatmapArgs) -> Result<Vec<HeatmapMatrix>> {
    if args.fixed == 0 || args.fixed > 4 {
        return Err(Error::InvalidArgument(format!(
            "--fixed must name a weight 1..=4, got {}",
            args.fixed
        )));
    }
    let result = read_grid_table(&args.table)?;
    let d = result.denominator();
    let fixed_index = args.fixed - 1;
    let numerators: Vec<u32> = match args.only {
        Some(n) if n > d => {
            return Err(Error::InvalidArgument(format!(
                "fixed numerator {n} exceeds denominator {d}"
            )))
        }
        Some(n) => vec![n],
        None => (0..=d).collect(),
    };
    let panels = numerators
        .iter()
        .map(|&n| heatmap(&result, fixed_index, n))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&args.out.out)?;
    let mut summary = String::from("w_1,w_2,w_3,w_4,Z\n");
    for panel in &panels {
        let name = format!(
            "heatmap_w{}_{}.csv",
            args.fixed,
            crate::ensemble::format_grid_value(panel.fixed_numerator, d)
        );
        write_heatmap(args.out.out.join(name), panel)?;
        let best = panel
            .weight_vector(panel.argmax.horizontal, panel.argmax.vertical)
            .expect("argmax cell is on the simplex");
        summary.push_str(&best.format_weights().join(","));
        summary.push(',');
        summary.push_str(&fmt4(panel.argmax.z));
        summary.push('\n');
    }
    let path = args.out.out.join("heatmap_summary.csv");
    fs::write(&path, summary).map_err(|e| Error::Io { path, source: e })?;
    Ok(panels)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => {
            let path = cmd_synth(a)?;
            println!("wrote {}", path.display());
        }
        Command::Fuse(a) => {
            let w = cmd_fuse(a)?;
            println!("fused with weights {w} into {}", a.out.out.join("fused").display());
        }
        Command::Optimize(a) => {
            let r = cmd_optimize(a)?;
            println!(
                "{} weight vectors scored; best {} with {} IoU {}",
                r.table.len(),
                r.best,
                a.objective,
                fmt4(r.best_objective)
            );
        }
        Command::Evaluate(a) => {
            let r = cmd_evaluate(a)?;
            println!(
                "{} slices: IoU {} F1 {} H {}",
                r.rows.len(),
                fmt4(r.aggregate.iou),
                fmt4(r.aggregate.f1),
                fmt4(r.aggregate.h)
            );
        }
        Command::Heatmap(a) => {
            let panels = cmd_heatmap(a)?;
            println!("wrote {} panels to {}", panels.len(), a.out.out.display());
        }
    }
    Ok(())
}
