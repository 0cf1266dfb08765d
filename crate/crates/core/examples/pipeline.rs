//! The full command-line workflow run in-process: synth, optimize,
//! evaluate, heatmap.

use segfuse::cli::{
    cmd_evaluate, cmd_heatmap, cmd_optimize, cmd_synth, EvaluateArgs, HeatmapArgs, OptimizeArgs, OutDir,
    SynthArgs, WeightArgs,
};
use segfuse::Objective;

fn main() -> segfuse::Result<()> {
    let root = std::env::temp_dir().join("segfuse-pipeline-example");
    let out = |p: &str| OutDir { out: root.join(p) };
    let manifest = cmd_synth(&SynthArgs {
        out: out("fixture"),
        seed: 1,
        width: 48,
        height: 48,
        slices: 6,
        models: 4,
        blobs_min: 1,
        blobs_max: 3,
        radius_min: None,
        radius_max: None,
        profiles: vec![],
        noiseless: false,
    })?;
    let result = cmd_optimize(&OptimizeArgs {
        out: out("optimize"),
        manifest: manifest.clone(),
        denominator: 10,
        threshold: 0.5,
        objective: Objective::Micro,
    })?;
    println!("best {} with pooled IoU {:.4}", result.best, result.best_objective);

    let report = cmd_evaluate(&EvaluateArgs {
        out: out("evaluate"),
        manifest,
        weights: WeightArgs {
            weights: None,
            weights_file: Some(root.join("optimize/best_weights.txt")),
            denominator: 10,
        },
        threshold: 0.5,
        percentile: 0.95,
    })?;
    print!("{}", report.render());

    let panels = cmd_heatmap(&HeatmapArgs {
        out: out("heatmap"),
        table: root.join("optimize/grid_table.csv"),
        fixed: 1,
        only: None,
    })?;
    println!("{} heatmap panels written under {}", panels.len(), root.display());
    Ok(())
}
