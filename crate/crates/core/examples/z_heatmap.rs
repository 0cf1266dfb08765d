//! Z-transformed heatmap panels over a grid-search table.

use segfuse::synth::{generate, SynthConfig};
use segfuse::{grid_search, heatmap, Objective};

fn main() -> segfuse::Result<()> {
    let slices = generate(&SynthConfig::new(11, 24, 24, 5, 4))?;
    let result = grid_search(&slices, 10, 0.5, Objective::Micro)?;
    for fixed in [0, 2, 5] {
        let panel = heatmap(&result, 0, fixed)?;
        let best = panel.weight_vector(panel.argmax.horizontal, panel.argmax.vertical).unwrap();
        println!(
            "w_1 = {:.1}: {} cells, peak Z {:.3} at {best}",
            fixed as f64 / 10.0,
            panel.present_cells(),
            panel.argmax.z
        );
    }
    Ok(())
}
