//! Exhaustive search over the weight simplex on a synthetic cohort.

use segfuse::ensemble::{evaluate_weights, simplex_size};
use segfuse::synth::{generate, SynthConfig};
use segfuse::{enumerate_simplex, grid_search, Objective, WeightVector};

fn main() -> segfuse::Result<()> {
    println!("4 models, step 0.1: {} vectors", simplex_size(4, 10));
    for w in &enumerate_simplex(4, 10)?[..3] {
        println!("  {w}");
    }

    let slices = generate(&SynthConfig::new(7, 32, 32, 6, 4))?;
    for objective in [Objective::Micro, Objective::Macro] {
        let result = grid_search(&slices, 10, 0.5, objective)?;
        println!("{objective}: best {} = {:.4}", result.best, result.best_objective);
        for k in 0..4 {
            let alone = evaluate_weights(&slices, &WeightVector::one_hot(4, k, 10)?, 0.5, objective)?;
            println!("  model {} alone = {alone:.4}", k + 1);
        }
    }
    Ok(())
}
