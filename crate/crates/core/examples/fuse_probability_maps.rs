//! Weighted fusion of per-model probability maps on the 0.1 grid.

use segfuse::{fuse, ProbMap, WeightVector};

fn main() -> segfuse::Result<()> {
    let maps = vec![
        ProbMap::new(3, 1, vec![0.9, 0.2, 0.5])?,
        ProbMap::new(3, 1, vec![0.1, 0.8, 0.5])?,
        ProbMap::new(3, 1, vec![0.6, 0.6, 0.0])?,
        ProbMap::new(3, 1, vec![1.0, 0.0, 0.5])?,
    ];
    for text in ["0.2,0.1,0.6,0.1", "0.25,0.25,0.25,0.25", "0,0,1,0"] {
        let denominator = if text.contains("25") { 100 } else { 10 };
        let w = WeightVector::parse(text, denominator)?;
        let fused = fuse(&maps, &w)?;
        let mask = fused.binarize(0.5)?;
        println!("{w}: fused={:?} mask={:?}", fused.values(), mask.bits());
    }
    // Weights off the grid or not summing to one are rejected.
    println!("{}", WeightVector::parse("0.3,0.3,0.3,0.3", 10).unwrap_err());
    Ok(())
}
