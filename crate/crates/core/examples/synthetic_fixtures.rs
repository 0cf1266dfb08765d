//! Seeded synthetic slices with per-model error profiles.

use segfuse::confusion;
use segfuse::metrics::iou;
use segfuse::synth::{generate, ErrorProfile, SynthConfig};

fn main() -> segfuse::Result<()> {
    let cfg = SynthConfig::new(3, 48, 48, 4, 3).with_profiles(vec![
        ErrorProfile::NOISELESS,
        ErrorProfile::new(0.5, 0.0, 1.0),
        ErrorProfile::new(0.0, 0.8, 1.5),
    ]);
    for (i, slice) in generate(&cfg)?.iter().enumerate() {
        let scores: Vec<String> = slice
            .maps
            .iter()
            .map(|m| Ok(format!("{:.3}", iou(&confusion(&m.binarize(0.5)?, &slice.truth)?))))
            .collect::<segfuse::Result<_>>()?;
        println!("slice {i}: {} truth pixels, model IoU {}", slice.truth.count_foreground(), scores.join(" "));
    }
    Ok(())
}
