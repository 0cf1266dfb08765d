//! Hausdorff distance, its 95th percentile and the log-sum aggregate.

use segfuse::metrics::{aggregate_h, hausdorff, hd95, slice_metrics};
use segfuse::raster::Mask;

fn main() -> segfuse::Result<()> {
    let a: Vec<(usize, usize)> = (0..36).map(|i| (i / 6, i % 6)).collect();
    let mut b = a.clone();
    b.push((20, 20));
    // One outlier dominates the maximum but not the percentile.
    println!("hausdorff={:.4} hd95={:.4}", hausdorff(&a, &b, 0.0), hd95(&a, &b, 0.0));

    // A missed lesion costs the raster diagonal.
    let truth = Mask::from_points(10, 10, &[(4, 4), (4, 5)])?;
    let record = slice_metrics(&Mask::empty(10, 10)?, &truth)?;
    println!("missed lesion: iou={} hd95={:.4}", record.iou, record.hd95);

    let per_slice = [9.0, 99.0, 0.0];
    println!("H over {per_slice:?} = {:.4}", aggregate_h(&per_slice));
    Ok(())
}
