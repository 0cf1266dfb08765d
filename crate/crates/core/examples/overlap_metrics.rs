//! Confusion counts and overlap scores for a small predicted/true mask pair.

use segfuse::metrics::{f1, iou, precision, recall};
use segfuse::raster::{confusion, Mask};

fn mask(rows: &[&str]) -> Mask {
    let width = rows[0].len();
    let bits = rows.iter().flat_map(|r| r.bytes().map(|b| b == b'#')).collect();
    Mask::new(width, rows.len(), bits).unwrap()
}

fn main() -> segfuse::Result<()> {
    let truth = mask(&["......", ".####.", ".####.", "......"]);
    let pred = mask(&["......", "..####", "..####", "......"]);
    let c = confusion(&pred, &truth)?;
    println!("tp={} fp={} fn={} tn={}", c.tp, c.fp, c.fn_, c.tn);
    let (p, r) = (precision(&c), recall(&c));
    println!("IoU={:.4} precision={p:.4} recall={r:.4} F1={:.4}", iou(&c), f1(p, r));

    // Two empty masks agree perfectly.
    let empty = Mask::empty(6, 4)?;
    println!("empty vs empty IoU={}", iou(&confusion(&empty, &empty)?));
    Ok(())
}
