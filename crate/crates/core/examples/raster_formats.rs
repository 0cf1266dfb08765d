//! PGM masks and PFM probability maps, including a decode error.

use segfuse::io::{decode_mask, decode_probmap, encode_mask, encode_probmap};
use segfuse::{Mask, ProbMap};

fn main() -> segfuse::Result<()> {
    let mask = Mask::from_points(3, 2, &[(0, 1), (1, 2)])?;
    let pgm = encode_mask(&mask);
    println!("PGM {} bytes: {:?}", pgm.len(), String::from_utf8_lossy(&pgm));
    assert_eq!(decode_mask(&pgm).unwrap(), mask);

    let map = ProbMap::new(2, 2, vec![0.0, 0.25, 0.5, 1.0])?;
    let pfm = encode_probmap(&map);
    println!("PFM {} bytes, header {:?}", pfm.len(), String::from_utf8_lossy(&pfm[..12]));
    assert_eq!(decode_probmap(&pfm).unwrap(), map);

    let (offset, kind) = decode_probmap(&pfm[..pfm.len() - 2]).unwrap_err();
    println!("truncated PFM: byte {offset}: {kind}");
    Ok(())
}
