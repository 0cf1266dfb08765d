use std::path::Path;

use proptest::prelude::*;
use segfuse::io::{
    decode_mask, decode_probmap, encode_mask, encode_probmap, read_manifest, read_mask, read_probmap,
    write_mask, write_probmap,
};
use segfuse::{Error, Mask, ProbMap};

fn touch_fixture(dir: &Path) {
    write_mask(dir.join("t.pgm"), &Mask::empty(2, 2).unwrap()).unwrap();
    for k in 0..4 {
        write_probmap(dir.join(format!("m{k}.pfm")), &ProbMap::filled(2, 2, 0.5).unwrap()).unwrap();
    }
}

const HEADER: &str = "slice_id,truth,PAN,FPN,Unet,DeepLabv3+\n";

#[test]
fn manifest_keeps_model_column_order() {
    let dir = tempfile::tempdir().unwrap();
    touch_fixture(dir.path());
    let body = format!("{HEADER}a,t.pgm,m0.pfm,m1.pfm,m2.pfm,m3.pfm\nb,t.pgm,m3.pfm,m2.pfm,m1.pfm,m0.pfm\n");
    std::fs::write(dir.path().join("manifest.csv"), body).unwrap();
    let m = read_manifest(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(m.model_names, ["PAN", "FPN", "Unet", "DeepLabv3+"]);
    assert_eq!(m.entries.len(), 2);
    assert_eq!(m.entries[1].models[0], dir.path().join("m3.pfm"));
    assert_eq!(m.load_slices().unwrap().len(), 2);
}

#[test]
fn manifest_rejects_duplicates_ragged_rows_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    touch_fixture(dir.path());
    let path = dir.path().join("manifest.csv");
    let row = "a,t.pgm,m0.pfm,m1.pfm,m2.pfm,m3.pfm\n";

    std::fs::write(&path, format!("{HEADER}{row}{row}")).unwrap();
    let err = read_manifest(&path).unwrap_err();
    assert!(matches!(err, Error::Csv { line: 3, .. }), "{err}");

    std::fs::write(&path, format!("{HEADER}a,t.pgm,m0.pfm\n")).unwrap();
    let err = read_manifest(&path).unwrap_err();
    assert!(matches!(err, Error::Csv { .. }) && err.to_string().contains("ragged"), "{err}");

    std::fs::write(&path, format!("{HEADER}a,t.pgm,m0.pfm,m1.pfm,m2.pfm,gone.pfm\n")).unwrap();
    let err = read_manifest(&path).unwrap_err();
    assert!(matches!(&err, Error::MissingFile { path } if path.ends_with("gone.pfm")));
    assert_eq!(err.exit_code(), 2);

    std::fs::write(&path, "id,truth,PAN\n").unwrap();
    assert!(matches!(read_manifest(&path).unwrap_err(), Error::Csv { line: 1, .. }));

    let err = read_manifest(dir.path().join("absent.csv")).unwrap_err();
    assert!(matches!(err, Error::MissingFile { .. }));
}

#[test]
fn mismatched_raster_shapes_are_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    touch_fixture(dir.path());
    write_probmap(dir.path().join("wide.pfm"), &ProbMap::filled(3, 2, 0.5).unwrap()).unwrap();
    let path = dir.path().join("manifest.csv");
    std::fs::write(&path, format!("{HEADER}a,t.pgm,m0.pfm,wide.pfm,m2.pfm,m3.pfm\n")).unwrap();
    let err = read_manifest(&path).unwrap().load_slices().unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}

#[test]
fn corrupt_files_carry_path_and_offset() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.pgm");
    std::fs::write(&p, b"P5\n1 1\n255\n\x07").unwrap();
    match read_mask(&p).unwrap_err() {
        Error::Parse { path, offset, .. } => {
            assert_eq!(path, p);
            assert_eq!(offset, 11);
        }
        other => panic!("{other}"),
    }
    let p = dir.path().join("bad.pfm");
    std::fs::write(&p, b"Pf\n1 1\n-1.0\n\0\0\0\0\0").unwrap();
    assert!(matches!(read_probmap(&p).unwrap_err(), Error::Parse { offset: 16, .. }));
}

fn mask_strategy() -> impl Strategy<Value = Mask> {
    (1usize..16, 1usize..16).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<bool>(), w * h).prop_map(move |bits| Mask::new(w, h, bits).unwrap())
    })
}

fn map_strategy() -> impl Strategy<Value = ProbMap> {
    (1usize..16, 1usize..16).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f32..=1.0, w * h).prop_map(move |v| ProbMap::new(w, h, v).unwrap())
    })
}

proptest! {
    #[test]
    fn pgm_round_trip(mask in mask_strategy()) {
        let bytes = encode_mask(&mask);
        let back = decode_mask(&bytes).unwrap();
        prop_assert_eq!(&back, &mask);
        prop_assert_eq!(encode_mask(&back), bytes);
    }

    #[test]
    fn pfm_round_trip(map in map_strategy()) {
        let bytes = encode_probmap(&map);
        let back = decode_probmap(&bytes).unwrap();
        prop_assert_eq!(encode_probmap(&back), bytes);
        prop_assert!(back.values().iter().zip(map.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncation_is_always_detected(map in map_strategy(), cut in 1usize..8) {
        let bytes = encode_probmap(&map);
        let cut = cut.min(bytes.len());
        prop_assert!(decode_probmap(&bytes[..bytes.len() - cut]).is_err());
    }
}
