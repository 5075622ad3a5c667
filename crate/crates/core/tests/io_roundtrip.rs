mod common;

use noisyplr::experiments::{gen_synthetic, SyntheticSpec};
use noisyplr::io::{parse_libsvm, read_libsvm_file, split_dataset, write_libsvm, Manifest};
use proptest::prelude::*;

#[test]
fn synthetic_dataset_survives_libsvm_text() {
    let (x, y) = gen_synthetic(&SyntheticSpec::new(300, 12)).unwrap();
    let mut buf = Vec::new();
    write_libsvm(&x, &y, &mut buf).unwrap();
    let back = parse_libsvm(buf.as_slice(), Some(x.ncols())).unwrap();
    assert_eq!(back.y, y);
    let a = x.dense_rows();
    let b = back.x.dense_rows();
    for (ra, rb) in a.iter().zip(&b) {
        assert!(common::max_abs_diff(ra, rb) <= 1e-12);
    }
}

#[test]
fn file_round_trip_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.libsvm");
    let (x, y) = gen_synthetic(&SyntheticSpec::new(40, 2)).unwrap();
    write_libsvm(&x, &y, std::fs::File::create(&path).unwrap()).unwrap();
    let data = read_libsvm_file(&path, None).unwrap();
    assert_eq!(data.len(), 40);
    let (train, test) = split_dataset(&data, 30, 5).unwrap();
    assert_eq!((train.len(), test.len()), (30, 10));
    assert!(read_libsvm_file(&dir.path().join("missing"), None).is_err());
}

#[test]
fn manifest_is_written_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::new("fit", vec!["--n".into(), "5".into()], serde_json::json!({"n": 5}), vec![3]);
    m.outputs = vec!["coefficients.json".into()];
    m.write(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let back: Manifest = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
}

proptest! {
    #[test]
    fn arbitrary_sparse_rows_round_trip(
        rows in prop::collection::vec(prop::collection::btree_map(0usize..20, -1e6f64..1e6, 0..6), 1..15),
        labels in prop::collection::vec(0u8..2, 15),
    ) {
        let mut text = String::new();
        for (i, row) in rows.iter().enumerate() {
            text.push_str(if labels[i] == 1 { "+1" } else { "-1" });
            for (j, v) in row {
                text.push_str(&format!(" {}:{:.17e}", j + 1, v));
            }
            text.push('\n');
        }
        let data = parse_libsvm(text.as_bytes(), Some(20)).unwrap();
        let mut out = Vec::new();
        write_libsvm(&data.x, &data.y, &mut out).unwrap();
        let again = parse_libsvm(out.as_slice(), Some(20)).unwrap();
        prop_assert_eq!(again.y, labels[..rows.len()].to_vec());
        prop_assert_eq!(again.x.dense_rows(), data.x.dense_rows());
    }
}
