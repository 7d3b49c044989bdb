use std::path::Path;

use ndarray::array;
use sparc::store::{BatchRange, LabelSet, StoreWriter, Taxonomy};
use sparc::{SparcError, StoreHandle};

/// Writes a stream file byte by byte: magic, version, count, f32 LE rows.
fn write_raw(path: &Path, rows: &[&[f32]]) {
    let mut bytes = b"SPRC".to_vec();
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for r in rows {
        for v in *r {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).unwrap();
}

fn read_raw(path: &Path) -> (u64, Vec<f32>) {
    let b = std::fs::read(path).unwrap();
    assert_eq!(&b[..4], b"SPRC");
    assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
    let n = u64::from_le_bytes(b[8..16].try_into().unwrap());
    let vals = b[16..].chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    (n, vals)
}

#[test]
fn hand_written_store_is_read_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    write_raw(&dir.path().join("img.bin"), &[&[1.0, -2.5], &[0.25, 3.0], &[7.0, 8.0]]);
    write_raw(&dir.path().join("txt.bin"), &[&[0.5], &[1.5], &[-1.0]]);
    std::fs::write(
        dir.path().join("manifest.json"),
        r#"{"version": 1, "sample_count": 3, "streams": [
            {"name": "img", "dim": 2, "data_file": "img.bin"},
            {"name": "txt", "dim": 1, "data_file": "txt.bin"}]}"#,
    )
    .unwrap();
    let store = StoreHandle::open(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(store.stream_names(), ["img", "txt"]);
    let all = store.read_all().unwrap();
    assert_eq!(all.data[0], array![[1.0, -2.5], [0.25, 3.0], [7.0, 8.0]]);
    assert_eq!(all.data[1], array![[0.5], [1.5], [-1.0]]);
    let b = store.read_batch(BatchRange::new(1, 3)).unwrap();
    assert_eq!(b.sample_ids, vec![1, 2]);
    assert_eq!(b.data[0], array![[0.25, 3.0], [7.0, 8.0]]);
    let s = store.read_samples(&[2, 0]).unwrap();
    assert_eq!(s.data[1], array![[-1.0], [0.5]]);
    assert!(matches!(
        store.read_batch(BatchRange::new(2, 4)),
        Err(SparcError::OutOfRange { .. })
    ));
}

#[test]
fn writer_output_decodes_with_independent_reader() {
    let dir = tempfile::tempdir().unwrap();
    let x = array![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]];
    let mut w = StoreWriter::new(dir.path()).unwrap();
    w.add_stream("a", x.view()).unwrap();
    w.labels(LabelSet::new(vec![vec!["Tiger".into()], vec![]]));
    w.taxonomy(Taxonomy::from_edges("Entity", [("Animal", "Entity"), ("Tiger", "Animal")]).unwrap());
    w.finish().unwrap();
    let (n, vals) = read_raw(&dir.path().join("a.bin"));
    assert_eq!(n, 2);
    assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let labels = std::fs::read_to_string(dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(labels, "[\"Tiger\"]\n[]\n");
    let tax: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("taxonomy.json")).unwrap()).unwrap();
    assert_eq!(tax["root"], "Entity");
    assert_eq!(tax["Tiger"], "Animal");
}

#[test]
fn truncated_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_raw(&dir.path().join("a.bin"), &[&[1.0, 2.0]]);
    std::fs::write(
        dir.path().join("manifest.json"),
        r#"{"version": 1, "sample_count": 2, "streams": [{"name": "a", "dim": 2, "data_file": "a.bin"}]}"#,
    )
    .unwrap();
    assert!(StoreHandle::open(&dir.path().join("manifest.json")).is_err());
}
