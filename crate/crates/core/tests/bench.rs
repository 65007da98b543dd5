mod common;

use std::fs;

use motionplan_core::bench::{
    load_benchmark, stats, write_synthetic_benchmark, BenchError, Category, Index, SynthSpec,
    INDEX_FILE, REFERENCE_COUNTS, REFERENCE_PUBLISHED_PERCENTS,
};

fn three_items() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        counts: [1, 1, 0, 0, 1],
        multi_object: 1,
        ..SynthSpec::reference(1)
    };
    write_synthetic_benchmark(dir.path(), &spec).unwrap();
    dir
}

fn rewrite_index(dir: &std::path::Path, f: impl FnOnce(&mut Index)) {
    let path = dir.join(INDEX_FILE);
    let mut index: Index = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    f(&mut index);
    fs::write(path, serde_json::to_vec_pretty(&index).unwrap()).unwrap();
}

#[test]
fn three_item_fixture_loads() {
    let dir = three_items();
    let b = load_benchmark(dir.path()).unwrap();
    assert_eq!(b.items.len(), 3);
    assert_eq!(b.items.iter().filter(|i| i.multi_object).count(), 1);
    for item in &b.items {
        assert_eq!(
            image::image_dimensions(&item.image).unwrap(),
            (item.manifest.width, item.manifest.height)
        );
    }
}

#[test]
fn listing_order_does_not_matter() {
    let dir = three_items();
    let before = load_benchmark(dir.path()).unwrap();
    rewrite_index(dir.path(), |i| i.items.reverse());
    assert_eq!(load_benchmark(dir.path()).unwrap(), before);
}

#[test]
fn duplicate_id_is_rejected() {
    let dir = three_items();
    rewrite_index(dir.path(), |i| {
        let dup = i.items[0].clone();
        i.items.push(dup);
    });
    match load_benchmark(dir.path()) {
        Err(BenchError::Invalid(errs)) => assert!(errs.iter().any(|e| e.contains("duplicate id"))),
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_failure_is_listed() {
    let dir = three_items();
    let m = dir.path().join("manifests/item_001.json");
    let text = fs::read_to_string(&m)
        .unwrap()
        .replace("\"length\":16", "\"length\":15");
    fs::write(&m, text).unwrap();
    fs::remove_file(dir.path().join("images/item_003.png")).unwrap();
    match load_benchmark(dir.path()) {
        Err(BenchError::Invalid(errs)) => {
            assert_eq!(errs.len(), 2, "{errs:?}");
            assert!(errs[0].starts_with("item_001") && errs[0].contains("length"));
            assert!(errs[1].starts_with("item_003"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn image_size_must_match_manifest() {
    let dir = three_items();
    image::RgbImage::new(10, 10)
        .save(dir.path().join("images/item_002.png"))
        .unwrap();
    assert!(matches!(
        load_benchmark(dir.path()),
        Err(BenchError::Invalid(_))
    ));
}

#[test]
fn reference_distribution() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_benchmark(dir.path(), &SynthSpec::reference(7)).unwrap();
    let s = stats(&load_benchmark(dir.path()).unwrap());
    assert_eq!(s.total, 62);
    assert_eq!(
        s.rows.iter().map(|r| r.count).collect::<Vec<_>>(),
        REFERENCE_COUNTS
    );
    assert_eq!(
        s.rows.iter().map(|r| r.percent).collect::<Vec<_>>(),
        [15, 27, 13, 15, 31]
    );
    assert_eq!(s.rounded_sum, 101);
    let flow = &s.rows[3];
    assert_eq!(flow.category, Category::Flow);
    assert_ne!(flow.percent, REFERENCE_PUBLISHED_PERCENTS[3]);
    assert!(s.rounding_note.as_deref().unwrap().contains("Flow"));
    assert_eq!(s.multi_object, 19);
}
