//! Replays the checked-in fuzz seeds through the same properties the fuzz
//! targets check, so the seeds stay meaningful on a stable toolchain.

use std::path::{Path, PathBuf};

use demodnet::mnist::{load_idx_images, load_idx_labels, write_idx_images, write_idx_labels};
use demodnet::nn::{read_checkpoint, write_checkpoint};
use demodnet::report::{parse_curve_csv, parse_sweep_csv, parse_utility_csv};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn idx_image_seeds() {
    let mut accepted = 0;
    for (_, data) in seeds("idx_images") {
        if let Ok(images) = load_idx_images(&data[..]) {
            accepted += 1;
            let bytes = write_idx_images(&images);
            assert_eq!(&data[..bytes.len()], &bytes[..]);
        }
    }
    assert!(accepted > 0);
}

#[test]
fn idx_label_seeds() {
    let mut accepted = 0;
    for (_, data) in seeds("idx_labels") {
        if let Ok(labels) = load_idx_labels(&data[..]) {
            accepted += 1;
            let bytes = write_idx_labels(&labels);
            assert_eq!(&data[..bytes.len()], &bytes[..]);
        }
    }
    assert!(accepted > 0);
}

#[test]
fn checkpoint_seeds() {
    let mut accepted = 0;
    for (_, data) in seeds("checkpoint") {
        if let Ok(net) = read_checkpoint(&data) {
            accepted += 1;
            assert_eq!(write_checkpoint(&net), data);
        }
    }
    assert!(accepted > 0);
}

#[test]
fn csv_seeds() {
    type Parse = fn(&str) -> bool;
    let parsers: [(&str, Parse); 3] = [
        ("utility_csv", |t| parse_utility_csv(t).is_ok()),
        ("sweep_csv", |t| parse_sweep_csv(t).is_ok()),
        ("curve_csv", |t| parse_curve_csv(t).is_ok()),
    ];
    for (target, parse) in parsers {
        let results: Vec<bool> = seeds(target)
            .iter()
            .map(|(_, data)| parse(std::str::from_utf8(data).unwrap()))
            .collect();
        assert!(results.contains(&true), "{target}: no seed parses");
    }
}
