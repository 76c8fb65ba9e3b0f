use std::fs;

use helprank::jsonl::{read_jsonl, write_jsonl};
use helprank_core::data::{generate, Dataset, GenConfig, SplitTag};

fn dataset(n: usize) -> Dataset {
    generate(&GenConfig {
        n_products: n,
        d_tok: 5,
        d_img: 3,
        seed: 17,
        ..GenConfig::default()
    })
    .unwrap()
}

#[test]
fn ten_products_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let data = dataset(10);
    write_jsonl(&data, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.ends_with('\n'));
    assert_eq!(read_jsonl(&path).unwrap(), data);
    // Writing what was read gives the same bytes.
    let again = dir.path().join("e.jsonl");
    write_jsonl(&read_jsonl(&path).unwrap(), &again).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn empty_dataset_is_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    write_jsonl(&Dataset::empty(5, 3, SplitTag::All), &path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), b"");
    let back = read_jsonl(&path).unwrap();
    assert!(back.is_empty());
}

#[test]
fn truncated_last_line_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.jsonl");
    write_jsonl(&dataset(3), &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() - 40]).unwrap();
    let msg = read_jsonl(&path).unwrap_err().to_string();
    assert!(msg.contains("cut.jsonl:3:"), "{msg}");
}

#[test]
fn width_mismatch_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    write_jsonl(&dataset(1), &a).unwrap();
    let other = generate(&GenConfig {
        n_products: 1,
        d_tok: 6,
        d_img: 3,
        ..GenConfig::default()
    })
    .unwrap();
    write_jsonl(&other, &b).unwrap();
    let joined = fs::read_to_string(&a).unwrap() + &fs::read_to_string(&b).unwrap();
    fs::write(&a, joined).unwrap();
    let err = read_jsonl(&a).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let msg = err.to_string();
    assert!(msg.contains(":2:") && msg.contains("d_tok"), "{msg}");
}

#[test]
fn missing_file_is_a_validation_error() {
    let err = read_jsonl(std::path::Path::new("/nonexistent/x.jsonl")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("/nonexistent/x.jsonl"));
}
