use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unveil::io;
use unveil_core::layout::{OcrPage, DEFAULT_CONFIDENCE_THRESHOLD};

fn load(name: &str) -> (OcrPage, String) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let page = io::read_ocr_pages(&dir.join(format!("{name}.jsonl"))).unwrap().remove(0);
    (page, std::fs::read_to_string(dir.join(format!("{name}.txt"))).unwrap())
}

fn fixtures() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    v.sort();
    v
}

#[test]
fn every_fixture_has_a_golden() {
    for p in fixtures() {
        assert!(p.with_extension("txt").exists(), "{}", p.display());
    }
}

#[test]
fn two_lines() {
    let (page, golden) = load("two_lines_basic");
    assert_eq!(page.assemble(DEFAULT_CONFIDENCE_THRESHOLD), golden);
}

#[test]
fn confidence_boundary_is_strict() {
    let (page, golden) = load("conf_boundary");
    assert_eq!(page.assemble(DEFAULT_CONFIDENCE_THRESHOLD), golden);
    assert!(!golden.contains("edge") && !golden.contains("boundary"));
    // lowering the threshold admits the boxes sitting exactly on it
    assert!(page.assemble(0.59).contains("edge"));
}

#[test]
fn staircase_groups_by_overlap() {
    let (page, golden) = load("staircase");
    assert_eq!(page.assemble(DEFAULT_CONFIDENCE_THRESHOLD), golden);
}

#[test]
fn vertical_gaps_become_blank_lines() {
    let (page, golden) = load("vertical_gaps");
    assert_eq!(page.assemble(DEFAULT_CONFIDENCE_THRESHOLD), golden);
}

#[test]
fn scrambled_table() {
    let (page, golden) = load("permutation");
    assert_eq!(page.assemble(DEFAULT_CONFIDENCE_THRESHOLD), golden);
}

#[test]
fn pages_roundtrip_through_jsonl() {
    let tmp = tempfile::tempdir().unwrap();
    for path in fixtures() {
        let pages = io::read_ocr_pages(&path).unwrap();
        let copy = tmp.path().join("copy.jsonl");
        io::write_text(&copy, &io::ocr_pages_to_jsonl(&pages)).unwrap();
        assert_eq!(io::read_ocr_pages(&copy).unwrap(), pages);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fixtures_are_permutation_invariant(seed in any::<u64>(), which in 0usize..5) {
        let path = &fixtures()[which];
        let page = io::read_ocr_pages(path).unwrap().remove(0);
        let golden = std::fs::read_to_string(path.with_extension("txt")).unwrap();
        let mut shuffled = page.clone();
        shuffled.boxes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(shuffled.assemble(DEFAULT_CONFIDENCE_THRESHOLD), golden);
    }
}
