mod common;

use std::collections::HashSet;

use common::*;
use promptprobe::dataio::{self, filter_prompts, split_dataset, FeatureMatrix, PromptRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fixture_survivors_match_reference_filter() {
    let records = fixture_prompts();
    assert_eq!(records.len(), 20);
    let (kept, report) = filter_prompts(&records);
    let got: Vec<(u64, String)> = kept.iter().map(|r| (r.id, r.text.clone())).collect();
    assert_eq!(got, reference_filter(&records));
    let ids: Vec<u64> = kept.iter().map(|r| r.id).collect();
    assert_eq!(ids, FIXTURE_SURVIVORS);
    // Records 3 and 7 share a 50-character prefix with record 1.
    assert!(ids.contains(&1) && !ids.contains(&3) && !ids.contains(&7));
    assert_eq!(report.input, 20);
    assert_eq!(report.dropped_empty_or_null, 4);
    assert_eq!(report.dropped_non_english, 2);
    assert_eq!(report.dropped_duplicate, 5);
    assert_eq!(report.kept, 9);
}

#[test]
fn random_64x16_matrix_round_trips_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data: Vec<f32> = (0..64 * 16).map(|_| rng.random_range(-1e6f32..1e6)).collect();
    let ids: Vec<u64> = (0..64).map(|i| i * 1_000_003 + 17).collect();
    let m = FeatureMatrix::new(64, 16, data, ids).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.fmat");
    dataio::save_matrix(&m, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"FMAT");
    assert_eq!(bytes.len(), 16 + 64 * 16 * 4 + 64 * 8);
    let back = dataio::load_matrix(&path).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back, m);
}

#[test]
fn unwritable_path_is_io_error_with_path() {
    let m = FeatureMatrix::with_sequential_ids(1, 1, vec![0.5]).unwrap();
    let err = dataio::save_matrix(&m, "/nonexistent-dir/x/m.fmat").unwrap_err();
    assert!(err.to_string().contains("/nonexistent-dir/x/m.fmat"), "{err}");
}

#[test]
fn malformed_corpus_line_is_reported_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    std::fs::write(&path, "{\"id\":1,\"prompt\":\"a\"}\n{\"id\":2,\"prompt\":\n").unwrap();
    let err = dataio::read_corpus(&path).unwrap_err().to_string();
    assert!(err.contains(":2"), "{err}");
}

#[test]
fn split_is_deterministic_and_floor_allocated() {
    let ids: Vec<u64> = (0..10).collect();
    let a = split_dataset(&ids, (0.8, 0.1, 0.1), 3).unwrap();
    let b = split_dataset(&ids, (0.8, 0.1, 0.1), 3).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.train_ids.len(), a.val_ids.len(), a.test_ids.len()), (8, 1, 1));
    let c = split_dataset(&ids, (0.8, 0.1, 0.1), 4).unwrap();
    assert_ne!(a, c);
}

fn prompt_text() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[a-c ]{0,8}",
        2 => "[ a-z]{45,70}",
        1 => Just("NaN".to_string()),
        1 => "[a-b]{1,3}é",
    ]
}

proptest! {
    #[test]
    fn filtering_is_idempotent(texts in prop::collection::vec(prompt_text(), 1..40)) {
        let records: Vec<PromptRecord> = texts.iter().enumerate().map(|(i, t)| PromptRecord::new(i as u64, t.clone())).collect();
        let (kept, _) = filter_prompts(&records);
        let (again, report) = filter_prompts(&kept);
        prop_assert_eq!(&again, &kept);
        prop_assert_eq!(report.dropped(), 0);
        let want = reference_filter(&records);
        let got: Vec<(u64, String)> = kept.iter().map(|r| (r.id, r.text.clone())).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn padded_duplicate_is_caught_after_trimming(text in "[a-z]{1,20}( [a-z]{1,20}){0,5}", left in 0usize..4, right in 0usize..4) {
        let padded = format!("{}{}{}", " ".repeat(left), text, "\t".repeat(right));
        let records = vec![PromptRecord::new(0, text.clone()), PromptRecord::new(1, padded)];
        let (kept, report) = filter_prompts(&records);
        prop_assert_eq!(kept.len(), 1);
        prop_assert_eq!(report.dropped_duplicate, 1);
    }

    #[test]
    fn split_partitions_ids(n in 1usize..300, seed in any::<u64>(), v in 1u32..30, t in 1u32..30) {
        let va = v as f64 / 100.0;
        let te = t as f64 / 100.0;
        let ids: Vec<u64> = (0..n as u64).map(|i| i * 7 + 3).collect();
        let s = split_dataset(&ids, (1.0 - va - te, va, te), seed).unwrap();
        let all: Vec<u64> = s.train_ids.iter().chain(&s.val_ids).chain(&s.test_ids).copied().collect();
        prop_assert_eq!(all.len(), n);
        let set: HashSet<u64> = all.iter().copied().collect();
        prop_assert_eq!(set, ids.iter().copied().collect::<HashSet<u64>>());
        prop_assert_eq!(s.val_ids.len(), (n as f64 * va + 1e-6).floor() as usize);
    }

    #[test]
    fn finite_matrices_round_trip(rows in 0usize..12, cols in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..rows * cols)
            .map(|_| f32::from_bits(rng.random::<u32>()))
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .collect();
        let m = FeatureMatrix::with_sequential_ids(rows, cols, data).unwrap();
        let back = FeatureMatrix::from_bytes(&m.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), m.to_bytes());
    }
}
