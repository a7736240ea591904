use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::molgraph::DomainTag;

fn ids(r: &RetrievalResult) -> Vec<&str> {
    r.entry_ids.iter().map(String::as_str).collect()
}

/// 1-d database whose keys are the given scores against query `[1]`.
fn scored_db(scores: &[f64]) -> Database {
    Database::from_entries(
        1,
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| DatabaseEntry::new(format!("e{i}"), &[s], &[-s], DomainTag::Synthetic)),
    )
    .unwrap()
}

fn random_db(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Database {
    Database::from_entries(
        dim,
        (0..n).map(|i| {
            let k: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            DatabaseEntry::new(format!("id{i:05}"), &k, &v, DomainTag::Synthetic)
        }),
    )
    .unwrap()
}

#[test]
fn self_is_top_hit_unless_excluded() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut db = random_db(&mut rng, 50, 8);
    let q: Vec<f64> = vec![2.0; 8];
    db.push(DatabaseEntry::new("self", &q, &q, DomainTag::Peptide)).unwrap();
    let none = HashSet::new();
    assert_eq!(query_topk(&db, &q, 3, &none).unwrap().entry_ids[0], "self");
    let ex: HashSet<String> = ["self".to_string()].into();
    assert!(!query_topk(&db, &q, 51, &ex).unwrap().entry_ids.contains(&"self".to_string()));
}

#[test]
fn topk_orders_by_score() {
    let db = scored_db(&[3.0, 1.0, 4.0, 1.0, 5.0]);
    let r = query_topk(&db, &[1.0], 3, &HashSet::new()).unwrap();
    assert_eq!(ids(&r), ["e4", "e2", "e0"]);
    assert_eq!(r.scores, vec![5.0, 4.0, 3.0]);
    assert_eq!(r.prompt[0], vec![-5.0]);
    let all = query_topk(&db, &[1.0], 5, &HashSet::new()).unwrap();
    assert_eq!(ids(&all)[3..], ["e1", "e3"]);
    assert!(query_topk(&db, &[1.0], 0, &HashSet::new()).unwrap().is_empty());
}

#[test]
fn dim_mismatch_is_an_error() {
    let db = scored_db(&[1.0]);
    assert!(matches!(query_topk(&db, &[1.0, 2.0], 1, &HashSet::new()), Err(Error::DimMismatch { .. })));
}

#[test]
fn adaptive_threshold() {
    let db = scored_db(&[0.9, 0.5, 0.2]);
    let none = HashSet::new();
    assert_eq!(query_adaptive(&db, &[1.0], 0.4, &none).unwrap().len(), 2);
    assert!(query_adaptive(&db, &[1.0], 0.95, &none).unwrap().is_empty());
    assert_eq!(
        query_adaptive(&db, &[1.0], f64::NEG_INFINITY, &none).unwrap(),
        query_topk(&db, &[1.0], 3, &none).unwrap()
    );
}

#[test]
fn reverse_and_random_modes() {
    let db = scored_db(&[3.0, 1.0, 4.0]);
    let none = HashSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = query_mode(&db, &[1.0], QueryMode::ReverseN, 1, &none, &mut rng).unwrap();
    assert_eq!(ids(&r), ["e1"]);
    let a = query_mode(&db, &[1.0], QueryMode::Random, 2, &none, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let b = query_mode(&db, &[1.0], QueryMode::Random, 2, &none, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(a, b);
    assert!(query_mode(&db, &[1.0], QueryMode::TopN, 4, &none, &mut rng).is_err());
    let ex: HashSet<String> = ["e0".to_string()].into();
    assert!(query_mode(&db, &[1.0], QueryMode::TopN, 3, &ex, &mut rng).is_err());
}

#[test]
fn rc_at_counts_ranks_against_ceil() {
    // 200 entries; the truth's value is ranked 3rd for the query.
    let mut entries = Vec::new();
    for i in 0..200 {
        let v = if i == 7 { 0.98 } else if i < 2 { 0.99 + i as f64 * 0.001 } else { 0.5 - i as f64 * 1e-3 };
        entries.push(DatabaseEntry::new(format!("e{i:03}"), &[0.0], &[v], DomainTag::Synthetic));
    }
    let db = Database::from_entries(1, entries).unwrap();
    let rc = rc_at(&db, &[(vec![1.0], "e007".into())], &[5.0, 0.5]).unwrap();
    assert_eq!(rc, vec![100.0, 0.0]);
    assert_eq!(cutoff_rank(5.0, 200), 10);
    assert_eq!(cutoff_rank(0.5, 200), 1);
    assert!(matches!(rc_at(&db, &[(vec![1.0], "nope".into())], &[5.0]), Err(Error::UnknownId(_))));
}

#[test]
fn rc_at_unique_maximum_is_perfect() {
    // Values are one-hot; querying with a one-hot key makes the matching
    // entry the unique maximum.
    let n = 30;
    let onehot = |i: usize| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let db = Database::from_entries(
        n,
        (0..n).map(|i| DatabaseEntry::new(format!("e{i}"), &onehot((i + 1) % n), &onehot(i), DomainTag::Synthetic)),
    )
    .unwrap();
    let queries: Vec<(Vec<f64>, String)> = (0..n).map(|i| (onehot(i), format!("e{i}"))).collect();
    assert_eq!(rc_at(&db, &queries, &[0.1, 1.0, 50.0]).unwrap(), vec![100.0; 3]);
    // Key-key scoring retrieves a different entry for the same query.
    assert_eq!(query_topk(&db, &onehot(0), 1, &HashSet::new()).unwrap().entry_ids, ["e29"]);
}

#[test]
fn save_load_round_trip_and_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let db = random_db(&mut rng, 10_000, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.radb");
    db.save(&path).unwrap();
    let back = Database::load(&path).unwrap();
    assert_eq!(back, db);
    let none = HashSet::new();
    for _ in 0..5 {
        let q: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(query_topk(&db, &q, 10, &none).unwrap(), query_topk(&back, &q, 10, &none).unwrap());
    }

    let bytes = db.to_bytes().unwrap();
    let mut bad = bytes.clone();
    bad[1] = b'X';
    assert!(matches!(Database::from_bytes(&bad), Err(Error::BadMagic(_))));
    let mut bad = bytes.clone();
    bad[4..8].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(Database::from_bytes(&bad), Err(Error::VersionMismatch { found: 7, .. })));
    assert!(matches!(Database::from_bytes(&bytes[..bytes.len() / 2]), Err(Error::Truncated(_))));
    let mut bad = bytes.clone();
    let mid = bytes.len() - 100;
    bad[mid] ^= 0x01;
    assert!(matches!(Database::from_bytes(&bad), Err(Error::Checksum { .. })));
}

proptest! {
    #[test]
    fn ranking_invariants(
        scores in proptest::collection::vec(-10.0f64..10.0, 1..40),
        excluded in proptest::collection::vec(0usize..40, 0..10),
        n in 0usize..40,
        threshold in -10.0f64..10.0,
        seed in 0u64..1000,
    ) {
        let db = scored_db(&scores);
        let ex: HashSet<String> = excluded.iter().map(|i| format!("e{i}")).collect();
        let available = scores.len() - (0..scores.len()).filter(|i| ex.contains(&format!("e{i}"))).count();
        let all = query_topk(&db, &[1.0], db.len(), &ex).unwrap();
        prop_assert_eq!(all.len(), available);
        prop_assert!(all.scores.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(all.entry_ids.iter().all(|id| !ex.contains(id)));
        let adaptive = query_adaptive(&db, &[1.0], threshold, &ex).unwrap();
        let prefix = all.scores.iter().take_while(|s| **s > threshold).count();
        prop_assert_eq!(&adaptive.entry_ids[..], &all.entry_ids[..prefix]);
        if n <= available {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let top = query_mode(&db, &[1.0], QueryMode::TopN, n, &ex, &mut rng).unwrap();
            let rev = query_mode(&db, &[1.0], QueryMode::ReverseN, available - n, &ex, &mut rng).unwrap();
            let mut union: Vec<String> = top.entry_ids.iter().chain(&rev.entry_ids).cloned().collect();
            union.sort();
            let mut expected = all.entry_ids.clone();
            expected.sort();
            prop_assert_eq!(union, expected);
            let rnd = query_mode(&db, &[1.0], QueryMode::Random, n, &ex, &mut rng).unwrap();
            prop_assert!(rnd.entry_ids.iter().all(|id| !ex.contains(id)));
            let uniq: HashSet<_> = rnd.entry_ids.iter().collect();
            prop_assert_eq!(uniq.len(), n);
        }
    }
}
