//! Streaming metrics against per-character brute force.

mod support;

use boundseg::metrics::{char_f1, default_pk_window, exact_match_f1, f1_label, pk, reconstruction_ratio, reward};
use boundseg::LabelSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

fn labels() -> LabelSet {
    LabelSet::new(["A", "B", "C", "D"]).unwrap()
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let labels = labels();
    for case in 0..400 {
        let n_words = rng.random_range(1..40);
        let doc = random_doc(&mut rng, &format!("d{case}"), n_words, false);
        if doc.len() > 200 || doc.len() < 2 {
            continue;
        }
        let gold = char_segmentation(&mut rng, doc.len(), 6, &labels);
        let pred = gappy_prediction(&mut rng, doc.len(), 8, &labels);
        let g = gold.segments();

        let cf = char_f1(&doc, &pred, g).unwrap();
        assert!((cf - oracle_char_f1(&doc, &pred, g)).abs() <= 1e-12, "case {case}");

        let window = default_pk_window(doc.len(), g.len());
        if window < doc.len() {
            let p = pk(&doc, &pred, g, None).unwrap();
            assert!((p - oracle_pk(&doc, &pred, g, window)).abs() <= 1e-12, "case {case}");
        }
        let k = rng.random_range(1..doc.len());
        let p = pk(&doc, &pred, g, Some(k)).unwrap();
        assert!((p - oracle_pk(&doc, &pred, g, k)).abs() <= 1e-12, "case {case} k {k}");

        assert_eq!(exact_match_f1(&doc, &pred, g).f1, oracle_em_f1(&doc, &pred, g));
        assert_eq!(f1_label(&pred, g), oracle_f1_label(&pred, g));
        assert!((reconstruction_ratio(&doc, &pred) - oracle_rho(&doc, &pred)).abs() <= 1e-12);
    }
}

#[test]
fn reward_law_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let labels = labels();
    for case in 0..300 {
        let n_words = rng.random_range(2..30);
        let doc = random_doc(&mut rng, &format!("d{case}"), n_words, false);
        let gold = char_segmentation(&mut rng, doc.len(), 5, &labels);
        let pred = gappy_prediction(&mut rng, doc.len(), 6, &labels);
        let r = reward(&doc, &pred, gold.segments()).unwrap();
        let half = (r.em_f1 + r.char_f1) / 2.0;
        assert!((r.reward - r.rho_rec * half).abs() <= 1e-12);
        assert!(r.reward >= 0.0);
        assert!(r.reward <= r.rho_rec.min(half) + 1e-12);
    }
}
