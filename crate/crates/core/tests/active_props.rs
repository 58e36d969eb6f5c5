mod common;

use common::*;
use polex_core::par::Strategy;
use polex_core::{Decision, NnGraph, ReviewSession, SessionStatus};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn graph_matches_reference(seed in any::<u64>()) {
        let (labeled, w) = review_case(seed);
        let g = NnGraph::build(&labeled, &w).unwrap();
        let reference = reference_graph(&labeled, &w);
        for (v, nbrs) in reference.iter().enumerate() {
            prop_assert_eq!(&g.neighbors(v).members, nbrs);
        }
        let labels: Vec<Decision> = labeled.iter().map(|e| e.decision).collect();
        prop_assert_eq!(g.violation_count(), reference_violations(&reference, &labels));
    }

    #[test]
    fn delta_is_exact_decrease(seed in any::<u64>()) {
        let (labeled, w) = review_case(seed);
        let g = NnGraph::build(&labeled, &w).unwrap();
        let reference = reference_graph(&labeled, &w);
        let labels: Vec<Decision> = labeled.iter().map(|e| e.decision).collect();
        let before = reference_violations(&reference, &labels) as i64;
        let deltas = g.flip_deltas(Strategy::Sequential);
        prop_assert_eq!(&deltas, &g.flip_deltas(Strategy::Parallel));
        for v in 0..labels.len() {
            let mut flipped = labels.clone();
            flipped[v] = flipped[v].flipped();
            let after = reference_violations(&reference, &flipped) as i64;
            prop_assert_eq!(deltas[v], before - after);
            let mut h = g.clone();
            h.flip(v);
            prop_assert_eq!(h.violation_count() as i64, after);
            // edges depend on scenarios only
            prop_assert_eq!(h.adjacency(), g.adjacency());
        }
    }

    #[test]
    fn session_never_repeats_and_terminates(seed in any::<u64>(), accept_mask in any::<u32>()) {
        let (labeled, w) = review_case(seed);
        let mut s = ReviewSession::from_labeled("T", &labeled, &w, 15).unwrap();
        let mut seen = BTreeSet::new();
        let mut round = 0;
        while let Some(sug) = s.next_suggestion().unwrap() {
            prop_assert!(seen.insert(sug.vertex));
            prop_assert_eq!(sug.proposed, sug.current.flipped());
            let out = s.respond(sug.vertex, accept_mask >> (round % 32) & 1 == 1).unwrap();
            if out.entry.accepted {
                prop_assert_eq!(out.violations_before as i64 - out.violations_after as i64, sug.delta);
            } else {
                prop_assert_eq!(out.violations_before, out.violations_after);
            }
            round += 1;
        }
        prop_assert!(round <= 15);
        match s.status() {
            SessionStatus::Clean => prop_assert_eq!(s.remaining_violations(), 0),
            SessionStatus::Exhausted => prop_assert!(round == 15 || seen.len() == labeled.len()),
            SessionStatus::Active => prop_assert!(false, "session still active"),
        }
    }
}

/// Brute force over every unvisited vertex on 500 datasets.
#[test]
fn greedy_choice_is_the_best_single_flip() {
    for seed in 0..500u64 {
        let (labeled, w) = review_case(seed);
        let reference = reference_graph(&labeled, &w);
        let mut labels: Vec<Decision> = labeled.iter().map(|e| e.decision).collect();
        let mut s = ReviewSession::from_labeled("T", &labeled, &w, 15).unwrap();
        let mut visited = BTreeSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        while let Some(sug) = s.next_suggestion().unwrap() {
            let before = reference_violations(&reference, &labels) as i64;
            let best = (0..labels.len())
                .filter(|v| !visited.contains(v))
                .map(|v| {
                    let mut f = labels.clone();
                    f[v] = f[v].flipped();
                    before - reference_violations(&reference, &f) as i64
                })
                .max()
                .unwrap();
            assert_eq!(sug.delta, best, "seed {seed}");
            let accept = rng.random_bool(0.5);
            s.respond(sug.vertex, accept).unwrap();
            visited.insert(sug.vertex);
            if accept {
                labels[sug.vertex] = labels[sug.vertex].flipped();
            }
        }
    }
}
