mod common;

use common::*;
use polex_core::metric::oracle::oracle_xor_count;
use polex_core::{mu, mu_weighted, Similarity, WeightTable};
use proptest::prelude::*;

fn pair(n: usize) -> impl Strategy<Value = (usize, u32, u32)> {
    let full = (1u32 << n) - 1;
    (Just(n), 1..=full, 1..=full)
}

fn any_pair() -> impl Strategy<Value = (usize, u32, u32)> {
    (1usize..=10).prop_flat_map(pair)
}

proptest! {
    #[test]
    fn symmetric((n, a, b) in any_pair()) {
        let u = universe(n);
        let (a, b) = (from_mask(&u, a), from_mask(&u, b));
        prop_assert_eq!(mu(&a, &b).unwrap(), mu(&b, &a).unwrap());
    }

    #[test]
    fn one_exactly_on_identity((n, a, b) in any_pair()) {
        let u = universe(n);
        let (a, b) = (from_mask(&u, a), from_mask(&u, b));
        prop_assert!(mu(&a, &a).unwrap().is_one());
        prop_assert_eq!(mu(&a, &b).unwrap().is_one(), a == b);
    }

    #[test]
    fn within_unit_interval((n, a, b) in any_pair()) {
        let u = universe(n);
        let m = mu(&from_mask(&u, a), &from_mask(&u, b)).unwrap();
        let (num, den) = ratio(&m);
        prop_assert!(num > 0 && num <= den);
    }

    #[test]
    fn matches_enumeration((n, a, b) in any_pair()) {
        let u = universe(n);
        let (a, b) = (from_mask(&u, a), from_mask(&u, b));
        let m = ratio(&mu(&a, &b).unwrap());
        prop_assert!(same_ratio(m, enumerated_mu(&a, &b)));
        let c = oracle_xor_count(&a, &b).unwrap();
        prop_assert!(same_ratio(m, ((c.assignments - c.satisfying) as u128, c.assignments as u128)));
    }

    #[test]
    fn unit_weights_reduce_to_unweighted((n, a, b) in any_pair()) {
        let u = universe(n);
        let (a, b) = (from_mask(&u, a), from_mask(&u, b));
        prop_assert_eq!(mu_weighted(&a, &b, &WeightTable::unit()).unwrap(), mu(&a, &b).unwrap());
    }

    #[test]
    fn weighted_matches_weighted_enumeration((n, a, b) in any_pair(), seed in any::<u64>()) {
        use rand::SeedableRng;
        let u = universe(n);
        let (a, b) = (from_mask(&u, a), from_mask(&u, b));
        let w = random_weights(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), &u, 5);
        let m = mu_weighted(&a, &b, &w).unwrap();
        prop_assert!(same_ratio(ratio(&m), enumerated_mu_weighted(&a, &b, &w)));
        prop_assert_eq!(m.clone(), mu_weighted(&b, &a, &w).unwrap());
        let (num, den) = ratio(&m);
        prop_assert!(num > 0 && num <= den);
    }

    #[test]
    fn similarity_text_round_trips(num in 1i64..1000, extra in 0i64..1000) {
        let s = Similarity::from_ratio(num, num + extra);
        prop_assert_eq!(Similarity::parse(&s.to_string()), Some(s));
    }
}

#[test]
fn scenarios_from_different_universes_are_rejected() {
    let (u1, u2) = (universe(3), universe(4));
    assert!(mu(&from_mask(&u1, 1), &from_mask(&u2, 1)).is_err());
}
