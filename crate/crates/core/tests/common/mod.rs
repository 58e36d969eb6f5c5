//! Reference implementations and generators shared by the integration tests.
//! Everything here is written from the definitions, independently of the
//! library's own code paths.
#![allow(dead_code)]

use polex_core::model::Row;
use polex_core::weights::WeightError;
use polex_core::{
    mu_weighted, Dataset, Decision, LabeledExample, PolicyTarget, Scenario, Similarity, TagId,
    Universe, WeightPair, WeightSettings, WeightTable,
};
use polex_core::{TagGroup, WeightConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn universe(n: usize) -> Universe {
    Universe::new((0..n).map(|i| format!("t{i}"))).unwrap()
}

pub fn from_mask(u: &Universe, mask: u32) -> Scenario {
    u.scenario_from_ids((0..32).filter(|i| mask >> i & 1 == 1).map(TagId))
        .unwrap()
}

pub fn random_scenario<R: Rng>(rng: &mut R, u: &Universe) -> Scenario {
    let n = u.len() as u32;
    from_mask(u, rng.random_range(1..(1u32 << n)))
}

/// `(numerator, denominator)` of a similarity, for exact comparison against
/// the integer oracles below.
pub fn ratio(s: &Similarity) -> (u128, u128) {
    let text = s.to_string();
    let (n, d) = text.split_once('/').unwrap();
    (n.parse().unwrap(), d.parse().unwrap())
}

pub fn same_ratio(a: (u128, u128), b: (u128, u128)) -> bool {
    a.0 * b.1 == b.0 * a.1
}

fn mask_of(s: &Scenario) -> u32 {
    s.members().iter().fold(0, |m, t| m | 1 << t.0)
}

/// 1 - #(f xor g) / 2^k by enumerating every assignment of the tags that
/// occur in either conjunction.
pub fn enumerated_mu(a: &Scenario, b: &Scenario) -> (u128, u128) {
    let (fa, fb) = (mask_of(a), mask_of(b));
    let vars: Vec<u32> = (0..32).filter(|i| (fa | fb) >> i & 1 == 1).collect();
    let total = 1u128 << vars.len();
    let mut differ = 0u128;
    for assignment in 0..total {
        let x = vars.iter().enumerate().fold(0u32, |m, (j, v)| {
            if assignment >> j & 1 == 1 {
                m | 1 << v
            } else {
                m
            }
        });
        let f = x & fa == fa;
        let g = x & fb == fb;
        if f != g {
            differ += 1;
        }
    }
    (total - differ, total)
}

/// Weighted enumeration: an assignment weighs the product over union tags of
/// w0 when the tag is set and w1 when it is clear. With w0 = 1 this is the
/// mass the weighted closed form measures.
pub fn enumerated_mu_weighted(a: &Scenario, b: &Scenario, w: &WeightTable) -> (u128, u128) {
    let (fa, fb) = (mask_of(a), mask_of(b));
    let vars: Vec<u32> = (0..32).filter(|i| (fa | fb) >> i & 1 == 1).collect();
    let mut total = 0u128;
    let mut differ = 0u128;
    for assignment in 0..(1u64 << vars.len()) {
        let mut x = 0u32;
        let mut mass = 1u128;
        for (j, &v) in vars.iter().enumerate() {
            let p = w.get(TagId(v));
            if assignment >> j & 1 == 1 {
                x |= 1 << v;
                mass *= p.w0() as u128;
            } else {
                mass *= p.w1() as u128;
            }
        }
        total += mass;
        if (x & fa == fa) != (x & fb == fb) {
            differ += mass;
        }
    }
    (total - differ, total)
}

pub fn random_weights<R: Rng>(rng: &mut R, u: &Universe, max_w1: u64) -> WeightTable {
    let mut w = WeightTable::unit();
    for id in u.ids() {
        w.set(
            id,
            WeightPair::new(1, rng.random_range(1..=max_w1)).unwrap(),
        );
    }
    w
}

/// Distinct random scenarios with random labels.
pub fn random_labeled<R: Rng>(rng: &mut R, u: &Universe, count: usize) -> Vec<LabeledExample> {
    let n = u.len() as u32;
    let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
    masks.shuffle(rng);
    masks
        .into_iter()
        .take(count)
        .map(|m| {
            LabeledExample::new(
                from_mask(u, m),
                if rng.random_bool(0.5) {
                    Decision::Allow
                } else {
                    Decision::Deny
                },
            )
        })
        .collect()
}

pub fn dataset_of(u: &Universe, target: &str, labeled: &[LabeledExample]) -> Dataset {
    let rows = labeled
        .iter()
        .map(|e| Row {
            scenario: e.scenario.clone(),
            decisions: vec![e.decision],
        })
        .collect();
    Dataset::new(
        u.clone(),
        vec![PolicyTarget::new(target).unwrap()],
        rows,
        WeightSettings::default(),
    )
    .unwrap()
}

/// Nearest-neighbor sets computed pairwise from scratch.
pub fn reference_graph(labeled: &[LabeledExample], w: &WeightTable) -> Vec<Vec<usize>> {
    let n = labeled.len();
    (0..n)
        .map(|v| {
            let sims: Vec<(usize, Similarity)> = (0..n)
                .filter(|&u| u != v)
                .map(|u| {
                    (
                        u,
                        mu_weighted(&labeled[v].scenario, &labeled[u].scenario, w).unwrap(),
                    )
                })
                .collect();
            let best = sims.iter().map(|(_, s)| s.clone()).max().unwrap();
            sims.into_iter()
                .filter(|(_, s)| *s == best)
                .map(|(u, _)| u)
                .collect()
        })
        .collect()
}

/// V(G): vertices whose neighborhood has no strict majority plus vertices
/// disagreeing with their neighborhood's strict majority.
pub fn reference_violations(graph: &[Vec<usize>], labels: &[Decision]) -> usize {
    graph
        .iter()
        .enumerate()
        .filter(|(v, nbrs)| {
            let allow = nbrs
                .iter()
                .filter(|&&u| labels[u] == Decision::Allow)
                .count();
            let deny = nbrs.len() - allow;
            if allow == deny {
                true
            } else {
                let majority = if allow > deny {
                    Decision::Allow
                } else {
                    Decision::Deny
                };
                labels[*v] != majority
            }
        })
        .count()
}

pub struct RandomDag {
    pub universe: Universe,
    pub groups: Vec<(String, Vec<TagId>)>,
    pub relations: Vec<(String, String)>,
}

/// Random partition of a random universe into groups, with relations that
/// only point from earlier to later groups in a hidden topological order.
pub fn random_dag(seed: u64) -> RandomDag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tags = rng.random_range(2..=16);
    let universe = universe(tags);
    let group_count = rng.random_range(1..=tags.min(8));
    let mut ids: Vec<TagId> = universe.ids().collect();
    ids.shuffle(&mut rng);
    let mut groups: Vec<(String, Vec<TagId>)> = (0..group_count)
        .map(|g| (format!("g{g}"), vec![ids[g]]))
        .collect();
    for &id in &ids[group_count..] {
        // some tags stay ungrouped
        if rng.random_bool(0.8) {
            let g = rng.random_range(0..group_count);
            groups[g].1.push(id);
        }
    }
    let mut relations = Vec::new();
    for i in 0..group_count {
        for j in i + 1..group_count {
            if rng.random_bool(0.35) {
                relations.push((groups[i].0.clone(), groups[j].0.clone()));
            }
        }
    }
    relations.shuffle(&mut rng);
    groups.shuffle(&mut rng);
    RandomDag {
        universe,
        groups,
        relations,
    }
}

pub fn config(
    groups: &[(String, Vec<TagId>)],
    relations: &[(String, String)],
) -> Result<WeightConfig, WeightError> {
    let gs = groups
        .iter()
        .map(|(n, m)| TagGroup::new(n.clone(), m.iter().copied()).unwrap())
        .collect();
    WeightConfig::new(gs, relations)
}

/// Longest chain of groups ending at `g` (counting `g`), by exhaustive
/// recursion over the relation list.
pub fn chain_length(g: &str, relations: &[(String, String)]) -> u64 {
    1 + relations
        .iter()
        .filter(|(_, greater)| greater == g)
        .map(|(lesser, _)| chain_length(lesser, relations))
        .max()
        .unwrap_or(0)
}

/// A random review problem: 2..=8 tags, 2..=20 distinct examples, random
/// labels and weights.
pub fn review_case(seed: u64) -> (Vec<LabeledExample>, WeightTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tags = rng.random_range(2..=8);
    let u = universe(tags);
    let max = ((1usize << tags) - 1).min(20);
    let count = rng.random_range(2..=max);
    let labeled = random_labeled(&mut rng, &u, count);
    let w = random_weights(&mut rng, &u, 4);
    (labeled, w)
}
