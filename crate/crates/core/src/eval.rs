//! Evaluation harness: random test scenarios, the CoinFlip and MostFreq
//! baselines, and per-target accuracy reports.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64`. Test generation
//! draws a size uniformly from `1..=min(max_tags, |vocabulary|)`, then that
//! many distinct vocabulary positions with `rand::seq::index::sample`, and
//! rejects scenarios already in the training rows or already emitted.
//! CoinFlip for target `i` draws `random_bool(0.5)` (true = allow) from the
//! stream seeded with `seed ^ (i * 0x9E3779B97F4A7C15)`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Dataset, Decision, LabeledExample, ModelError, Scenario, TagId};
use crate::par::Strategy;
use crate::predict::{predict, PredictError, Provenance};
use crate::weights::resolve_table;

pub const DEFAULT_MAX_TAGS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("ExhaustedSpace: requested {requested} scenarios but only {available} distinct unseen scenarios exist")]
    ExhaustedSpace { requested: usize, available: u128 },
    #[error("EmptyVocabulary: no tags to build test scenarios from")]
    EmptyVocabulary,
    #[error("InvalidSpec: {0}")]
    InvalidSpec(&'static str),
    #[error("MissingGroundTruth: test {test} has no decision for target {target}")]
    MissingGroundTruth { test: usize, target: String },
    #[error("EmptyLabeledSet: target {0} has no training examples")]
    EmptyLabeledSet(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestScenarioSpec {
    pub count: usize,
    pub max_tags: usize,
    pub seed: u64,
    pub vocabulary: Vec<TagId>,
}

impl TestScenarioSpec {
    /// Half the row count (rounded up), at most three tags, drawn from the
    /// tags the dataset's rows use.
    pub fn for_dataset(dataset: &Dataset, seed: u64) -> Self {
        TestScenarioSpec {
            count: default_test_count(dataset.rows().len()),
            max_tags: DEFAULT_MAX_TAGS,
            seed,
            vocabulary: dataset.used_tags(),
        }
    }
}

pub fn default_test_count(rows: usize) -> usize {
    rows.div_ceil(2).max(1)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i as u128 + 1)
    })
}

pub fn generate_tests(
    spec: &TestScenarioSpec,
    dataset: &Dataset,
) -> Result<Vec<Scenario>, EvalError> {
    if spec.count == 0 {
        return Err(EvalError::InvalidSpec("count must be at least 1"));
    }
    if spec.max_tags == 0 {
        return Err(EvalError::InvalidSpec("max_tags must be at least 1"));
    }
    let mut vocab = spec.vocabulary.clone();
    vocab.sort_unstable();
    vocab.dedup();
    if vocab.is_empty() {
        return Err(EvalError::EmptyVocabulary);
    }
    let universe = dataset.universe();
    let max_size = spec.max_tags.min(vocab.len());
    let in_space = |s: &Scenario| {
        s.len() <= max_size && s.members().iter().all(|t| vocab.binary_search(t).is_ok())
    };
    let training: HashSet<&Scenario> = dataset.rows().iter().map(|r| &r.scenario).collect();
    let space: u128 = (1..=max_size)
        .map(|k| binomial(vocab.len(), k))
        .fold(0, u128::saturating_add);
    let available = space - training.iter().filter(|s| in_space(s)).count() as u128;
    if spec.count as u128 > available {
        return Err(EvalError::ExhaustedSpace {
            requested: spec.count,
            available,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut emitted: HashSet<Scenario> = HashSet::new();
    let mut out = Vec::with_capacity(spec.count);
    let budget = 100 * spec.count + 1000;
    for _ in 0..budget {
        if out.len() == spec.count {
            break;
        }
        let size = rng.random_range(1..=max_size);
        let picks = sample(&mut rng, vocab.len(), size);
        let s = universe.scenario_from_ids(picks.iter().map(|i| vocab[i]))?;
        if training.contains(&s) || emitted.contains(&s) {
            continue;
        }
        emitted.insert(s.clone());
        out.push(s);
    }
    if out.len() < spec.count {
        return Err(EvalError::ExhaustedSpace {
            requested: spec.count,
            available,
        });
    }
    Ok(out)
}

pub fn coinflip_baseline(count: usize, seed: u64) -> Vec<Decision> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            if rng.random_bool(0.5) {
                Decision::Allow
            } else {
                Decision::Deny
            }
        })
        .collect()
}

fn coinflip_seed(seed: u64, target_index: usize) -> u64 {
    seed ^ (target_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Majority training label; an even split is deny.
pub fn mostfreq_baseline(labeled: &[LabeledExample]) -> Result<Decision, PredictError> {
    if labeled.is_empty() {
        return Err(PredictError::EmptyLabeledSet);
    }
    let allow = labeled
        .iter()
        .filter(|e| e.decision == Decision::Allow)
        .count();
    Ok(if 2 * allow > labeled.len() {
        Decision::Allow
    } else {
        Decision::Deny
    })
}

/// A test scenario with its ground truth per target name. An empty map
/// means unlabeled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestCase {
    pub scenario: Scenario,
    pub truth: BTreeMap<String, Decision>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TieCounts {
    pub no_majority: usize,
    pub resolved_by_elimination: usize,
    pub default_denied: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Accuracy {
    pub pybe: Option<f64>,
    pub coinflip: Option<f64>,
    pub mostfreq: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRecord {
    pub query: String,
    pub predicted: Decision,
    pub provenance: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eliminated: Option<String>,
    pub similarity: String,
    pub neighbors: Vec<String>,
    pub coinflip: Decision,
    pub truth: Option<Decision>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetReport {
    pub target: String,
    pub tests: usize,
    pub mostfreq_label: Decision,
    pub accuracy: Accuracy,
    pub ties: TieCounts,
    pub records: Vec<EvalRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub seed: u64,
    pub tests: usize,
    pub labeled: bool,
    pub targets: Vec<TargetReport>,
    /// Mean over targets of each accuracy.
    pub mean_accuracy: Accuracy,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn target(&self, name: &str) -> Option<&TargetReport> {
        self.targets.iter().find(|t| t.target == name)
    }

    /// Plain-text summary table.
    pub fn render_table(&self) -> String {
        let pct =
            |a: Option<f64>| a.map_or_else(|| "-".to_string(), |v| format!("{:.1}%", 100.0 * v));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>8} {:>9} {:>9} {:>6} {:>9} {:>8}",
            "target", "tests", "pybe", "coinflip", "mostfreq", "ties", "resolved", "denied"
        );
        for t in &self.targets {
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>8} {:>9} {:>9} {:>6} {:>9} {:>8}",
                t.target,
                t.tests,
                pct(t.accuracy.pybe),
                pct(t.accuracy.coinflip),
                pct(t.accuracy.mostfreq),
                t.ties.no_majority,
                t.ties.resolved_by_elimination,
                t.ties.default_denied
            );
        }
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>8} {:>9} {:>9}",
            "mean",
            self.tests,
            pct(self.mean_accuracy.pybe),
            pct(self.mean_accuracy.coinflip),
            pct(self.mean_accuracy.mostfreq)
        );
        out
    }
}

fn accuracy(hits: usize, n: usize, labeled: bool) -> Option<f64> {
    (labeled && n > 0).then(|| hits as f64 / n as f64)
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn eval_target(
    dataset: &Dataset,
    target_index: usize,
    tests: &[TestCase],
    seed: u64,
    labeled_run: bool,
) -> Result<TargetReport, EvalError> {
    let target = dataset.targets()[target_index].name().to_string();
    let training = dataset.per_target_view(&target)?;
    if training.is_empty() {
        return Err(EvalError::EmptyLabeledSet(target));
    }
    let w = resolve_table(dataset, &target);
    let mostfreq = mostfreq_baseline(&training).expect("training is non-empty");
    let flips = coinflip_baseline(tests.len(), coinflip_seed(seed, target_index));
    let u = dataset.universe();

    let mut ties = TieCounts::default();
    let (mut hit_pybe, mut hit_coin, mut hit_most) = (0, 0, 0);
    let mut records = Vec::with_capacity(tests.len());
    for (i, case) in tests.iter().enumerate() {
        let p = predict(&case.scenario, &training, &w).map_err(|e| match e {
            PredictError::EmptyLabeledSet => EvalError::EmptyLabeledSet(target.clone()),
            PredictError::Model(m) => EvalError::Model(m),
        })?;
        let truth = if labeled_run {
            Some(
                *case
                    .truth
                    .get(&target)
                    .ok_or_else(|| EvalError::MissingGroundTruth {
                        test: i,
                        target: target.clone(),
                    })?,
            )
        } else {
            None
        };
        let eliminated = match p.provenance {
            Provenance::Majority => None,
            Provenance::TieBreakElimination { removed } => {
                ties.no_majority += 1;
                ties.resolved_by_elimination += 1;
                Some(u.render(&training[removed].scenario))
            }
            Provenance::DefaultDeny => {
                ties.no_majority += 1;
                ties.default_denied += 1;
                None
            }
        };
        if let Some(t) = truth {
            hit_pybe += usize::from(p.decision == t);
            hit_coin += usize::from(flips[i] == t);
            hit_most += usize::from(mostfreq == t);
        }
        records.push(EvalRecord {
            query: u.render(&case.scenario),
            predicted: p.decision,
            provenance: p.provenance.label(),
            eliminated,
            similarity: p.neighbors.similarity.to_string(),
            neighbors: p
                .neighbors
                .members
                .iter()
                .map(|&j| u.render(&training[j].scenario))
                .collect(),
            coinflip: flips[i],
            truth,
        });
    }
    let n = tests.len();
    Ok(TargetReport {
        target,
        tests: n,
        mostfreq_label: mostfreq,
        accuracy: Accuracy {
            pybe: accuracy(hit_pybe, n, labeled_run),
            coinflip: accuracy(hit_coin, n, labeled_run),
            mostfreq: accuracy(hit_most, n, labeled_run),
        },
        ties,
        records,
    })
}

fn assemble(
    dataset: &Dataset,
    tests: &[TestCase],
    seed: u64,
    labeled_run: bool,
    strategy: Strategy,
) -> Result<EvalReport, EvalError> {
    for case in tests {
        dataset.universe().check(&case.scenario)?;
    }
    let targets = strategy
        .map_range(dataset.targets().len(), |t| {
            eval_target(dataset, t, tests, seed, labeled_run)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mean_accuracy = Accuracy {
        pybe: mean(targets.iter().map(|t| t.accuracy.pybe)),
        coinflip: mean(targets.iter().map(|t| t.accuracy.coinflip)),
        mostfreq: mean(targets.iter().map(|t| t.accuracy.mostfreq)),
    };
    Ok(EvalReport {
        seed,
        tests: tests.len(),
        labeled: labeled_run,
        targets,
        mean_accuracy,
    })
}

/// Scores predictions and both baselines against ground truth, per target.
pub fn run_eval(dataset: &Dataset, tests: &[TestCase], seed: u64) -> Result<EvalReport, EvalError> {
    run_eval_with(dataset, tests, seed, Strategy::default())
}

pub fn run_eval_with(
    dataset: &Dataset,
    tests: &[TestCase],
    seed: u64,
    strategy: Strategy,
) -> Result<EvalReport, EvalError> {
    assemble(dataset, tests, seed, true, strategy)
}

/// Predictions and tie statistics for unlabeled scenarios; accuracies are
/// left empty.
pub fn run_unlabeled(
    dataset: &Dataset,
    scenarios: &[Scenario],
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let tests: Vec<TestCase> = scenarios
        .iter()
        .map(|s| TestCase {
            scenario: s.clone(),
            truth: BTreeMap::new(),
        })
        .collect();
    assemble(dataset, &tests, seed, false, Strategy::default())
}
