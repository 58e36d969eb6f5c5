//! Nearest-neighbor graph over a labeled set and the greedy review loop.
//!
//! Every vertex points at its neighbor set computed without itself. Two
//! invariants are checked per vertex: its neighbors have a strict-majority
//! label, and (when they do) its own label matches that majority. The review
//! loop repeatedly proposes the unvisited label flip that removes the most
//! violations, until every vertex was proposed, the cap is hit, or no
//! violations remain.

use std::collections::BTreeSet;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::WeightTable;
use crate::model::{Dataset, Decision, LabeledExample, ModelError, Scenario};
use crate::par::Strategy;
use crate::predict::{nearest_neighbors, NeighborSet, PredictError, Vote};
use crate::weights::resolve_table;

/// Suggestions per session unless configured otherwise.
pub const DEFAULT_CAP: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReviewError {
    #[error("TooFewExamples: a review needs at least 2 examples, found {0}")]
    TooFewExamples(usize),
    #[error("SessionClosed: the session has no further suggestions")]
    SessionClosed,
    #[error(
        "StaleSuggestion: response for vertex {got} but the pending suggestion is {expected:?}"
    )]
    StaleSuggestion { expected: Option<usize>, got: usize },
    #[error("UnknownVertex: {0}")]
    UnknownVertex(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<PredictError> for ReviewError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::EmptyLabeledSet => ReviewError::TooFewExamples(1),
            PredictError::Model(m) => ReviewError::Model(m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Neighbors are evenly split.
    NoMajority,
    /// Neighbors have a majority and the vertex disagrees with it.
    DisagreesWithMajority,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub vertex: usize,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NnGraph {
    scenarios: Vec<Scenario>,
    labels: Vec<Decision>,
    neighbors: Vec<NeighborSet>,
    // reverse[v] = vertices whose neighbor set contains v
    reverse: Vec<Vec<usize>>,
}

impl NnGraph {
    pub fn build(labeled: &[LabeledExample], w: &WeightTable) -> Result<Self, ReviewError> {
        Self::build_with(labeled, w, Strategy::default())
    }

    pub fn build_with(
        labeled: &[LabeledExample],
        w: &WeightTable,
        strategy: Strategy,
    ) -> Result<Self, ReviewError> {
        if labeled.len() < 2 {
            return Err(ReviewError::TooFewExamples(labeled.len()));
        }
        let neighbors = strategy
            .map_range(labeled.len(), |v| {
                nearest_neighbors(&labeled[v].scenario, labeled, w, Some(v))
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let mut reverse = vec![Vec::new(); labeled.len()];
        for (v, n) in neighbors.iter().enumerate() {
            for &u in &n.members {
                reverse[u].push(v);
            }
        }
        Ok(NnGraph {
            scenarios: labeled.iter().map(|e| e.scenario.clone()).collect(),
            labels: labeled.iter().map(|e| e.decision).collect(),
            neighbors,
            reverse,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, v: usize) -> Decision {
        self.labels[v]
    }

    pub fn labels(&self) -> &[Decision] {
        &self.labels
    }

    pub fn scenario(&self, v: usize) -> &Scenario {
        &self.scenarios[v]
    }

    pub fn neighbors(&self, v: usize) -> &NeighborSet {
        &self.neighbors[v]
    }

    /// All neighbor sets, indexed by vertex.
    pub fn adjacency(&self) -> &[NeighborSet] {
        &self.neighbors
    }

    pub fn neighbor_vote(&self, v: usize) -> Vote {
        Vote::tally(self.neighbors[v].members.iter().map(|&u| &self.labels[u]))
    }

    fn violation_with(&self, v: usize, labels: &[Decision]) -> Option<ViolationKind> {
        let vote = Vote::tally(self.neighbors[v].members.iter().map(|&u| &labels[u]));
        match vote.majority() {
            None => Some(ViolationKind::NoMajority),
            Some(m) if m != labels[v] => Some(ViolationKind::DisagreesWithMajority),
            Some(_) => None,
        }
    }

    pub fn violation_at(&self, v: usize) -> Option<ViolationKind> {
        self.violation_with(v, &self.labels)
    }

    pub fn violations(&self) -> Vec<Violation> {
        (0..self.len())
            .filter_map(|v| {
                self.violation_at(v)
                    .map(|kind| Violation { vertex: v, kind })
            })
            .collect()
    }

    pub fn violation_count(&self) -> usize {
        (0..self.len())
            .filter(|&v| self.violation_at(v).is_some())
            .count()
    }

    /// Decrease in the violation count if `v`'s label were flipped. Only `v`
    /// and the vertices that have `v` as a neighbor can change status.
    pub fn flip_delta(&self, v: usize) -> i64 {
        let mut affected: Vec<usize> = self.reverse[v].clone();
        affected.push(v);
        affected.sort_unstable();
        affected.dedup();
        let before = affected
            .iter()
            .filter(|&&u| self.violation_at(u).is_some())
            .count() as i64;
        let mut flipped = self.labels.clone();
        flipped[v] = flipped[v].flipped();
        let after = affected
            .iter()
            .filter(|&&u| self.violation_with(u, &flipped).is_some())
            .count() as i64;
        before - after
    }

    pub fn flip_deltas(&self, strategy: Strategy) -> Vec<i64> {
        strategy.map_range(self.len(), |v| self.flip_delta(v))
    }

    /// Flips one label. Edges are untouched.
    pub fn flip(&mut self, v: usize) {
        self.labels[v] = self.labels[v].flipped();
    }
}

pub fn build_graph(labeled: &[LabeledExample], w: &WeightTable) -> Result<NnGraph, ReviewError> {
    NnGraph::build(labeled, w)
}

pub fn violations(graph: &NnGraph) -> Vec<Violation> {
    graph.violations()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Suggestion {
    pub vertex: usize,
    pub scenario: Scenario,
    pub current: Decision,
    pub proposed: Decision,
    pub delta: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub vertex: usize,
    pub proposed: Decision,
    pub accepted: bool,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    /// Every vertex was proposed or the cap was reached.
    Exhausted,
    /// No violations remain.
    Clean,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseOutcome {
    pub entry: LogEntry,
    pub violations_before: usize,
    pub violations_after: usize,
}

#[derive(Clone, Debug)]
pub struct ReviewSession {
    target: String,
    graph: NnGraph,
    visited: BTreeSet<usize>,
    log: Vec<LogEntry>,
    cap: usize,
    pending: Option<Suggestion>,
    status: SessionStatus,
    strategy: Strategy,
}

impl ReviewSession {
    pub fn new(dataset: &Dataset, target: &str, cap: usize) -> Result<Self, ReviewError> {
        let labeled = dataset.per_target_view(target)?;
        let w = resolve_table(dataset, target);
        Self::from_labeled(target, &labeled, &w, cap)
    }

    pub fn from_labeled(
        target: &str,
        labeled: &[LabeledExample],
        w: &WeightTable,
        cap: usize,
    ) -> Result<Self, ReviewError> {
        Ok(ReviewSession {
            target: target.to_string(),
            graph: NnGraph::build(labeled, w)?,
            visited: BTreeSet::new(),
            log: Vec::new(),
            cap,
            pending: None,
            status: SessionStatus::Active,
            strategy: Strategy::default(),
        })
    }

    /// Rebuilds a session from its saved progress. `dataset` must already
    /// contain the flips accepted so far.
    pub fn resume(
        dataset: &Dataset,
        target: &str,
        cap: usize,
        visited: impl IntoIterator<Item = usize>,
        log: Vec<LogEntry>,
    ) -> Result<Self, ReviewError> {
        let mut s = Self::new(dataset, target, cap)?;
        for v in visited {
            if v >= s.graph.len() {
                return Err(ReviewError::UnknownVertex(v));
            }
            s.visited.insert(v);
        }
        s.log = log;
        Ok(s)
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn graph(&self) -> &NnGraph {
        &self.graph
    }

    pub fn visited(&self) -> &BTreeSet<usize> {
        &self.visited
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn pending(&self) -> Option<&Suggestion> {
        self.pending.as_ref()
    }

    pub fn remaining_violations(&self) -> usize {
        self.graph.violation_count()
    }

    pub fn accepted_count(&self) -> usize {
        self.log.iter().filter(|e| e.accepted).count()
    }

    /// The pending suggestion, computing it if needed. Returns `None` (and
    /// closes the session) when no violations remain, every vertex has been
    /// proposed, or the cap is reached.
    pub fn next_suggestion(&mut self) -> Result<Option<Suggestion>, ReviewError> {
        if self.status != SessionStatus::Active {
            return Err(ReviewError::SessionClosed);
        }
        if let Some(p) = &self.pending {
            return Ok(Some(p.clone()));
        }
        if self.graph.violation_count() == 0 {
            self.status = SessionStatus::Clean;
            return Ok(None);
        }
        if self.log.len() >= self.cap || self.visited.len() >= self.graph.len() {
            self.status = SessionStatus::Exhausted;
            return Ok(None);
        }
        let deltas = self.graph.flip_deltas(self.strategy);
        let best = deltas
            .iter()
            .enumerate()
            .filter(|(v, _)| !self.visited.contains(v))
            // max delta, then lowest index
            .max_by(|(va, da), (vb, db)| da.cmp(db).then(vb.cmp(va)))
            .map(|(v, &d)| (v, d))
            .expect("an unvisited vertex exists");
        let (v, delta) = best;
        let current = self.graph.label(v);
        let s = Suggestion {
            vertex: v,
            scenario: self.graph.scenario(v).clone(),
            current,
            proposed: current.flipped(),
            delta,
        };
        self.pending = Some(s.clone());
        Ok(Some(s))
    }

    /// Records the user's answer to the pending suggestion.
    pub fn respond(&mut self, vertex: usize, accept: bool) -> Result<ResponseOutcome, ReviewError> {
        let pending = match &self.pending {
            Some(p) if p.vertex == vertex => p.clone(),
            other => {
                return Err(ReviewError::StaleSuggestion {
                    expected: other.as_ref().map(|p| p.vertex),
                    got: vertex,
                })
            }
        };
        let before = self.graph.violation_count();
        if accept {
            self.graph.flip(vertex);
        }
        self.visited.insert(vertex);
        let entry = LogEntry {
            vertex,
            proposed: pending.proposed,
            accepted: accept,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        self.log.push(entry.clone());
        self.pending = None;
        Ok(ResponseOutcome {
            entry,
            violations_before: before,
            violations_after: self.graph.violation_count(),
        })
    }

    /// `(row, new decision)` for every accepted flip, in answer order.
    pub fn accepted_flips(&self) -> Vec<(usize, Decision)> {
        self.log
            .iter()
            .filter(|e| e.accepted)
            .map(|e| (e.vertex, e.proposed))
            .collect()
    }

    /// Writes the current labels back into the dataset rows for this target.
    pub fn apply_to(&self, dataset: &mut Dataset) -> Result<(), ModelError> {
        for (v, &d) in self.graph.labels().iter().enumerate() {
            dataset.set_decision(v, &self.target, d)?;
        }
        Ok(())
    }
}
