//! Nearest-neighbor prediction.
//!
//! The neighbor set of a query is every labeled example at the single
//! highest similarity. A strict majority of that set decides. On an even
//! split the first neighbor (in row order) that is not a mutual neighbor is
//! dropped, which always leaves a strict majority for binary labels. If every
//! neighbor is mutual the prediction is deny.

use serde::Serialize;
use thiserror::Error;

use crate::metric::{mu_weighted_unchecked, Similarity, WeightTable};
use crate::model::{Decision, LabeledExample, ModelError, Scenario};
use crate::par::Strategy;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("EmptyLabeledSet: no labeled examples to compare against")]
    EmptyLabeledSet,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Labeled examples tied at the highest similarity to a query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NeighborSet {
    pub similarity: Similarity,
    /// Indices into the labeled list, ascending.
    pub members: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Vote {
    pub allow: usize,
    pub deny: usize,
}

impl Vote {
    pub fn tally<'a>(labels: impl IntoIterator<Item = &'a Decision>) -> Vote {
        let mut v = Vote::default();
        for d in labels {
            match d {
                Decision::Allow => v.allow += 1,
                Decision::Deny => v.deny += 1,
            }
        }
        v
    }

    /// The label held by more than half the votes.
    pub fn majority(self) -> Option<Decision> {
        use std::cmp::Ordering::*;
        match self.allow.cmp(&self.deny) {
            Greater => Some(Decision::Allow),
            Less => Some(Decision::Deny),
            Equal => None,
        }
    }

    pub fn total(self) -> usize {
        self.allow + self.deny
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Majority,
    /// `removed` is the labeled index of the dropped non-mutual neighbor.
    TieBreakElimination {
        removed: usize,
    },
    DefaultDeny,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Majority => "majority",
            Provenance::TieBreakElimination { .. } => "tie-break",
            Provenance::DefaultDeny => "default-deny",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub decision: Decision,
    pub provenance: Provenance,
    pub neighbors: NeighborSet,
    /// Labels of the full neighbor set.
    pub vote: Vote,
    /// Labels that decided the outcome: `vote` minus any eliminated neighbor.
    pub decisive_vote: Vote,
}

fn check_universe(query: &Scenario, labeled: &[LabeledExample]) -> Result<(), PredictError> {
    if labeled.iter().any(|e| !e.scenario.same_universe(query)) {
        return Err(ModelError::UniverseMismatch.into());
    }
    Ok(())
}

// Argmax over (index, scenario) candidates; ties keep every index in input order.
fn argmax<'a, I>(query: &Scenario, candidates: I, w: &WeightTable) -> Option<NeighborSet>
where
    I: IntoIterator<Item = (usize, &'a Scenario)>,
{
    let mut best: Option<NeighborSet> = None;
    for (i, s) in candidates {
        let sim = mu_weighted_unchecked(query, s, w);
        match &mut best {
            Some(b) if sim < b.similarity => {}
            Some(b) if sim == b.similarity => b.members.push(i),
            _ => {
                best = Some(NeighborSet {
                    similarity: sim,
                    members: vec![i],
                })
            }
        }
    }
    best
}

/// The neighbor set of `query` among `labeled`, optionally skipping one index.
pub fn nearest_neighbors(
    query: &Scenario,
    labeled: &[LabeledExample],
    w: &WeightTable,
    exclude: Option<usize>,
) -> Result<NeighborSet, PredictError> {
    check_universe(query, labeled)?;
    argmax(
        query,
        labeled
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, e)| (i, &e.scenario)),
        w,
    )
    .ok_or(PredictError::EmptyLabeledSet)
}

// Whether `query` would be among the nearest neighbors of labeled[q] if it
// were added to the labeled set (with labeled[q] itself left out).
fn query_is_neighbor_of(
    q: usize,
    sim_to_query: &Similarity,
    labeled: &[LabeledExample],
    w: &WeightTable,
) -> bool {
    let anchor = &labeled[q].scenario;
    labeled
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != q)
        .all(|(_, e)| &mu_weighted_unchecked(anchor, &e.scenario, w) <= sim_to_query)
}

pub fn predict(
    query: &Scenario,
    labeled: &[LabeledExample],
    w: &WeightTable,
) -> Result<Prediction, PredictError> {
    let neighbors = nearest_neighbors(query, labeled, w, None)?;
    let vote = Vote::tally(neighbors.members.iter().map(|&i| &labeled[i].decision));
    if let Some(decision) = vote.majority() {
        return Ok(Prediction {
            decision,
            provenance: Provenance::Majority,
            neighbors,
            vote,
            decisive_vote: vote,
        });
    }
    let non_mutual = neighbors
        .members
        .iter()
        .copied()
        .find(|&q| !query_is_neighbor_of(q, &neighbors.similarity, labeled, w));
    match non_mutual {
        Some(removed) => {
            let decisive_vote = Vote::tally(
                neighbors
                    .members
                    .iter()
                    .filter(|&&i| i != removed)
                    .map(|&i| &labeled[i].decision),
            );
            // an even split minus one member is odd, hence decided
            let decision = decisive_vote.majority().expect("odd vote has a majority");
            Ok(Prediction {
                decision,
                provenance: Provenance::TieBreakElimination { removed },
                neighbors,
                vote,
                decisive_vote,
            })
        }
        None => Ok(Prediction {
            decision: Decision::Deny,
            provenance: Provenance::DefaultDeny,
            neighbors,
            vote,
            decisive_vote: vote,
        }),
    }
}

/// Predicts every query against the same labeled set, in input order.
pub fn predict_batch(
    queries: &[Scenario],
    labeled: &[LabeledExample],
    w: &WeightTable,
    strategy: Strategy,
) -> Result<Vec<Prediction>, PredictError> {
    strategy
        .map_slice(queries, |q| predict(q, labeled, w))
        .into_iter()
        .collect()
}
