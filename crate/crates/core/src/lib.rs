//! Learns per-target allow/deny policies from labeled example scenarios.
//!
//! A scenario is a conjunction of tags. Predictions use every labeled example
//! at the single closest distance (no `k` parameter) under an exact rational
//! similarity, with a mutual-neighbor tie-break and a deny default. The
//! [`active`] module builds the nearest-neighbor graph over a labeled set and
//! proposes label flips that repair majority violations.

pub mod active;
pub mod eval;
pub mod metric;
pub mod model;
pub mod par;
pub mod persist;
pub mod predict;
pub mod weights;

pub use active::{NnGraph, ReviewSession, SessionStatus, Suggestion, Violation, ViolationKind};
pub use metric::{mu, mu_weighted, DifferenceProfile, Similarity, WeightPair, WeightTable};
pub use model::{Dataset, Decision, LabeledExample, PolicyTarget, Scenario, TagId, Universe};
pub use predict::{nearest_neighbors, predict, NeighborSet, Prediction, Provenance, Vote};
pub use weights::{synthesize_weights, PartialOrder, TagGroup, WeightConfig, WeightSettings};
