//! JSON shapes shared by the HTTP API and the CLI's `--json` output.
//! Similarities are always exact fraction strings.

use polex_core::metric::WeightTable;
use polex_core::weights::WeightConfig;
use polex_core::{
    Dataset, Decision, LabeledExample, Prediction, Provenance, Scenario, Suggestion, Universe, Vote,
};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborDocument {
    pub row: usize,
    pub scenario: Vec<String>,
    pub text: String,
    pub decision: Decision,
    pub similarity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionDocument {
    pub target: String,
    pub query: Vec<String>,
    pub decision: Decision,
    pub provenance: &'static str,
    pub similarity: String,
    pub vote: Vote,
    pub decisive_vote: Vote,
    /// The non-mutual neighbor dropped to break a tie.
    pub eliminated: Option<NeighborDocument>,
    pub neighbors: Vec<NeighborDocument>,
}

fn names(u: &Universe, s: &Scenario) -> Vec<String> {
    u.tag_names(s).map(str::to_string).collect()
}

impl PredictionDocument {
    pub fn new(
        universe: &Universe,
        target: &str,
        query: &Scenario,
        labeled: &[LabeledExample],
        p: &Prediction,
    ) -> Self {
        let similarity = p.neighbors.similarity.to_string();
        let neighbor = |row: usize| NeighborDocument {
            row,
            scenario: names(universe, &labeled[row].scenario),
            text: universe.render(&labeled[row].scenario),
            decision: labeled[row].decision,
            similarity: similarity.clone(),
        };
        PredictionDocument {
            target: target.to_string(),
            query: names(universe, query),
            decision: p.decision,
            provenance: p.provenance.label(),
            similarity: similarity.clone(),
            vote: p.vote,
            decisive_vote: p.decisive_vote,
            eliminated: match p.provenance {
                Provenance::TieBreakElimination { removed } => Some(neighbor(removed)),
                _ => None,
            },
            neighbors: p.neighbors.members.iter().map(|&r| neighbor(r)).collect(),
        }
    }

    /// `DENY (majority; nearest: Home+Photo @ 3/4)`
    pub fn summary_line(&self) -> String {
        let nearest: Vec<&str> = self.neighbors.iter().map(|n| n.text.as_str()).collect();
        let mut line = format!(
            "{} ({}; nearest: {} @ {})",
            self.decision.as_str().to_uppercase(),
            self.provenance,
            nearest.join(", "),
            self.similarity
        );
        if let Some(e) = &self.eliminated {
            line.push_str(&format!("; eliminated {}", e.text));
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuggestionDocument {
    pub vertex: usize,
    pub scenario: Vec<String>,
    pub text: String,
    pub current: Decision,
    pub proposed: Decision,
    pub delta: i64,
}

impl SuggestionDocument {
    pub fn new(universe: &Universe, s: &Suggestion) -> Self {
        SuggestionDocument {
            vertex: s.vertex,
            scenario: names(universe, &s.scenario),
            text: universe.render(&s.scenario),
            current: s.current,
            proposed: s.proposed,
            delta: s.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagWeight {
    pub tag: String,
    pub w0: u64,
    pub w1: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupView {
    pub name: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigView {
    pub groups: Vec<GroupView>,
    pub order: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightsDocument {
    pub target: String,
    pub weights: Vec<TagWeight>,
    pub config: Option<ConfigView>,
}

impl WeightsDocument {
    pub fn new(dataset: &Dataset, target: &str, table: &WeightTable) -> Self {
        let u = dataset.universe();
        WeightsDocument {
            target: target.to_string(),
            weights: u
                .ids()
                .map(|id| {
                    let p = table.get(id);
                    TagWeight {
                        tag: u.name(id).unwrap_or_default().to_string(),
                        w0: p.w0(),
                        w1: p.w1(),
                    }
                })
                .collect(),
            config: dataset
                .weights()
                .config_for(target)
                .map(|c| config_view(c, u)),
        }
    }
}

pub fn config_view(c: &WeightConfig, u: &Universe) -> ConfigView {
    ConfigView {
        groups: c
            .groups()
            .iter()
            .map(|g| GroupView {
                name: g.name.clone(),
                tags: g
                    .members()
                    .iter()
                    .filter_map(|&t| u.name(t))
                    .map(str::to_string)
                    .collect(),
            })
            .collect(),
        order: c.named_relations(),
    }
}
