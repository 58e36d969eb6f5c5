//! Tags, scenarios, decisions and the per-target dataset.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::weights::WeightSettings;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("EmptyUniverse: at least one tag is required")]
    EmptyUniverse,
    #[error("EmptyName: tag and target names must be non-empty")]
    EmptyName,
    #[error(
        "InvalidTagName: {0:?} (tag names may not contain '+', ',' or surrounding whitespace)"
    )]
    InvalidTagName(String),
    #[error("DuplicateTag: {0}")]
    DuplicateTag(String),
    #[error("UnknownTag: {0}")]
    UnknownTag(String),
    #[error("EmptyScenario: a scenario needs at least one tag")]
    EmptyScenario,
    #[error("TagOutOfRange: tag id {0} is not in the universe")]
    TagOutOfRange(u32),
    #[error("UniverseMismatch: scenario belongs to a different tag universe")]
    UniverseMismatch,
    #[error("UnknownTarget: {0}")]
    UnknownTarget(String),
    #[error("DuplicateTarget: {0}")]
    DuplicateTarget(String),
    #[error("MissingDecision: row {row} has {found} decisions, expected {expected}")]
    MissingDecision {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("ConflictingDuplicate: rows {first} and {second} share a scenario but disagree on target {target}")]
    ConflictingDuplicate {
        first: usize,
        second: usize,
        target: String,
    },
    #[error("UnknownRow: {0}")]
    UnknownRow(usize),
    #[error(transparent)]
    Weights(#[from] crate::weights::WeightError),
}

/// Dense tag index, equal to the tag's insertion rank in its [`Universe`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TagId(pub u32);

impl TagId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Identity of a universe, derived from its ordered tag names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UniverseKey(u64);

/// The ordered set of tags (Boolean variables) scenarios are built from.
#[derive(Clone, Debug)]
pub struct Universe {
    names: Vec<String>,
    index: HashMap<String, TagId>,
    key: UniverseKey,
}

impl PartialEq for Universe {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl Eq for Universe {}

pub(crate) fn validate_name(name: &str) -> Result<(), ModelError> {
    if name.is_empty() || name.trim().is_empty() {
        return Err(ModelError::EmptyName);
    }
    if name.trim() != name || name.contains('+') || name.contains(',') {
        return Err(ModelError::InvalidTagName(name.to_string()));
    }
    Ok(())
}

impl Universe {
    /// Builds a universe with ids assigned in input order.
    pub fn new<I, S>(names: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for name in names {
            let name: String = name.into();
            validate_name(&name)?;
            let id = TagId(out.len() as u32);
            if index.insert(name.clone(), id).is_some() {
                return Err(ModelError::DuplicateTag(name));
            }
            out.push(name);
        }
        if out.is_empty() {
            return Err(ModelError::EmptyUniverse);
        }
        let mut hasher = DefaultHasher::new();
        out.hash(&mut hasher);
        Ok(Universe {
            key: UniverseKey(hasher.finish()),
            names: out,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn key(&self) -> UniverseKey {
        self.key
    }

    pub fn id(&self, name: &str) -> Option<TagId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: TagId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = TagId> + '_ {
        (0..self.names.len() as u32).map(TagId)
    }

    /// Builds a canonical scenario from tag names. Repeated names collapse.
    pub fn scenario<I, S>(&self, names: I) -> Result<Scenario, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ids = BTreeSet::new();
        for name in names {
            let name = name.as_ref();
            let id = self
                .id(name)
                .ok_or_else(|| ModelError::UnknownTag(name.to_string()))?;
            ids.insert(id);
        }
        if ids.is_empty() {
            return Err(ModelError::EmptyScenario);
        }
        Ok(Scenario {
            universe: self.key,
            members: ids.into_iter().collect(),
        })
    }

    /// Parses `tag+tag+tag` scenario text.
    pub fn parse_scenario(&self, text: &str) -> Result<Scenario, ModelError> {
        let parts: Vec<&str> = text
            .split('+')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        self.scenario(parts)
    }

    pub fn scenario_from_ids<I>(&self, ids: I) -> Result<Scenario, ModelError>
    where
        I: IntoIterator<Item = TagId>,
    {
        let mut set = BTreeSet::new();
        for id in ids {
            if id.index() >= self.len() {
                return Err(ModelError::TagOutOfRange(id.0));
            }
            set.insert(id);
        }
        if set.is_empty() {
            return Err(ModelError::EmptyScenario);
        }
        Ok(Scenario {
            universe: self.key,
            members: set.into_iter().collect(),
        })
    }

    pub fn check(&self, scenario: &Scenario) -> Result<(), ModelError> {
        if scenario.universe != self.key {
            return Err(ModelError::UniverseMismatch);
        }
        Ok(())
    }

    pub fn tag_names<'a>(&'a self, scenario: &'a Scenario) -> impl Iterator<Item = &'a str> + 'a {
        scenario
            .members
            .iter()
            .map(move |id| self.names[id.index()].as_str())
    }

    /// `Home+Photo`
    pub fn render(&self, scenario: &Scenario) -> String {
        self.tag_names(scenario).collect::<Vec<_>>().join("+")
    }

    /// `{Home,Photo}`
    pub fn render_set(&self, scenario: &Scenario) -> String {
        format!(
            "{{{}}}",
            self.tag_names(scenario).collect::<Vec<_>>().join(",")
        )
    }
}

/// A non-empty conjunction of tags, stored as ascending tag ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scenario {
    universe: UniverseKey,
    members: Vec<TagId>,
}

impl Scenario {
    pub fn members(&self) -> &[TagId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: TagId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    pub fn universe_key(&self) -> UniverseKey {
        self.universe
    }

    pub(crate) fn same_universe(&self, other: &Scenario) -> bool {
        self.universe == other.universe
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Decision {
    Deny,
    Allow,
}

impl Decision {
    pub fn from_bit(bit: u8) -> Option<Decision> {
        match bit {
            0 => Some(Decision::Deny),
            1 => Some(Decision::Allow),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Decision::Deny => 0,
            Decision::Allow => 1,
        }
    }

    pub fn flipped(self) -> Decision {
        match self {
            Decision::Deny => Decision::Allow,
            Decision::Allow => Decision::Deny,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Deny => "deny",
            Decision::Allow => "allow",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Decision {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "deny" => Ok(Decision::Deny),
            "allow" => Ok(Decision::Allow),
            other => Err(serde::de::Error::custom(format!(
                "expected \"allow\" or \"deny\", got {other:?}"
            ))),
        }
    }
}

/// The action a policy governs, e.g. `WorkCloud`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PolicyTarget(String);

impl PolicyTarget {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(ModelError::EmptyName);
        }
        Ok(PolicyTarget(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PolicyTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub scenario: Scenario,
    pub decision: Decision,
}

impl LabeledExample {
    pub fn new(scenario: Scenario, decision: Decision) -> Self {
        LabeledExample { scenario, decision }
    }
}

/// One scenario with a decision per target, in target declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub scenario: Scenario,
    pub decisions: Vec<Decision>,
}

/// A user's specification: scenarios labeled for every policy target.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    universe: Universe,
    targets: Vec<PolicyTarget>,
    rows: Vec<Row>,
    weights: WeightSettings,
}

impl Dataset {
    /// Validates and builds a dataset. Rows repeating an earlier scenario
    /// with identical decisions are dropped with a warning; conflicting
    /// repeats are rejected.
    pub fn new(
        universe: Universe,
        targets: Vec<PolicyTarget>,
        rows: Vec<Row>,
        weights: WeightSettings,
    ) -> Result<Self, ModelError> {
        let mut seen_targets = BTreeSet::new();
        for t in &targets {
            if !seen_targets.insert(t.name()) {
                return Err(ModelError::DuplicateTarget(t.name().to_string()));
            }
        }
        let mut kept: Vec<Row> = Vec::with_capacity(rows.len());
        let mut first_seen: HashMap<Scenario, (usize, usize)> = HashMap::new();
        for (i, row) in rows.into_iter().enumerate() {
            universe.check(&row.scenario)?;
            if row.decisions.len() != targets.len() {
                return Err(ModelError::MissingDecision {
                    row: i,
                    found: row.decisions.len(),
                    expected: targets.len(),
                });
            }
            if let Some(&(orig, kept_at)) = first_seen.get(&row.scenario) {
                let prev = &kept[kept_at];
                if let Some(t) = (0..targets.len()).find(|&t| prev.decisions[t] != row.decisions[t])
                {
                    return Err(ModelError::ConflictingDuplicate {
                        first: orig,
                        second: i,
                        target: targets[t].name().to_string(),
                    });
                }
                log::warn!(
                    "row {i} repeats the scenario of row {orig} with identical decisions; dropped"
                );
                continue;
            }
            first_seen.insert(row.scenario.clone(), (i, kept.len()));
            kept.push(row);
        }
        weights.validate(&universe, &targets)?;
        Ok(Dataset {
            universe,
            targets,
            rows: kept,
            weights,
        })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn targets(&self) -> &[PolicyTarget] {
        &self.targets
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn weights(&self) -> &WeightSettings {
        &self.weights
    }

    pub fn target_index(&self, target: &str) -> Result<usize, ModelError> {
        self.targets
            .iter()
            .position(|t| t.name() == target)
            .ok_or_else(|| ModelError::UnknownTarget(target.to_string()))
    }

    /// The labeled examples for one target, in row order.
    pub fn per_target_view(&self, target: &str) -> Result<Vec<LabeledExample>, ModelError> {
        let t = self.target_index(target)?;
        Ok(self
            .rows
            .iter()
            .map(|r| LabeledExample::new(r.scenario.clone(), r.decisions[t]))
            .collect())
    }

    pub fn set_decision(
        &mut self,
        row: usize,
        target: &str,
        decision: Decision,
    ) -> Result<(), ModelError> {
        let t = self.target_index(target)?;
        let r = self.rows.get_mut(row).ok_or(ModelError::UnknownRow(row))?;
        r.decisions[t] = decision;
        Ok(())
    }

    /// Replaces the weight settings, revalidating them against this dataset.
    pub fn set_weights(&mut self, weights: WeightSettings) -> Result<(), ModelError> {
        weights.validate(&self.universe, &self.targets)?;
        self.weights = weights;
        Ok(())
    }

    /// Tags that occur in at least one row, in id order.
    pub fn used_tags(&self) -> Vec<TagId> {
        let set: BTreeSet<TagId> = self
            .rows
            .iter()
            .flat_map(|r| r.scenario.members().iter().copied())
            .collect();
        set.into_iter().collect()
    }
}
