//! Weight synthesis from a partial order over tag groups.
//!
//! A relation `lesser < greater` says the tags of `greater` matter more.
//! Each group gets a level, `1 + max(level of groups directly below it)`,
//! or 1 when nothing is below it. A tag's weight pair is `(1, level)`;
//! tags outside every group keep `(1, 1)`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::metric::{WeightPair, WeightTable};
use crate::model::{Dataset, ModelError, PolicyTarget, TagId, Universe};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeightError {
    #[error("CyclicOrder: {}", .0.join(" < "))]
    CyclicOrder(Vec<String>),
    #[error("UnknownGroupInRelation: {0}")]
    UnknownGroupInRelation(String),
    #[error("SelfRelation: group {0} related to itself")]
    SelfRelation(String),
    #[error("DuplicateGroup: {0}")]
    DuplicateGroup(String),
    #[error("EmptyGroup: {0}")]
    EmptyGroup(String),
    #[error("OverlappingGroups: tag {tag} is in both {first} and {second}")]
    OverlappingGroups {
        tag: String,
        first: String,
        second: String,
    },
    #[error("TagOutOfRange: group {group} references tag id {tag}")]
    TagOutOfRange { group: String, tag: u32 },
    #[error("UnknownTarget: weight config for undeclared target {0}")]
    UnknownTarget(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagGroup {
    pub name: String,
    members: Vec<TagId>,
}

impl TagGroup {
    pub fn new(
        name: impl Into<String>,
        members: impl IntoIterator<Item = TagId>,
    ) -> Result<Self, WeightError> {
        let name = name.into();
        let set: BTreeSet<TagId> = members.into_iter().collect();
        if set.is_empty() {
            return Err(WeightError::EmptyGroup(name));
        }
        Ok(TagGroup {
            name,
            members: set.into_iter().collect(),
        })
    }

    pub fn members(&self) -> &[TagId] {
        &self.members
    }
}

/// Relations between groups as `(lesser, greater)` group indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialOrder {
    relations: BTreeSet<(usize, usize)>,
}

impl PartialOrder {
    pub fn relations(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.relations.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WeightConfig {
    groups: Vec<TagGroup>,
    order: PartialOrder,
}

impl WeightConfig {
    /// Builds a config from groups and `(lesser, greater)` group-name pairs.
    /// Cycles are reported by [`synthesize_weights`], not here.
    pub fn new<S: AsRef<str>>(
        groups: Vec<TagGroup>,
        relations: &[(S, S)],
    ) -> Result<Self, WeightError> {
        let mut by_name = BTreeMap::new();
        let mut owner: BTreeMap<TagId, usize> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            if by_name.insert(g.name.clone(), i).is_some() {
                return Err(WeightError::DuplicateGroup(g.name.clone()));
            }
            for &t in &g.members {
                if let Some(prev) = owner.insert(t, i) {
                    return Err(WeightError::OverlappingGroups {
                        tag: format!("#{}", t.0),
                        first: groups[prev].name.clone(),
                        second: g.name.clone(),
                    });
                }
            }
        }
        let lookup = |name: &str| {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| WeightError::UnknownGroupInRelation(name.to_string()))
        };
        let mut rel = BTreeSet::new();
        for (lesser, greater) in relations {
            let (l, g) = (lookup(lesser.as_ref())?, lookup(greater.as_ref())?);
            if l == g {
                return Err(WeightError::SelfRelation(lesser.as_ref().to_string()));
            }
            rel.insert((l, g));
        }
        Ok(WeightConfig {
            groups,
            order: PartialOrder { relations: rel },
        })
    }

    pub fn groups(&self) -> &[TagGroup] {
        &self.groups
    }

    pub fn order(&self) -> &PartialOrder {
        &self.order
    }

    /// Relations as `(lesser name, greater name)`, sorted by name.
    pub fn named_relations(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .order
            .relations()
            .map(|(l, g)| (self.groups[l].name.clone(), self.groups[g].name.clone()))
            .collect();
        out.sort();
        out
    }

    /// Same groups, new relations.
    pub fn with_relations<S: AsRef<str>>(&self, relations: &[(S, S)]) -> Result<Self, WeightError> {
        WeightConfig::new(self.groups.clone(), relations)
    }

    /// Group levels, `1 + max(level below)`, in declaration order.
    pub fn levels(&self) -> Result<Vec<u64>, WeightError> {
        let n = self.groups.len();
        let mut below: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut above: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (l, g) in self.order.relations() {
            below[g].push(l);
            above[l].push(g);
        }
        if let Some(cycle) = find_cycle(&above) {
            return Err(WeightError::CyclicOrder(
                cycle
                    .into_iter()
                    .map(|i| self.groups[i].name.clone())
                    .collect(),
            ));
        }
        let mut level: Vec<Option<u64>> = vec![None; n];
        for start in 0..n {
            // iterative post-order over the "below" edges
            let mut stack = vec![(start, false)];
            while let Some((v, expanded)) = stack.pop() {
                if level[v].is_some() {
                    continue;
                }
                if expanded {
                    let lv = below[v]
                        .iter()
                        .map(|&b| level[b].expect("visited"))
                        .max()
                        .unwrap_or(0)
                        + 1;
                    level[v] = Some(lv);
                } else {
                    stack.push((v, true));
                    for &b in &below[v] {
                        if level[b].is_none() {
                            stack.push((b, false));
                        }
                    }
                }
            }
        }
        Ok(level
            .into_iter()
            .map(|l| l.expect("all levels assigned"))
            .collect())
    }

    fn check_universe(&self, universe: &Universe) -> Result<(), WeightError> {
        for g in &self.groups {
            if let Some(t) = g.members.iter().find(|t| t.index() >= universe.len()) {
                return Err(WeightError::TagOutOfRange {
                    group: g.name.clone(),
                    tag: t.0,
                });
            }
        }
        Ok(())
    }
}

// Returns the first cycle found as a closed path `[a, b, ..., a]`.
fn find_cycle(succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = succ.len();
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        let mut path = vec![root];
        let mut cursor = vec![0usize];
        mark[root] = Mark::Open;
        while let Some(&v) = path.last() {
            let i = cursor.last_mut().expect("cursor tracks path");
            if *i < succ[v].len() {
                let w = succ[v][*i];
                *i += 1;
                match mark[w] {
                    Mark::Open => {
                        let from = path
                            .iter()
                            .position(|&p| p == w)
                            .expect("open nodes are on path");
                        let mut cycle = path[from..].to_vec();
                        cycle.push(w);
                        return Some(cycle);
                    }
                    Mark::New => {
                        mark[w] = Mark::Open;
                        path.push(w);
                        cursor.push(0);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                path.pop();
                cursor.pop();
            }
        }
    }
    None
}

pub fn synthesize_weights(
    config: &WeightConfig,
    universe: &Universe,
) -> Result<WeightTable, WeightError> {
    config.check_universe(universe)?;
    let levels = config.levels()?;
    let mut table = WeightTable::unit();
    for (g, level) in config.groups.iter().zip(levels) {
        for &t in &g.members {
            table.set(t, WeightPair::new(1, level).expect("levels start at 1"));
        }
    }
    Ok(table)
}

/// A global config plus optional per-target overrides.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WeightSettings {
    pub global: Option<WeightConfig>,
    pub per_target: BTreeMap<String, WeightConfig>,
}

impl WeightSettings {
    pub fn config_for(&self, target: &str) -> Option<&WeightConfig> {
        self.per_target.get(target).or(self.global.as_ref())
    }

    pub(crate) fn validate(
        &self,
        universe: &Universe,
        targets: &[PolicyTarget],
    ) -> Result<(), ModelError> {
        for (name, cfg) in &self.per_target {
            if !targets.iter().any(|t| t.name() == name) {
                return Err(WeightError::UnknownTarget(name.clone()).into());
            }
            synthesize_weights(cfg, universe)?;
        }
        if let Some(cfg) = &self.global {
            synthesize_weights(cfg, universe)?;
        }
        Ok(())
    }
}

/// The weight table for a target: its own config, else the global one,
/// else all `(1, 1)`.
pub fn resolve_table(dataset: &Dataset, target: &str) -> WeightTable {
    match dataset.weights().config_for(target) {
        Some(cfg) => synthesize_weights(cfg, dataset.universe())
            .expect("configs are validated with the dataset"),
        None => WeightTable::unit(),
    }
}
