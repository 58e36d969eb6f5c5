//! Dataset, session and test-file formats.
//!
//! Dataset documents are UTF-8 JSON:
//!
//! ```json
//! {
//!   "rows": [{"decisions": {"WorkCloud": 0}, "scenario": ["Home", "Photo"]}],
//!   "tags": ["Home", "Photo"],
//!   "targets": ["WorkCloud"],
//!   "version": 1,
//!   "weights": {
//!     "global": {"groups": [{"name": "home", "tags": ["Home"]}], "order": [["other", "home"]]},
//!     "targets": {}
//!   }
//! }
//! ```
//!
//! The canonical form (what [`save_dataset`] writes) has keys in
//! lexicographic order, two-space indentation, scenario tags in tag
//! declaration order, group tags in declaration order, relations sorted by
//! `(lesser, greater)` name, and a trailing newline. Row order, tag order and
//! target order are significant and preserved.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::active::{LogEntry, ReviewError, ReviewSession, SessionStatus};
use crate::eval::TestCase;
use crate::model::{Dataset, Decision, ModelError, PolicyTarget, Row, Scenario, Universe};
use crate::weights::{synthesize_weights, TagGroup, WeightConfig, WeightError, WeightSettings};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PersistError {
    #[error("IoError: {path}: {message}")]
    Io { path: String, message: String },
    #[error("ParseError at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("ValidationError at {location}: {rule}")]
    Validation { rule: String, location: String },
    #[error("FingerprintMismatch: session was saved against dataset {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error(transparent)]
    Review(#[from] ReviewError),
}

impl PersistError {
    fn invalid(rule: impl Into<String>, location: impl Into<String>) -> Self {
        PersistError::Validation {
            rule: rule.into(),
            location: location.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        PersistError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    fn json(e: serde_json::Error) -> Self {
        PersistError::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        }
    }
}

// Field order below is alphabetical so the derived serializer writes sorted keys.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDocument {
    pub rows: Vec<RowDocument>,
    pub tags: Vec<String>,
    pub targets: Vec<String>,
    pub version: u32,
    #[serde(default)]
    pub weights: WeightsDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowDocument {
    pub decisions: BTreeMap<String, i64>,
    pub scenario: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsDocument {
    #[serde(default)]
    pub global: Option<ConfigDocument>,
    #[serde(default)]
    pub targets: BTreeMap<String, ConfigDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub groups: Vec<GroupDocument>,
    #[serde(default)]
    pub order: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDocument {
    pub name: String,
    pub tags: Vec<String>,
}

fn model_rule(e: &ModelError) -> String {
    e.to_string()
}

/// Builds a validated config from its document form; `at` prefixes locators.
pub fn config_from_document(
    doc: &ConfigDocument,
    universe: &Universe,
    at: &str,
) -> Result<WeightConfig, PersistError> {
    let mut groups = Vec::with_capacity(doc.groups.len());
    for (gi, g) in doc.groups.iter().enumerate() {
        let mut ids = Vec::with_capacity(g.tags.len());
        for (ti, name) in g.tags.iter().enumerate() {
            let id = universe.id(name).ok_or_else(|| {
                PersistError::invalid(
                    format!("unknown tag {name:?}"),
                    format!("{at}.groups[{gi}].tags[{ti}]"),
                )
            })?;
            ids.push(id);
        }
        let group = TagGroup::new(g.name.clone(), ids)
            .map_err(|e| PersistError::invalid(e.to_string(), format!("{at}.groups[{gi}]")))?;
        groups.push(group);
    }
    // check relations one by one for precise locators
    let names: Vec<&str> = doc.groups.iter().map(|g| g.name.as_str()).collect();
    for (ri, (lesser, greater)) in doc.order.iter().enumerate() {
        for side in [lesser, greater] {
            if !names.contains(&side.as_str()) {
                return Err(PersistError::invalid(
                    format!("relation names undeclared group {side:?}"),
                    format!("{at}.order[{ri}]"),
                ));
            }
        }
    }
    let cfg = WeightConfig::new(groups, &doc.order).map_err(|e| {
        let loc = match &e {
            WeightError::SelfRelation(_) | WeightError::UnknownGroupInRelation(_) => {
                format!("{at}.order")
            }
            _ => format!("{at}.groups"),
        };
        PersistError::invalid(e.to_string(), loc)
    })?;
    synthesize_weights(&cfg, universe)
        .map_err(|e| PersistError::invalid(e.to_string(), format!("{at}.order")))?;
    Ok(cfg)
}

pub fn config_to_document(cfg: &WeightConfig, universe: &Universe) -> ConfigDocument {
    ConfigDocument {
        groups: cfg
            .groups()
            .iter()
            .map(|g| GroupDocument {
                name: g.name.clone(),
                tags: g
                    .members()
                    .iter()
                    .map(|&t| universe.name(t).expect("validated tag").to_string())
                    .collect(),
            })
            .collect(),
        order: cfg.named_relations(),
    }
}

impl DatasetDocument {
    pub fn from_dataset(d: &Dataset) -> Self {
        let u = d.universe();
        let rows = d
            .rows()
            .iter()
            .map(|r| RowDocument {
                decisions: d
                    .targets()
                    .iter()
                    .zip(&r.decisions)
                    .map(|(t, dec)| (t.name().to_string(), i64::from(dec.bit())))
                    .collect(),
                scenario: u.tag_names(&r.scenario).map(str::to_string).collect(),
            })
            .collect();
        let w = d.weights();
        DatasetDocument {
            rows,
            tags: u.names().to_vec(),
            targets: d.targets().iter().map(|t| t.name().to_string()).collect(),
            version: FORMAT_VERSION,
            weights: WeightsDocument {
                global: w.global.as_ref().map(|c| config_to_document(c, u)),
                targets: w
                    .per_target
                    .iter()
                    .map(|(t, c)| (t.clone(), config_to_document(c, u)))
                    .collect(),
            },
        }
    }

    /// Validates every rule and builds the dataset. Errors carry a locator
    /// such as `rows[3].decisions.WorkCloud`.
    pub fn into_dataset(self) -> Result<Dataset, PersistError> {
        if self.version != FORMAT_VERSION {
            return Err(PersistError::invalid(
                format!(
                    "unsupported version {} (expected {FORMAT_VERSION})",
                    self.version
                ),
                "version",
            ));
        }
        if self.tags.is_empty() {
            return Err(PersistError::invalid(
                model_rule(&ModelError::EmptyUniverse),
                "tags",
            ));
        }
        for (i, name) in self.tags.iter().enumerate() {
            crate::model::validate_name(name)
                .map_err(|e| PersistError::invalid(model_rule(&e), format!("tags[{i}]")))?;
            if self.tags[..i].contains(name) {
                return Err(PersistError::invalid(
                    model_rule(&ModelError::DuplicateTag(name.clone())),
                    format!("tags[{i}]"),
                ));
            }
        }
        let universe = Universe::new(self.tags.iter().cloned())
            .map_err(|e| PersistError::invalid(model_rule(&e), "tags"))?;

        let mut targets = Vec::with_capacity(self.targets.len());
        for (i, name) in self.targets.iter().enumerate() {
            if self.targets[..i].contains(name) {
                return Err(PersistError::invalid(
                    model_rule(&ModelError::DuplicateTarget(name.clone())),
                    format!("targets[{i}]"),
                ));
            }
            targets.push(
                PolicyTarget::new(name.clone())
                    .map_err(|e| PersistError::invalid(model_rule(&e), format!("targets[{i}]")))?,
            );
        }

        let mut rows = Vec::with_capacity(self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            for (j, tag) in r.scenario.iter().enumerate() {
                if universe.id(tag).is_none() {
                    return Err(PersistError::invalid(
                        model_rule(&ModelError::UnknownTag(tag.clone())),
                        format!("rows[{i}].scenario[{j}]"),
                    ));
                }
            }
            let scenario = universe.scenario(&r.scenario).map_err(|e| {
                PersistError::invalid(model_rule(&e), format!("rows[{i}].scenario"))
            })?;
            if let Some(extra) = r.decisions.keys().find(|k| !self.targets.contains(k)) {
                return Err(PersistError::invalid(
                    format!("decision for undeclared target {extra:?}"),
                    format!("rows[{i}].decisions.{extra}"),
                ));
            }
            let mut decisions = Vec::with_capacity(targets.len());
            for t in &self.targets {
                let loc = format!("rows[{i}].decisions.{t}");
                let v = *r
                    .decisions
                    .get(t)
                    .ok_or_else(|| PersistError::invalid("missing decision", loc.clone()))?;
                let d = u8::try_from(v)
                    .ok()
                    .and_then(Decision::from_bit)
                    .ok_or_else(|| PersistError::invalid("decision must be 0 or 1", loc))?;
                decisions.push(d);
            }
            rows.push(Row {
                scenario,
                decisions,
            });
        }

        let mut settings = WeightSettings::default();
        if let Some(g) = &self.weights.global {
            settings.global = Some(config_from_document(g, &universe, "weights.global")?);
        }
        for (t, c) in &self.weights.targets {
            if !self.targets.contains(t) {
                return Err(PersistError::invalid(
                    format!("weights for undeclared target {t:?}"),
                    format!("weights.targets.{t}"),
                ));
            }
            settings.per_target.insert(
                t.clone(),
                config_from_document(c, &universe, &format!("weights.targets.{t}"))?,
            );
        }

        Dataset::new(universe, targets, rows, settings).map_err(|e| match e {
            ModelError::ConflictingDuplicate { first, second, .. } => PersistError::invalid(
                format!("{e} (first seen at rows[{first}])"),
                format!("rows[{second}]"),
            ),
            other => PersistError::invalid(model_rule(&other), "dataset"),
        })
    }
}

/// The canonical document text for a dataset.
pub fn dataset_to_string(d: &Dataset) -> String {
    serde_json::to_string_pretty(&DatasetDocument::from_dataset(d)).expect("document serializes")
        + "\n"
}

pub fn dataset_from_str(text: &str) -> Result<Dataset, PersistError> {
    let doc: DatasetDocument = serde_json::from_str(text).map_err(PersistError::json)?;
    doc.into_dataset()
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, PersistError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PersistError::io(path, e))?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        return dataset_from_csv(text.as_bytes());
    }
    dataset_from_str(&text)
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<(), PersistError> {
    let path = path.as_ref();
    fs::write(path, dataset_to_string(d)).map_err(|e| PersistError::io(path, e))
}

/// SHA-256 of the canonical document, hex encoded.
pub fn fingerprint(d: &Dataset) -> String {
    hex::encode(Sha256::digest(dataset_to_string(d).as_bytes()))
}

/// Imports the spreadsheet shape: header `scenario,<target>...`, scenario
/// cells as `tag+tag`, one 0/1 column per target. Tags are declared in order
/// of first appearance; no weights.
pub fn dataset_from_csv<R: Read>(reader: R) -> Result<Dataset, PersistError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| PersistError::Parse {
            location: "line 1".into(),
            message: e.to_string(),
        })?
        .clone();
    if headers.get(0) != Some("scenario") {
        return Err(PersistError::invalid(
            "first column must be \"scenario\"",
            "line 1",
        ));
    }
    let targets: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut tags: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| PersistError::Parse {
            location: format!("line {line}"),
            message: e.to_string(),
        })?;
        let scenario: Vec<String> = rec
            .get(0)
            .unwrap_or("")
            .split('+')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        for t in &scenario {
            if !tags.contains(t) {
                tags.push(t.clone());
            }
        }
        let mut decisions = BTreeMap::new();
        for (k, t) in targets.iter().enumerate() {
            let cell = rec.get(k + 1).unwrap_or("");
            let v: i64 = cell.parse().map_err(|_| {
                PersistError::invalid(
                    "decision must be 0 or 1",
                    format!("line {line}, column {t}"),
                )
            })?;
            decisions.insert(t.clone(), v);
        }
        rows.push(RowDocument {
            decisions,
            scenario,
        });
    }
    DatasetDocument {
        rows,
        tags,
        targets,
        version: FORMAT_VERSION,
        weights: WeightsDocument::default(),
    }
    .into_dataset()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDocument {
    pub cap: usize,
    pub dataset_fingerprint: String,
    pub log: Vec<LogEntry>,
    pub pending: Option<usize>,
    pub status: SessionStatus,
    pub target: String,
    pub version: u32,
    pub visited: Vec<usize>,
}

/// Saves a session. The fingerprint covers `dataset` with the session's
/// current labels written in, which is what a later resume must load.
pub fn session_document(
    session: &ReviewSession,
    dataset: &Dataset,
) -> Result<SessionDocument, PersistError> {
    let mut updated = dataset.clone();
    session
        .apply_to(&mut updated)
        .map_err(|e| PersistError::invalid(e.to_string(), "session"))?;
    Ok(SessionDocument {
        cap: session.cap(),
        dataset_fingerprint: fingerprint(&updated),
        log: session.log().to_vec(),
        pending: session.pending().map(|p| p.vertex),
        status: session.status(),
        target: session.target().to_string(),
        version: FORMAT_VERSION,
        visited: session.visited().iter().copied().collect(),
    })
}

pub fn save_session(
    session: &ReviewSession,
    dataset: &Dataset,
    path: impl AsRef<Path>,
) -> Result<(), PersistError> {
    let path = path.as_ref();
    let doc = session_document(session, dataset)?;
    let text = serde_json::to_string_pretty(&doc).expect("session serializes") + "\n";
    fs::write(path, text).map_err(|e| PersistError::io(path, e))
}

pub fn resume_session(
    path: impl AsRef<Path>,
    dataset: &Dataset,
) -> Result<ReviewSession, PersistError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PersistError::io(path, e))?;
    let doc: SessionDocument = serde_json::from_str(&text).map_err(PersistError::json)?;
    if doc.version != FORMAT_VERSION {
        return Err(PersistError::invalid(
            format!("unsupported version {}", doc.version),
            "version",
        ));
    }
    let found = fingerprint(dataset);
    if found != doc.dataset_fingerprint {
        return Err(PersistError::FingerprintMismatch {
            expected: doc.dataset_fingerprint,
            found,
        });
    }
    Ok(ReviewSession::resume(
        dataset,
        &doc.target,
        doc.cap,
        doc.visited,
        doc.log,
    )?)
}

/// Test-scenario files: `{"tests": [{"scenario": [..], "truth": {"T": 0|1}}], "version": 1}`.
/// `truth` may be omitted for unlabeled scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestsDocument {
    pub tests: Vec<TestCaseDocument>,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCaseDocument {
    pub scenario: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub truth: BTreeMap<String, i64>,
}

pub fn tests_to_string(universe: &Universe, scenarios: &[Scenario]) -> String {
    let doc = TestsDocument {
        tests: scenarios
            .iter()
            .map(|s| TestCaseDocument {
                scenario: universe.tag_names(s).map(str::to_string).collect(),
                truth: BTreeMap::new(),
            })
            .collect(),
        version: FORMAT_VERSION,
    };
    serde_json::to_string_pretty(&doc).expect("tests serialize") + "\n"
}

pub fn labeled_tests_to_string(universe: &Universe, cases: &[TestCase]) -> String {
    let doc = TestsDocument {
        tests: cases
            .iter()
            .map(|c| TestCaseDocument {
                scenario: universe
                    .tag_names(&c.scenario)
                    .map(str::to_string)
                    .collect(),
                truth: c
                    .truth
                    .iter()
                    .map(|(k, v)| (k.clone(), i64::from(v.bit())))
                    .collect(),
            })
            .collect(),
        version: FORMAT_VERSION,
    };
    serde_json::to_string_pretty(&doc).expect("tests serialize") + "\n"
}

pub fn tests_from_str(text: &str, dataset: &Dataset) -> Result<Vec<TestCase>, PersistError> {
    let doc: TestsDocument = serde_json::from_str(text).map_err(PersistError::json)?;
    if doc.version != FORMAT_VERSION {
        return Err(PersistError::invalid(
            format!("unsupported version {}", doc.version),
            "version",
        ));
    }
    let u = dataset.universe();
    doc.tests
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let scenario = u.scenario(&t.scenario).map_err(|e| {
                PersistError::invalid(model_rule(&e), format!("tests[{i}].scenario"))
            })?;
            let mut truth = BTreeMap::new();
            for (target, v) in t.truth {
                let loc = format!("tests[{i}].truth.{target}");
                if dataset.target_index(&target).is_err() {
                    return Err(PersistError::invalid(
                        format!("undeclared target {target:?}"),
                        loc,
                    ));
                }
                let d = u8::try_from(v)
                    .ok()
                    .and_then(Decision::from_bit)
                    .ok_or_else(|| PersistError::invalid("decision must be 0 or 1", loc))?;
                truth.insert(target, d);
            }
            Ok(TestCase { scenario, truth })
        })
        .collect()
}

pub fn load_tests(
    path: impl AsRef<Path>,
    dataset: &Dataset,
) -> Result<Vec<TestCase>, PersistError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PersistError::io(path, e))?;
    tests_from_str(&text, dataset)
}
