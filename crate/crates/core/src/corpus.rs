//! Entity-annotated relation instances and the FewRel-style JSON layouts.
//!
//! Two on-disk layouts are supported:
//!
//! * labeled: a JSON object mapping a relation label to an array of instances;
//! * unlabeled: a bare JSON array of instances.
//!
//! An instance object carries `tokens` (array of strings) and `h` / `t`, each a
//! 3-element array `[mention, kb_id, [[token indices], ...]]`. Unlabeled
//! instances may also carry an `id` string; the array index is used otherwise.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid instance {instance}: {reason}")]
    Validation { instance: String, reason: String },
}

/// Inclusive, 0-based token span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub mention_text: String,
    pub kb_id: Option<String>,
    /// All spans of the mention; the first one is canonical.
    pub token_spans: Vec<TokenSpan>,
}

impl EntitySpan {
    pub fn primary_span(&self) -> TokenSpan {
        self.token_spans[0]
    }

    fn validate(&self, token_count: usize) -> Result<(), String> {
        if self.mention_text.is_empty() {
            return Err("empty mention text".into());
        }
        if self.token_spans.is_empty() {
            return Err("entity has no token span".into());
        }
        for span in &self.token_spans {
            if span.start > span.end || span.end >= token_count {
                return Err(format!(
                    "span ({}, {}) out of range for {} tokens",
                    span.start, span.end, token_count
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub instance_id: String,
    pub tokens: Vec<String>,
    pub head: EntitySpan,
    pub tail: EntitySpan,
    pub gold_relation: Option<String>,
}

impl RelationInstance {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |reason: String| CorpusError::Validation {
            instance: self.instance_id.clone(),
            reason,
        };
        if self.tokens.is_empty() {
            return Err(fail("empty token list".into()));
        }
        self.head
            .validate(self.tokens.len())
            .map_err(|r| fail(format!("head: {r}")))?;
        self.tail
            .validate(self.tokens.len())
            .map_err(|r| fail(format!("tail: {r}")))?;
        Ok(())
    }

    /// Space-joined sentence.
    pub fn sentence(&self) -> String {
        self.tokens.join(" ")
    }

    fn check_mentions(&self) {
        for (role, entity) in [("head", &self.head), ("tail", &self.tail)] {
            let span = entity.primary_span();
            let surface = self.tokens[span.start..=span.end].concat().to_lowercase();
            let mention: String = entity
                .mention_text
                .split_whitespace()
                .collect::<String>()
                .to_lowercase();
            if surface != mention {
                log::warn!(
                    "{}: {} mention {:?} does not match tokens {:?}",
                    self.instance_id,
                    role,
                    entity.mention_text,
                    &self.tokens[span.start..=span.end]
                );
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub instances: Vec<RelationInstance>,
    /// Sorted distinct gold labels; empty when unlabeled.
    pub relation_inventory: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, validating every instance and id uniqueness.
    pub fn new(
        name: impl Into<String>,
        instances: Vec<RelationInstance>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            inst.validate()?;
            if !seen.insert(inst.instance_id.as_str()) {
                return Err(CorpusError::Validation {
                    instance: inst.instance_id.clone(),
                    reason: "duplicate instance id".into(),
                });
            }
            inst.check_mentions();
        }
        let relation_inventory = inventory(&instances);
        Ok(Self {
            name: name.into(),
            instances,
            relation_inventory,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.relation_inventory.is_empty()
    }

    /// Gold label by instance id.
    pub fn gold_by_id(&self) -> BTreeMap<&str, Option<&str>> {
        self.instances
            .iter()
            .map(|i| (i.instance_id.as_str(), i.gold_relation.as_deref()))
            .collect()
    }

    /// Copy of the dataset with every gold label erased.
    pub fn strip_labels(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            instances: self
                .instances
                .iter()
                .map(|i| RelationInstance {
                    gold_relation: None,
                    ..i.clone()
                })
                .collect(),
            relation_inventory: Vec::new(),
        }
    }

    /// Serializes to the labeled layout (grouped by label, keys sorted).
    /// Unlabeled instances are skipped.
    pub fn to_fewrel_json(&self) -> String {
        let mut groups: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
        for inst in &self.instances {
            if let Some(label) = inst.gold_relation.as_deref() {
                groups.entry(label).or_default().push(instance_to_json(inst));
            }
        }
        serde_json::to_string(&groups).expect("serializable")
    }

    /// Serializes to the unlabeled array layout, in dataset order. Instance
    /// ids are written to the optional `id` key.
    pub fn to_unlabeled_json(&self) -> String {
        let items: Vec<Value> = self
            .instances
            .iter()
            .map(|inst| {
                let mut v = instance_to_json(inst);
                v["id"] = Value::String(inst.instance_id.clone());
                v
            })
            .collect();
        serde_json::to_string(&items).expect("serializable")
    }
}

fn inventory(instances: &[RelationInstance]) -> Vec<String> {
    instances
        .iter()
        .filter_map(|i| i.gold_relation.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Deserialize)]
struct RawInstance {
    #[serde(default)]
    id: Option<String>,
    tokens: Vec<String>,
    h: RawEntity,
    t: RawEntity,
}

#[derive(Deserialize)]
struct RawEntity(String, Option<String>, Vec<Vec<usize>>);

impl RawEntity {
    fn into_entity(self, instance: &str) -> Result<EntitySpan, CorpusError> {
        let RawEntity(mention_text, kb_id, index_arrays) = self;
        let mut token_spans = Vec::with_capacity(index_arrays.len());
        for indices in index_arrays {
            let (Some(&start), Some(&end)) = (indices.iter().min(), indices.iter().max()) else {
                return Err(CorpusError::Validation {
                    instance: instance.to_string(),
                    reason: "empty token index array".into(),
                });
            };
            token_spans.push(TokenSpan { start, end });
        }
        Ok(EntitySpan {
            mention_text,
            kb_id,
            token_spans,
        })
    }
}

impl RawInstance {
    fn into_instance(
        self,
        instance_id: String,
        gold_relation: Option<String>,
    ) -> Result<RelationInstance, CorpusError> {
        let head = self.h.into_entity(&instance_id)?;
        let tail = self.t.into_entity(&instance_id)?;
        Ok(RelationInstance {
            instance_id,
            tokens: self.tokens,
            head,
            tail,
            gold_relation,
        })
    }
}

fn entity_to_json(e: &EntitySpan) -> Value {
    let spans: Vec<Vec<usize>> = e
        .token_spans
        .iter()
        .map(|s| (s.start..=s.end).collect())
        .collect();
    serde_json::json!([e.mention_text, e.kb_id, spans])
}

fn instance_to_json(inst: &RelationInstance) -> Value {
    serde_json::json!({
        "tokens": inst.tokens,
        "h": entity_to_json(&inst.head),
        "t": entity_to_json(&inst.tail),
    })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CorpusError> {
    serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Parses the labeled layout. Instances are ordered by label, then by their
/// position in the label's array; ids are `<label>#<index>`.
pub fn parse_fewrel(name: &str, text: &str) -> Result<Dataset, CorpusError> {
    let groups: BTreeMap<String, Vec<RawInstance>> = parse(text)?;
    let mut instances = Vec::new();
    for (label, raws) in groups {
        for (idx, raw) in raws.into_iter().enumerate() {
            instances.push(raw.into_instance(format!("{label}#{idx}"), Some(label.clone()))?);
        }
    }
    Dataset::new(name, instances)
}

/// Parses the unlabeled array layout; ids are the array indices.
pub fn parse_unlabeled(name: &str, text: &str) -> Result<Dataset, CorpusError> {
    let raws: Vec<RawInstance> = parse(text)?;
    let instances = raws
        .into_iter()
        .enumerate()
        .map(|(idx, raw)| {
            let id = raw.id.clone().unwrap_or_else(|| idx.to_string());
            raw.into_instance(id, None)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(name, instances)
}

pub fn load_fewrel(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    parse_fewrel(&dataset_name(path), &read(path)?)
}

pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    parse_unlabeled(&dataset_name(path), &read(path)?)
}
