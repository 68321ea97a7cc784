//! Stage files and the configuration hashes that tie them together.
//!
//! Every stage output records a hash of the configuration that produced it.
//! The embedding hash covers the dataset bytes, prompt and backend; the
//! clustering hash adds the clustering section and seed. A stage reading an
//! upstream file recomputes the expected hash from its own configuration and
//! refuses a mismatch unless forced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use relcluster_core::clustering::{ClusterAssignment, Method};
use relcluster_core::encoder::{load_cache, EmbeddingMatrix};
use relcluster_core::io::write_atomic;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{BackendKind, RunConfig};
use crate::error::CliError;

/// Bumped when any stage file layout changes.
pub const STAGE_VERSION: u32 = 1;

pub const EMBEDDINGS: &str = "embeddings.pore";
pub const ENCODE_FAILURES: &str = "encode_failures.jsonl";
pub const ASSIGNMENT: &str = "assignment.jsonl";
pub const ASSIGNMENT_PARAMS: &str = "assignment.params.json";
pub const ELBOW_CSV: &str = "elbow.csv";
pub const REPORT: &str = "report.json";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const CONFUSION_PGM: &str = "confusion.pgm";
pub const CLUSTERS: &str = "clusters.json";
pub const NAMING: &str = "naming.json";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_json(value: &Value) -> String {
    hex(&Sha256::digest(value.to_string().as_bytes())[..16])
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Hash of everything that determines the embedding matrix.
pub fn embedding_hash(config: &RunConfig, dataset_digest: &str) -> String {
    let b = &config.backend;
    let backend = match b.kind {
        BackendKind::Inference => json!({
            "kind": "inference", "model": b.model, "max_length": b.max_length,
        }),
        BackendKind::File => json!({"kind": "file", "cache": b.cache}),
        BackendKind::Stub => json!({
            "kind": "stub", "stub": b.stub, "hidden_dim": b.hidden_dim,
            "noise": b.noise, "max_length": b.max_length,
        }),
    };
    digest_json(&json!({
        "version": STAGE_VERSION,
        "dataset": dataset_digest,
        "format": config.dataset.format,
        "template": config.prompt.template,
        "backend": backend,
        "normalize": b.normalize,
    }))
}

/// Hash of everything that determines the clustering.
pub fn clustering_hash(config: &RunConfig, embedding_hash: &str) -> String {
    let c = &config.clustering;
    digest_json(&json!({
        "embedding": embedding_hash,
        "mode": c.mode,
        "k": c.k,
        "grid": c.grid,
        "min_samples": c.min_samples,
        "seed": config.seed,
    }))
}

pub fn check_hash(what: &Path, found: Option<&str>, expected: &str, force: bool) -> Result<(), CliError> {
    if found == Some(expected) {
        return Ok(());
    }
    let found = found.unwrap_or("none");
    if force {
        log::warn!(
            "{} was produced by a different configuration (hash {found}, expected {expected}); continuing because of --force",
            what.display()
        );
        return Ok(());
    }
    Err(CliError::validation(format!(
        "{} was produced by a different configuration (hash {found}, expected {expected}); rerun the upstream stage or pass --force",
        what.display()
    )))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

pub fn load_embeddings(path: &Path, expected: &str, force: bool) -> Result<EmbeddingMatrix, CliError> {
    let m = load_cache(path)?;
    check_hash(path, m.config_hash.as_deref(), expected, force)?;
    Ok(m)
}

/// Sidecar of `assignment.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentParams {
    pub version: u32,
    pub config_hash: String,
    pub embedding_hash: String,
    pub method: Method,
    pub seed: u64,
    pub k: usize,
    pub n: usize,
    pub params: BTreeMap<String, Value>,
}

pub fn params_path(assignment: &Path) -> PathBuf {
    assignment.with_file_name(ASSIGNMENT_PARAMS)
}

pub fn write_assignment(dir: &Path, a: &ClusterAssignment, config_hash: &str, embedding_hash: &str) -> Result<(), CliError> {
    write_text(&dir.join(ASSIGNMENT), &a.to_jsonl())?;
    write_json(
        &dir.join(ASSIGNMENT_PARAMS),
        &AssignmentParams {
            version: STAGE_VERSION,
            config_hash: config_hash.to_string(),
            embedding_hash: embedding_hash.to_string(),
            method: a.method,
            seed: a.seed,
            k: a.k,
            n: a.len(),
            params: a.params.clone(),
        },
    )
}

pub fn load_assignment(path: &Path, expected: &str, force: bool) -> Result<ClusterAssignment, CliError> {
    let sidecar = params_path(path);
    let params: AssignmentParams = serde_json::from_str(&read_text(&sidecar)?)
        .map_err(|e| CliError::validation(format!("{}: {e}", sidecar.display())))?;
    if params.version != STAGE_VERSION {
        return Err(CliError::validation(format!(
            "{} has stage version {}, expected {STAGE_VERSION}",
            sidecar.display(),
            params.version
        )));
    }
    check_hash(path, Some(&params.config_hash), expected, force)?;
    let a = ClusterAssignment::from_jsonl(&read_text(path)?, params.method, params.seed, params.params)?;
    if a.k != params.k || a.len() != params.n {
        return Err(CliError::validation(format!(
            "{} does not match its parameters file ({} instances in {} clusters, expected {} in {})",
            path.display(),
            a.len(),
            a.k,
            params.n,
            params.k
        )));
    }
    Ok(a)
}

/// A stage output wrapped with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub version: u32,
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Stamped<T> {
    pub fn new(config_hash: &str, body: T) -> Self {
        Self {
            version: STAGE_VERSION,
            config_hash: config_hash.to_string(),
            body,
        }
    }
}
