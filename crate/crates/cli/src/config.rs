//! Run configuration: a TOML file, overridden by command-line flags.
//!
//! ```toml
//! seed = 0
//! out = "runs/fewrel"
//!
//! [dataset]
//! path = "data/val_wiki.json"
//! format = "fewrel"          # or "unlabeled"
//!
//! [prompt]
//! template = "p"             # p, p-empty, p1, p2, p3
//!
//! [backend]
//! kind = "inference"         # inference, file or stub
//! model = "bert-base-cased"
//! max_length = 512
//! batch_size = 32
//! normalize = false
//!
//! [clustering]
//! mode = "elbow"             # known-k, elbow or optics
//! k = 80                     # required by known-k
//! ```

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use relcluster_core::prompt::TemplateId;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Fewrel,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Inference,
    File,
    Stub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StubKind {
    /// Embeddings point along the instance's gold relation (reads labels).
    Gold,
    /// Embeddings are a hash of the prompt text.
    Hash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    KnownK,
    Elbow,
    Optics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub format: DatasetFormat,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            format: DatasetFormat::Fewrel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    pub template: String,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self { template: "p".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: String,
    pub max_length: usize,
    pub batch_size: usize,
    pub normalize: bool,
    /// Inference backend: interpreter and server script.
    pub program: String,
    pub script: PathBuf,
    pub device: Option<String>,
    /// File backend: embedding cache to serve.
    pub cache: Option<PathBuf>,
    /// Stub backend.
    pub stub: StubKind,
    pub hidden_dim: usize,
    pub noise: f32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Inference,
            model: "bert-base-cased".into(),
            max_length: 512,
            batch_size: 32,
            normalize: false,
            program: "python3".into(),
            script: "scripts/mlm_server.py".into(),
            device: None,
            cache: None,
            stub: StubKind::Gold,
            hidden_dim: 768,
            noise: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub mode: Mode,
    pub k: Option<usize>,
    /// Elbow grid; the default sweep when absent.
    pub grid: Option<Vec<usize>>,
    pub min_samples: usize,
    /// Tokens per cluster in the naming report.
    pub name_tokens: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Elbow,
            k: None,
            grid: None,
            min_samples: 5,
            name_tokens: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    pub prompt: PromptConfig,
    pub backend: BackendConfig,
    pub clustering: ClusteringConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: "out".into(),
            dataset: DatasetConfig::default(),
            prompt: PromptConfig::default(),
            backend: BackendConfig::default(),
            clustering: ClusteringConfig::default(),
        }
    }
}

/// Values given on the command line; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub format: Option<DatasetFormat>,
    pub template: Option<String>,
    pub backend: Option<BackendKind>,
    pub k: Option<usize>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.dataset {
            self.dataset.path = Some(v.clone());
        }
        if let Some(v) = o.format {
            self.dataset.format = v;
        }
        if let Some(v) = &o.template {
            self.prompt.template = v.clone();
        }
        if let Some(v) = o.backend {
            self.backend.kind = v;
        }
        if let Some(v) = o.k {
            self.clustering.k = Some(v);
        }
        if let Some(v) = o.mode {
            self.clustering.mode = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
    }

    pub fn template(&self) -> Result<TemplateId, CliError> {
        self.prompt.template.parse().map_err(|e: relcluster_core::prompt::PromptError| CliError::usage(e.to_string()))
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        self.dataset
            .path
            .as_deref()
            .ok_or_else(|| CliError::usage("no dataset given (use --dataset or [dataset] path)"))
    }

    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<(), CliError> {
        self.template()?;
        if self.clustering.mode == Mode::KnownK && self.clustering.k.is_none() {
            return Err(CliError::usage("mode known-k requires k (use --k or [clustering] k)"));
        }
        if self.clustering.k == Some(0) {
            return Err(CliError::usage("k must be at least 1"));
        }
        if self.backend.batch_size == 0 {
            return Err(CliError::usage("batch_size must be at least 1"));
        }
        if self.backend.kind == BackendKind::File && self.backend.cache.is_none() {
            return Err(CliError::usage("the file backend needs [backend] cache"));
        }
        if !(self.backend.noise.is_finite() && self.backend.noise >= 0.0) {
            return Err(CliError::usage("stub noise must be a non-negative number"));
        }
        Ok(())
    }
}
