//! Relation encoder: the hidden state at the mask position of a rendered
//! prompt, taken from a frozen masked language model, is the relation
//! embedding of the instance.
//!
//! The model itself sits behind [`MlmBackend`]. Three backends ship with the
//! crate:
//!
//! * [`InferenceBackend`] talks to an external inference process running a
//!   pretrained masked LM;
//! * [`FileBackend`] serves precomputed embeddings keyed by instance id;
//! * [`StubBackend`] is deterministic and model-free, for tests and dry runs.

mod cache;
mod file;
mod inference;
mod stub;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::prompt::{RenderedPrompt, TemplateId};

pub use cache::{from_bytes, load_cache, save_cache, to_bytes, CacheError, CacheHeader, CACHE_MAGIC, CACHE_VERSION};
pub use file::FileBackend;
pub use inference::{InferenceBackend, InferenceConfig};
pub use stub::{StubBackend, StubMode};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("prompt for {instance} has {tokens} tokens, exceeding the maximum length {max}")]
    TooLong {
        instance: String,
        tokens: usize,
        max: usize,
    },
    #[error("prompt for {instance} must contain exactly one mask, found {found}")]
    MaskCount { instance: String, found: usize },
    #[error("m exceeds vocabulary ({m} > {vocab})")]
    VocabularyExceeded { m: usize, vocab: usize },
    #[error("m must be at least 1")]
    ZeroTokens,
    #[error("no embedding available for instance {0}")]
    MissingEmbedding(String),
    #[error("backend {0} has no MLM head")]
    NoMlmHead(String),
    #[error("backend failure: {0}")]
    Failure(String),
}

impl BackendError {
    /// Per-instance failures that the pipeline may skip instead of aborting.
    pub fn is_instance_local(&self) -> bool {
        matches!(self, Self::TooLong { .. } | Self::MaskCount { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: String,
    pub score: f32,
}

/// A frozen masked language model.
pub trait MlmBackend: Send + Sync {
    fn name(&self) -> &str;

    fn hidden_dim(&self) -> usize;

    /// Whether calls may run concurrently; the encoder serializes otherwise.
    fn is_concurrent(&self) -> bool {
        true
    }

    /// Preferred number of prompts per call to [`MlmBackend::embed_batch`].
    fn batch_size(&self) -> usize {
        32
    }

    fn has_mlm_head(&self) -> bool;

    /// Hidden state at the mask position.
    fn mask_embedding(&self, prompt: &RenderedPrompt) -> Result<Vec<f32>, BackendError>;

    /// The `m` highest-scoring vocabulary tokens at the mask position.
    fn top_tokens(&self, prompt: &RenderedPrompt, m: usize) -> Result<Vec<TokenScore>, BackendError>;

    fn embed_batch(&self, prompts: &[RenderedPrompt]) -> Vec<Result<Vec<f32>, BackendError>> {
        prompts.iter().map(|p| self.mask_embedding(p)).collect()
    }
}

/// Row-major n×d relation embeddings with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    instance_ids: Vec<String>,
    pub template_id: TemplateId,
    pub backend_name: String,
    pub normalized: bool,
    /// Hash of the configuration that produced the matrix, when known.
    pub config_hash: Option<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MatrixError {
    #[error("data length {len} is not {rows}×{dim}")]
    Shape { len: usize, rows: usize, dim: usize },
    #[error("{ids} instance ids for {rows} rows")]
    IdCount { ids: usize, rows: usize },
    #[error("non-finite value in row {0}")]
    NonFinite(usize),
}

impl EmbeddingMatrix {
    pub fn new(
        dim: usize,
        data: Vec<f32>,
        instance_ids: Vec<String>,
        template_id: TemplateId,
        backend_name: impl Into<String>,
    ) -> Result<Self, MatrixError> {
        let rows = instance_ids.len();
        if data.len() != rows * dim {
            return Err(MatrixError::Shape {
                len: data.len(),
                rows,
                dim,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite(pos / dim.max(1)));
        }
        Ok(Self {
            rows,
            dim,
            data,
            instance_ids,
            template_id,
            backend_name: backend_name.into(),
            normalized: false,
            config_hash: None,
        })
    }

    /// Builds a matrix from f64 rows (synthetic data, tests).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(MatrixError::Shape {
                len: bad.len(),
                rows: rows.len(),
                dim,
            });
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(dim, data, ids, TemplateId::P, "rows")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn to_f64(&self) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_fn((self.rows, self.dim), |(i, j)| {
            self.data[i * self.dim + j] as f64
        })
    }

    /// Rescales every row to unit L2 norm; zero rows are left unchanged.
    pub fn normalize_rows(mut self) -> Self {
        for row in self.data.chunks_mut(self.dim.max(1)) {
            let norm = row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
            }
        }
        self.normalized = true;
        self
    }

    /// Rows picked (and reordered) by index.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            data,
            instance_ids: indices.iter().map(|&i| self.instance_ids[i].clone()).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceFailure {
    pub index: usize,
    pub instance_id: String,
    pub reason: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EncodeError {
    #[error("{} prompt(s) could not be encoded: {}", .0.len(), failure_list(.0))]
    Instances(Vec<InstanceFailure>),
    #[error("backend failed on prompt {index} ({instance_id}): {source}")]
    Backend {
        index: usize,
        instance_id: String,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn failure_list(failures: &[InstanceFailure]) -> String {
    failures
        .iter()
        .map(|f| f.instance_id.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn check_prompt(prompt: &RenderedPrompt) -> Result<(), BackendError> {
    match prompt.mask_count() {
        1 => Ok(()),
        found => Err(BackendError::MaskCount {
            instance: prompt.source_instance_id.clone(),
            found,
        }),
    }
}

fn run_batches(
    backend: &dyn MlmBackend,
    prompts: &[RenderedPrompt],
) -> Vec<Result<Vec<f32>, BackendError>> {
    let batch = backend.batch_size().max(1);
    let call = |chunk: &[RenderedPrompt]| -> Vec<Result<Vec<f32>, BackendError>> {
        // prompts failing the mask check never reach the backend
        let mut out: Vec<Option<Result<Vec<f32>, BackendError>>> =
            chunk.iter().map(|p| check_prompt(p).err().map(Err)).collect();
        let valid: Vec<RenderedPrompt> = chunk
            .iter()
            .zip(&out)
            .filter(|(_, o)| o.is_none())
            .map(|(p, _)| p.clone())
            .collect();
        let mut results = backend.embed_batch(&valid).into_iter();
        for slot in out.iter_mut().filter(|o| o.is_none()) {
            *slot = Some(results.next().unwrap_or_else(|| {
                Err(BackendError::Failure("backend returned too few results".into()))
            }));
        }
        out.into_iter().map(Option::unwrap).collect()
    };
    if backend.is_concurrent() {
        prompts.par_chunks(batch).flat_map_iter(call).collect()
    } else {
        prompts.chunks(batch).flat_map(call).collect()
    }
}

fn collect(
    backend: &dyn MlmBackend,
    prompts: &[RenderedPrompt],
    skip_failures: bool,
) -> Result<(EmbeddingMatrix, Vec<InstanceFailure>), EncodeError> {
    let dim = backend.hidden_dim();
    let mut data = Vec::with_capacity(prompts.len() * dim);
    let mut ids = Vec::with_capacity(prompts.len());
    let mut failures = Vec::new();
    let template_id = prompts.first().map_or(TemplateId::P, |p| p.template_id);

    for (index, (prompt, result)) in prompts.iter().zip(run_batches(backend, prompts)).enumerate() {
        match result {
            Ok(row) if row.len() != dim => {
                return Err(EncodeError::Backend {
                    index,
                    instance_id: prompt.source_instance_id.clone(),
                    source: BackendError::Failure(format!(
                        "embedding has {} values, backend declares {dim}",
                        row.len()
                    )),
                })
            }
            Ok(row) => {
                data.extend_from_slice(&row);
                ids.push(prompt.source_instance_id.clone());
            }
            Err(e) if e.is_instance_local() => failures.push(InstanceFailure {
                index,
                instance_id: prompt.source_instance_id.clone(),
                reason: e.to_string(),
            }),
            Err(source) => {
                return Err(EncodeError::Backend {
                    index,
                    instance_id: prompt.source_instance_id.clone(),
                    source,
                })
            }
        }
    }
    if !failures.is_empty() && !skip_failures {
        return Err(EncodeError::Instances(failures));
    }
    let matrix = EmbeddingMatrix::new(dim, data, ids, template_id, backend.name())?;
    Ok((matrix, failures))
}

/// Encodes every prompt; any per-instance failure fails the whole call.
pub fn encode(
    backend: &dyn MlmBackend,
    prompts: &[RenderedPrompt],
) -> Result<EmbeddingMatrix, EncodeError> {
    collect(backend, prompts, false).map(|(m, _)| m)
}

/// Like [`encode`], but instances that are too long (or malformed) are
/// excluded and reported instead of failing the call.
pub fn encode_lenient(
    backend: &dyn MlmBackend,
    prompts: &[RenderedPrompt],
) -> Result<(EmbeddingMatrix, Vec<InstanceFailure>), EncodeError> {
    collect(backend, prompts, true)
}

/// Top `m` MLM-head tokens at the mask, best first.
pub fn top_tokens_for(
    backend: &dyn MlmBackend,
    prompt: &RenderedPrompt,
    m: usize,
) -> Result<Vec<TokenScore>, BackendError> {
    if m == 0 {
        return Err(BackendError::ZeroTokens);
    }
    check_prompt(prompt)?;
    let mut tokens = backend.top_tokens(prompt, m)?;
    if tokens.len() != m {
        return Err(BackendError::Failure(format!(
            "asked for {m} tokens, backend returned {}",
            tokens.len()
        )));
    }
    tokens.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::MASK;

    fn prompt(id: &str, text: &str) -> RenderedPrompt {
        RenderedPrompt {
            text: text.to_string(),
            mask_offset: text.find(MASK).unwrap_or(0),
            source_instance_id: id.to_string(),
            template_id: TemplateId::P,
        }
    }

    #[test]
    fn identical_prompts_give_identical_rows() {
        let backend = StubBackend::hashed(768);
        let p = [prompt("a", "[CLS] x [MASK] y. [SEP]"), prompt("b", "[CLS] x [MASK] y. [SEP]")];
        let m = encode(&backend, &p).unwrap();
        assert_eq!((m.rows(), m.dim()), (2, 768));
        assert_eq!(m.row(0), m.row(1));
        assert_eq!(m.instance_ids(), ["a", "b"]);
    }

    #[test]
    fn empty_prompt_list() {
        let backend = StubBackend::hashed(768);
        let m = encode(&backend, &[]).unwrap();
        assert_eq!((m.rows(), m.dim()), (0, 768));
    }

    #[test]
    fn permutation_permutes_rows() {
        let backend = StubBackend::hashed(16);
        let prompts: Vec<_> = (0..7)
            .map(|i| prompt(&i.to_string(), &format!("[CLS] e{i} [MASK] f. [SEP]")))
            .collect();
        let m = encode(&backend, &prompts).unwrap();
        let order = [3, 0, 6, 1, 5, 2, 4];
        let shuffled: Vec<_> = order.iter().map(|&i| prompts[i].clone()).collect();
        assert_eq!(encode(&backend, &shuffled).unwrap(), m.select(&order));
    }

    #[test]
    fn too_long_prompt_lists_instance() {
        let backend = StubBackend::hashed(8).with_max_length(6);
        let p = [
            prompt("short", "[CLS] a [MASK] b. [SEP]"),
            prompt("long", "[CLS] a b c d e f g [MASK] b. [SEP]"),
        ];
        match encode(&backend, &p) {
            Err(EncodeError::Instances(f)) => {
                assert_eq!(f.len(), 1);
                assert_eq!(f[0].instance_id, "long");
            }
            other => panic!("unexpected {other:?}"),
        }
        let (m, failures) = encode_lenient(&backend, &p).unwrap();
        assert_eq!(m.instance_ids(), ["short"]);
        assert_eq!(failures[0].index, 1);
    }

    #[test]
    fn missing_mask_is_reported() {
        let backend = StubBackend::hashed(8);
        let err = encode(&backend, &[prompt("x", "[CLS] no mask [SEP]")]).unwrap_err();
        assert!(matches!(err, EncodeError::Instances(_)));
    }

    #[test]
    fn top_tokens_sorted_and_bounded() {
        let backend = StubBackend::hashed(8).with_logits(vec![
            ("borders".into(), 1.0),
            ("married".into(), 3.0),
            (",".into(), 2.0),
        ]);
        let p = prompt("a", "[CLS] a [MASK] b. [SEP]");
        let top = top_tokens_for(&backend, &p, 2).unwrap();
        assert_eq!(top[0].token, "married");
        assert_eq!(top[1].token, ",");
        assert_eq!(
            top_tokens_for(&backend, &p, 4),
            Err(BackendError::VocabularyExceeded { m: 4, vocab: 3 })
        );
        assert_eq!(top_tokens_for(&backend, &p, 0), Err(BackendError::ZeroTokens));
    }

    #[test]
    fn normalize_rows_gives_unit_norm() {
        let m = EmbeddingMatrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]])
            .unwrap()
            .normalize_rows();
        assert_eq!(m.row(0), [0.6, 0.8]);
        assert_eq!(m.row(1), [0.0, 0.0]);
        assert!(m.normalized);
    }

    #[test]
    fn matrix_rejects_bad_shapes() {
        let ids = vec!["a".to_string()];
        assert!(matches!(
            EmbeddingMatrix::new(3, vec![0.0; 2], ids.clone(), TemplateId::P, "x"),
            Err(MatrixError::Shape { .. })
        ));
        assert_eq!(
            EmbeddingMatrix::new(2, vec![0.0, f32::NAN], ids, TemplateId::P, "x"),
            Err(MatrixError::NonFinite(0))
        );
    }
}
