use std::collections::HashMap;
use std::path::Path;

use super::{load_cache, BackendError, CacheError, EmbeddingMatrix, MlmBackend, TokenScore};
use crate::prompt::RenderedPrompt;

/// Serves precomputed embeddings, looked up by the prompt's instance id.
#[derive(Debug, Clone)]
pub struct FileBackend {
    name: String,
    matrix: EmbeddingMatrix,
    index: HashMap<String, usize>,
}

impl FileBackend {
    pub fn new(matrix: EmbeddingMatrix) -> Self {
        let index = matrix
            .instance_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Self {
            name: format!("file:{}", matrix.backend_name),
            matrix,
            index,
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        Ok(Self::new(load_cache(path)?))
    }
}

impl MlmBackend for FileBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn hidden_dim(&self) -> usize {
        self.matrix.dim()
    }

    fn batch_size(&self) -> usize {
        1024
    }

    fn has_mlm_head(&self) -> bool {
        false
    }

    fn mask_embedding(&self, prompt: &RenderedPrompt) -> Result<Vec<f32>, BackendError> {
        self.index
            .get(&prompt.source_instance_id)
            .map(|&i| self.matrix.row(i).to_vec())
            .ok_or_else(|| BackendError::MissingEmbedding(prompt.source_instance_id.clone()))
    }

    fn top_tokens(&self, _prompt: &RenderedPrompt, _m: usize) -> Result<Vec<TokenScore>, BackendError> {
        Err(BackendError::NoMlmHead(self.name.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::TemplateId;

    #[test]
    fn serves_rows_by_id() {
        let m = EmbeddingMatrix::new(
            2,
            vec![1.0, 2.0, 3.0, 4.0],
            vec!["x".into(), "y".into()],
            TemplateId::P,
            "orig",
        )
        .unwrap();
        let b = FileBackend::new(m);
        let p = |id: &str| RenderedPrompt {
            text: "[CLS] [MASK] [SEP]".into(),
            mask_offset: 6,
            source_instance_id: id.into(),
            template_id: TemplateId::P,
        };
        assert_eq!(b.mask_embedding(&p("y")).unwrap(), vec![3.0, 4.0]);
        assert!(matches!(b.mask_embedding(&p("z")), Err(BackendError::MissingEmbedding(_))));
        assert!(!b.has_mlm_head());
        assert_eq!(b.name(), "file:orig");
    }
}
