use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{BackendError, MlmBackend, TokenScore};
use crate::prompt::{RenderedPrompt, CLS, MASK, SEP};

const FILLER_VOCABULARY: [&str; 12] = [
    ",", ".", "the", "of", "is", "was", "in", "and", "to", "by", "for", "with",
];

#[derive(Debug, Clone)]
pub enum StubMode {
    /// Prompt text hashed to a seeded pseudo-random unit vector.
    Hash,
    /// Each instance embeds as its relation's fixed unit direction plus
    /// gaussian noise (`noise` per coordinate). The id→label table is the
    /// test oracle; relation labels also form the MLM vocabulary.
    GoldDirection {
        labels: HashMap<String, String>,
        noise: f32,
    },
}

/// Deterministic, model-free backend.
#[derive(Debug, Clone)]
pub struct StubBackend {
    hidden_dim: usize,
    max_length: usize,
    mode: StubMode,
    logits: Option<Vec<(String, f32)>>,
}

fn seed_of(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn gaussian(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn unit(seed: u64, dim: usize) -> Vec<f64> {
    let v = gaussian(seed, dim);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Whitespace tokens, with placeholders split off from adjacent text.
fn token_count(text: &str) -> usize {
    let mut spaced = text.to_string();
    for placeholder in [CLS, MASK, SEP] {
        spaced = spaced.replace(placeholder, &format!(" {placeholder} "));
    }
    spaced.split_whitespace().count()
}

impl StubBackend {
    pub fn hashed(hidden_dim: usize) -> Self {
        Self {
            hidden_dim,
            max_length: 512,
            mode: StubMode::Hash,
            logits: None,
        }
    }

    pub fn gold_direction(hidden_dim: usize, labels: HashMap<String, String>, noise: f32) -> Self {
        Self {
            hidden_dim,
            max_length: 512,
            mode: StubMode::GoldDirection { labels, noise },
            logits: None,
        }
    }

    pub fn with_max_length(mut self, max_length: usize) -> Self {
        self.max_length = max_length;
        self
    }

    /// Fixes the MLM head output to the given vocabulary scores.
    pub fn with_logits(mut self, logits: Vec<(String, f32)>) -> Self {
        self.logits = Some(logits);
        self
    }

    fn check_length(&self, prompt: &RenderedPrompt) -> Result<(), BackendError> {
        let tokens = token_count(&prompt.text);
        if tokens > self.max_length {
            return Err(BackendError::TooLong {
                instance: prompt.source_instance_id.clone(),
                tokens,
                max: self.max_length,
            });
        }
        Ok(())
    }

    fn label_of(&self, prompt: &RenderedPrompt) -> Result<Option<&str>, BackendError> {
        match &self.mode {
            StubMode::Hash => Ok(None),
            StubMode::GoldDirection { labels, .. } => labels
                .get(&prompt.source_instance_id)
                .map(|l| Some(l.as_str()))
                .ok_or_else(|| BackendError::MissingEmbedding(prompt.source_instance_id.clone())),
        }
    }

    fn vocabulary_scores(&self, prompt: &RenderedPrompt) -> Result<Vec<(String, f32)>, BackendError> {
        if let Some(fixed) = &self.logits {
            return Ok(fixed.clone());
        }
        let mut vocab: BTreeSet<String> = FILLER_VOCABULARY.iter().map(|s| s.to_string()).collect();
        if let StubMode::GoldDirection { labels, .. } = &self.mode {
            vocab.extend(labels.values().cloned());
        }
        let label = self.label_of(prompt)?;
        let noise = gaussian(seed_of(&["logits", &prompt.text]), vocab.len());
        Ok(vocab
            .into_iter()
            .zip(noise)
            .map(|(token, z)| {
                let boost = if Some(token.as_str()) == label { 10.0 } else { 0.0 };
                let score = boost + (z * 0.1) as f32;
                (token, score)
            })
            .collect())
    }
}

impl MlmBackend for StubBackend {
    fn name(&self) -> &str {
        match self.mode {
            StubMode::Hash => "stub-hash",
            StubMode::GoldDirection { .. } => "stub-gold-direction",
        }
    }

    fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn has_mlm_head(&self) -> bool {
        true
    }

    fn mask_embedding(&self, prompt: &RenderedPrompt) -> Result<Vec<f32>, BackendError> {
        self.check_length(prompt)?;
        let v = match &self.mode {
            StubMode::Hash => unit(seed_of(&["text", &prompt.text]), self.hidden_dim),
            StubMode::GoldDirection { noise, .. } => {
                let label = self.label_of(prompt)?.unwrap_or_default();
                let direction = unit(seed_of(&["relation", label]), self.hidden_dim);
                let jitter = gaussian(
                    seed_of(&["noise", &prompt.source_instance_id, prompt.template_id.as_str()]),
                    self.hidden_dim,
                );
                direction
                    .iter()
                    .zip(jitter)
                    .map(|(d, z)| d + *noise as f64 * z)
                    .collect()
            }
        };
        Ok(v.into_iter().map(|x| x as f32).collect())
    }

    fn top_tokens(&self, prompt: &RenderedPrompt, m: usize) -> Result<Vec<TokenScore>, BackendError> {
        self.check_length(prompt)?;
        let mut scores = self.vocabulary_scores(prompt)?;
        if m > scores.len() {
            return Err(BackendError::VocabularyExceeded {
                m,
                vocab: scores.len(),
            });
        }
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(scores
            .into_iter()
            .take(m)
            .map(|(token, score)| TokenScore { token, score })
            .collect())
    }
}
