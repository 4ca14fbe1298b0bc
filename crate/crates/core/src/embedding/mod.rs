//! Embedding providers and the exact nearest-neighbor index used for few-shot
//! selection and canonical form matching.

mod http;
mod index;
mod mock;

use thiserror::Error;

pub use http::{HttpEmbedder, EMBEDDINGS_API_KEY_ENV};
pub use index::{build_indexes, similarity_match, FormMatcher, Index, IndexSet, IndexedItem, ItemKind, RetrievalConfig};
pub use mock::HashingEmbedder;

use crate::llm::ProviderError;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero or non-finite embedding vector")]
    DegenerateVector,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// A nonzero, finite vector with its L2 norm cached.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::DegenerateVector);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::DegenerateVector);
        }
        Ok(EmbeddingVector { values, norm })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Embeds every text; the output has one vector per input, in order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;
}

/// Embeds a batch after checking every text is nonempty and every returned
/// vector has the provider's declared dimension.
pub fn embed_texts(provider: &dyn EmbeddingProvider, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(EmbeddingError::EmptyText);
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::fatal(format!(
            "{} returned {} vectors for {} texts",
            provider.name(),
            vectors.len(),
            texts.len()
        ))
        .into());
    }
    for v in &vectors {
        if v.dim() != provider.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: provider.dim(),
                got: v.dim(),
            });
        }
    }
    Ok(vectors)
}

pub fn embed_text(provider: &dyn EmbeddingProvider, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
    Ok(embed_texts(provider, &[text])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn rejects_zero_and_nan() {
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).is_err());
        assert!(EmbeddingVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn cosine_identity_and_orthogonal() {
        let a = v(&[0.3, -2.0, 5.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let x = v(&[1.0, 0.0]);
        let y = v(&[0.0, 1.0]);
        assert!(cosine_similarity(&x, &y).unwrap().abs() < 1e-9);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let err = cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, EmbeddingError::DimensionMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn embed_text_rejects_blank() {
        let p = HashingEmbedder::new(16);
        assert!(matches!(embed_text(&p, "  \n"), Err(EmbeddingError::EmptyText)));
    }
}
