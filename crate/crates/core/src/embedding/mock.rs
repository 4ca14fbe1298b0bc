use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

/// Deterministic offline embedder: counts character trigrams of the
/// lowercased, space-padded text into `dim` buckets chosen by FNV-1a, then
/// L2-normalizes. Different trigrams can share a bucket, so unrelated texts
/// have small positive similarity rather than exactly zero.
///
/// Explicit vectors can be pinned per text with [`HashingEmbedder::with_override`]
/// to construct exact similarities in tests.
#[derive(Debug)]
pub struct HashingEmbedder {
    dim: usize,
    overrides: HashMap<String, Vec<f64>>,
    calls: AtomicUsize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder {
            dim,
            overrides: HashMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_override(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.overrides.insert(text.into(), vector);
        self
    }

    pub fn with_overrides(mut self, overrides: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        self.overrides.extend(overrides);
        self
    }

    /// Number of `embed_batch` calls served so far.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn hash_vector(&self, text: &str) -> Vec<f64> {
        let padded: Vec<char> = format!(" {} ", text.trim().to_lowercase()).chars().collect();
        let mut counts = vec![0.0; self.dim];
        let mut buf = [0u8; 12];
        for window in padded.windows(3) {
            let mut hash = FNV_OFFSET;
            for c in window {
                for b in c.encode_utf8(&mut buf).as_bytes() {
                    hash ^= u64::from(*b);
                    hash = hash.wrapping_mul(FNV_PRIME);
                }
            }
            counts[(hash % self.dim as u64) as usize] += 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        counts.iter().map(|c| c / norm).collect()
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        "mock"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        texts
            .iter()
            .map(|t| match self.overrides.get(*t) {
                Some(v) if v.len() != self.dim => Err(EmbeddingError::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                }),
                Some(v) => EmbeddingVector::new(v.clone()),
                None => EmbeddingVector::new(self.hash_vector(t)),
            })
            .collect()
    }
}
