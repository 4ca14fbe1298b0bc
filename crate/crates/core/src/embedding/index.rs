use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use railgate_colang::{format_elements, Script};
use serde::{Deserialize, Serialize};

use super::{cosine_similarity, embed_text, embed_texts, EmbeddingError, EmbeddingProvider, EmbeddingVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Few-shot examples retrieved per prompt.
    pub k_examples: usize,
    /// `None` disables similarity matching (exact canonical form match only).
    pub similarity_threshold: Option<f64>,
    /// Keep only the first N examples of each user form.
    pub max_per_form: Option<usize>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k_examples: 5,
            similarity_threshold: Some(0.6),
            max_per_form: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    UserExample,
    Flow,
    BotExample,
    Chunk,
}

#[derive(Clone, Debug)]
pub struct IndexedItem {
    pub id: usize,
    pub kind: ItemKind,
    pub text: String,
    /// Canonical form for examples, flow name for flows, empty for chunks.
    pub payload: String,
    pub vector: EmbeddingVector,
}

/// Exhaustive cosine index. Results are ordered by descending score, then
/// ascending id.
#[derive(Clone, Debug, Default)]
pub struct Index {
    items: Vec<IndexedItem>,
}

struct Ranked {
    score: f64,
    id: usize,
}

// Greater means worse, so the heap top is the weakest kept candidate.
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl Index {
    pub fn new() -> Self {
        Index::default()
    }

    /// Adds an item and returns its id. All vectors must share a dimension.
    pub fn push(
        &mut self,
        kind: ItemKind,
        text: impl Into<String>,
        payload: impl Into<String>,
        vector: EmbeddingVector,
    ) -> Result<usize, EmbeddingError> {
        if let Some(first) = self.items.first() {
            if first.vector.dim() != vector.dim() {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: first.vector.dim(),
                    got: vector.dim(),
                });
            }
        }
        let id = self.items.len();
        self.items.push(IndexedItem {
            id,
            kind,
            text: text.into(),
            payload: payload.into(),
            vector,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[IndexedItem] {
        &self.items
    }

    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(&IndexedItem, f64)>, EmbeddingError> {
        self.search_filtered(query, k, |_| true)
    }

    /// Top-k over the items accepted by `keep`.
    pub fn search_filtered(
        &self,
        query: &EmbeddingVector,
        k: usize,
        keep: impl Fn(&IndexedItem) -> bool,
    ) -> Result<Vec<(&IndexedItem, f64)>, EmbeddingError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k.min(self.items.len()) + 1);
        for item in self.items.iter().filter(|i| keep(i)) {
            let entry = Ranked {
                score: cosine_similarity(query, &item.vector)?,
                id: item.id,
            };
            if heap.len() < k {
                heap.push(entry);
            } else if heap.peek().is_some_and(|worst| entry < *worst) {
                heap.pop();
                heap.push(entry);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| (&self.items[r.id], r.score))
            .collect())
    }

    /// Embeds `query_text` and returns the top `k` items. An empty index
    /// answers without calling the provider.
    pub fn knn(
        &self,
        query_text: &str,
        k: usize,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Vec<(&IndexedItem, f64)>, EmbeddingError> {
        self.knn_filtered(query_text, k, provider, |_| true)
    }

    pub fn knn_filtered(
        &self,
        query_text: &str,
        k: usize,
        provider: &dyn EmbeddingProvider,
        keep: impl Fn(&IndexedItem) -> bool,
    ) -> Result<Vec<(&IndexedItem, f64)>, EmbeddingError> {
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let query = embed_text(provider, query_text)?;
        self.search_filtered(&query, k, keep)
    }

    fn from_entries(
        kind: ItemKind,
        entries: Vec<(String, String, String)>,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Index, EmbeddingError> {
        let mut index = Index::new();
        if entries.is_empty() {
            return Ok(index);
        }
        let keys: Vec<&str> = entries.iter().map(|(_, _, key)| key.as_str()).collect();
        let vectors = embed_texts(provider, &keys)?;
        for ((text, payload, _), vector) in entries.into_iter().zip(vectors) {
            index.push(kind, text, payload, vector)?;
        }
        Ok(index)
    }
}

/// The retrieval indexes built from an application's definitions.
#[derive(Clone, Debug, Default)]
pub struct IndexSet {
    /// One item per example utterance, embedded by its text.
    pub user_examples: Index,
    /// One item per dialogue flow (rails excluded), embedded by its rendered body.
    pub flows: Index,
    /// One item per bot utterance, embedded by its canonical form.
    pub bot_examples: Index,
    /// Knowledge base chunks for retrieval-augmented answers.
    pub knowledge: Index,
}

impl IndexSet {
    pub fn with_knowledge(mut self, chunks: &[String], provider: &dyn EmbeddingProvider) -> Result<Self, EmbeddingError> {
        let entries = chunks
            .iter()
            .map(|c| (c.clone(), String::new(), c.clone()))
            .collect();
        self.knowledge = Index::from_entries(ItemKind::Chunk, entries, provider)?;
        Ok(self)
    }
}

pub fn build_indexes(
    script: &Script,
    provider: &dyn EmbeddingProvider,
    max_per_form: Option<usize>,
) -> Result<IndexSet, EmbeddingError> {
    let limit = max_per_form.unwrap_or(usize::MAX);
    let user = script
        .user_defs
        .iter()
        .flat_map(|d| {
            d.examples
                .iter()
                .take(limit)
                .map(|ex| (ex.clone(), d.canonical_form.clone(), ex.clone()))
        })
        .collect();
    let flows = script
        .flows
        .iter()
        .filter(|f| !f.is_input_rail() && !f.is_output_rail())
        .map(|f| {
            let body = format_elements(&f.elements);
            (body.clone(), f.name.clone(), body)
        })
        .collect();
    let bot = script
        .bot_defs
        .iter()
        .flat_map(|d| {
            d.utterances
                .iter()
                .map(|u| (u.clone(), d.canonical_form.clone(), d.canonical_form.clone()))
        })
        .collect();
    Ok(IndexSet {
        user_examples: Index::from_entries(ItemKind::UserExample, user, provider)?,
        flows: Index::from_entries(ItemKind::Flow, flows, provider)?,
        bot_examples: Index::from_entries(ItemKind::BotExample, bot, provider)?,
        knowledge: Index::new(),
    })
}

/// Defined canonical forms with their embeddings computed once.
#[derive(Clone, Debug, Default)]
pub struct FormMatcher {
    forms: Vec<String>,
    vectors: Vec<EmbeddingVector>,
    positions: HashMap<String, usize>,
}

impl FormMatcher {
    pub fn build(forms: Vec<String>, provider: &dyn EmbeddingProvider) -> Result<Self, EmbeddingError> {
        let refs: Vec<&str> = forms.iter().map(String::as_str).collect();
        let vectors = embed_texts(provider, &refs)?;
        let positions = forms.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        Ok(FormMatcher {
            forms,
            vectors,
            positions,
        })
    }

    pub fn forms(&self) -> &[String] {
        &self.forms
    }

    pub fn contains(&self, form: &str) -> bool {
        self.positions.contains_key(form)
    }

    /// Exact match first, then the most similar form if its score reaches
    /// `threshold`. Ties go to the earlier definition.
    pub fn best_match(
        &self,
        candidate: &str,
        threshold: f64,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Option<String>, EmbeddingError> {
        if self.contains(candidate) {
            return Ok(Some(candidate.to_string()));
        }
        if self.forms.is_empty() {
            return Ok(None);
        }
        let query = embed_text(provider, candidate)?;
        argmax(&query, &self.forms, &self.vectors, threshold)
    }
}

fn argmax(
    query: &EmbeddingVector,
    forms: &[String],
    vectors: &[EmbeddingVector],
    threshold: f64,
) -> Result<Option<String>, EmbeddingError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in vectors.iter().enumerate() {
        let score = cosine_similarity(query, v)?;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    Ok(best.filter(|(_, s)| *s >= threshold).map(|(i, _)| forms[i].clone()))
}

/// Maps a generated canonical form onto a defined one. Embeds the candidate
/// and all forms in a single batch unless the candidate matches exactly.
pub fn similarity_match(
    candidate: &str,
    defined_forms: &[String],
    threshold: f64,
    provider: &dyn EmbeddingProvider,
) -> Result<Option<String>, EmbeddingError> {
    if defined_forms.iter().any(|f| f == candidate) {
        return Ok(Some(candidate.to_string()));
    }
    if defined_forms.is_empty() {
        return Ok(None);
    }
    let mut texts = vec![candidate];
    texts.extend(defined_forms.iter().map(String::as_str));
    let mut vectors = embed_texts(provider, &texts)?;
    let query = vectors.remove(0);
    argmax(&query, defined_forms, &vectors, threshold)
}
