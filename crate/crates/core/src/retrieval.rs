//! Embedding-based retrieval of premises and tactics.
//!
//! Exact full scan with cosine similarity. Ties are broken by ascending key text,
//! so results are a pure function of the index and the query.
//!
//! Index file layout:
//!
//! ```text
//! #prooforge-index v1 dim=<d> items=<n>
//! {"key": "...", "kind": "Premise", "payload": "...", "vector": [...]}
//! ```
//!
//! One JSON object per item, in index order. Floats are written in shortest
//! round-trip form, so a reloaded index answers queries identically.

use std::cmp::Ordering;
use std::io::{BufRead, Write};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_PREMISE_K: usize = 5;
pub const DEFAULT_TACTIC_K: usize = 5;
pub const DEFAULT_MOCK_DIM: usize = 64;

const INDEX_MAGIC: &str = "#prooforge-index v1";

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("embedding provider failed on {key:?}: {message}")]
    Provider { key: String, message: String },
    #[error("embedding for {key:?} has dim {got}, expected {expected}")]
    DimensionMismatch { key: String, expected: usize, got: usize },
    #[error("embedding for {0:?} has non-finite entries")]
    NonFinite(String),
    #[error("embedding for {0:?} has zero norm")]
    ZeroVector(String),
    #[error("index line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Cosine similarity clamped to [-1, 1]; 0 when either side has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, String>;
}

/// Hash-seeded pseudo-random unit vectors. Equal texts give equal vectors.
#[derive(Debug, Clone)]
pub struct MockEmbedding {
    pub dim: usize,
    pub seed: u64,
}

impl MockEmbedding {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        MockEmbedding { dim, seed }
    }
}

impl Default for MockEmbedding {
    fn default() -> Self {
        MockEmbedding::new(DEFAULT_MOCK_DIM, 0)
    }
}

impl EmbeddingProvider for MockEmbedding {
    fn embed(&self, text: &str) -> Result<Vec<f64>, String> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(text.as_bytes());
        let seed: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Fixed text-to-vector table; unknown texts are an error.
#[derive(Debug, Clone, Default)]
pub struct StaticEmbedding {
    pub table: std::collections::HashMap<String, Vec<f64>>,
}

impl StaticEmbedding {
    pub fn with(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.table.insert(text.into(), vector);
        self
    }
}

impl EmbeddingProvider for StaticEmbedding {
    fn embed(&self, text: &str) -> Result<Vec<f64>, String> {
        self.table.get(text).cloned().ok_or_else(|| "no vector for text".to_string())
    }
}

/// OpenAI-compatible `POST {base_url}/embeddings` with body
/// `{"model": ..., "input": text}`; reads `data[0].embedding`.
pub struct HttpEmbedding {
    base_url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbedding {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpEmbedding { base_url: base_url.trim_end_matches('/').to_string(), model: model.to_string(), api_key, agent }
    }
}

impl EmbeddingProvider for HttpEmbedding {
    fn embed(&self, text: &str) -> Result<Vec<f64>, String> {
        let mut req = self.agent.post(format!("{}/embeddings", self.base_url));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let body = serde_json::json!({ "model": self.model, "input": text });
        let mut resp = req.send_json(&body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        if status != 200 {
            return Err(format!("HTTP {status}: {value}"));
        }
        value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| "response has no data[0].embedding".to_string())?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| "non-numeric embedding entry".to_string()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    Premise,
    Tactic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexItem {
    pub key: String,
    pub kind: PayloadKind,
    pub payload: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub payload: String,
    pub key: String,
    pub similarity: f64,
}

/// A tactic together with the goal it was applied to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TacticExample {
    pub tactic: String,
    pub goal: String,
}

impl TacticExample {
    pub fn key_text(&self) -> String {
        if self.goal.is_empty() {
            self.tactic.clone()
        } else {
            format!("{}\n{}", self.tactic, self.goal)
        }
    }
}

pub fn premise_key(name: &str, statement: &str) -> String {
    format!("{name} : {statement}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalIndex {
    items: Vec<IndexItem>,
    dim: usize,
}

fn check_vector(key: &str, values: Vec<f64>, dim: &mut usize) -> Result<EmbeddingVector, RetrievalError> {
    let v = EmbeddingVector::new(values);
    if !v.is_finite() {
        return Err(RetrievalError::NonFinite(key.to_string()));
    }
    if v.dim() == 0 || v.norm() == 0.0 {
        return Err(RetrievalError::ZeroVector(key.to_string()));
    }
    if *dim == 0 {
        *dim = v.dim();
    } else if v.dim() != *dim {
        return Err(RetrievalError::DimensionMismatch { key: key.to_string(), expected: *dim, got: v.dim() });
    }
    Ok(v)
}

pub fn build_index(
    provider: &dyn EmbeddingProvider,
    premises: &[(String, String)],
    tactics: &[TacticExample],
) -> Result<RetrievalIndex, RetrievalError> {
    build_index_parallel(provider, premises, tactics, 1)
}

/// As [`build_index`], embedding with up to `parallelism` threads.
/// Item order and contents do not depend on `parallelism`.
pub fn build_index_parallel(
    provider: &dyn EmbeddingProvider,
    premises: &[(String, String)],
    tactics: &[TacticExample],
    parallelism: usize,
) -> Result<RetrievalIndex, RetrievalError> {
    let mut pending: Vec<(String, PayloadKind, String)> = Vec::with_capacity(premises.len() + tactics.len());
    for (name, statement) in premises {
        pending.push((premise_key(name, statement), PayloadKind::Premise, name.clone()));
    }
    for t in tactics {
        pending.push((t.key_text(), PayloadKind::Tactic, t.tactic.clone()));
    }

    let workers = parallelism.max(1).min(pending.len().max(1));
    let chunk = pending.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<f64>, String>> = if workers == 1 {
        pending.iter().map(|(key, _, _)| provider.embed(key)).collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = pending
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|(key, _, _)| provider.embed(key)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("embedding worker panicked")).collect()
        })
    };

    let mut index = RetrievalIndex::default();
    for ((key, kind, payload), result) in pending.into_iter().zip(results) {
        let values = result.map_err(|message| RetrievalError::Provider { key: key.clone(), message })?;
        let vector = check_vector(&key, values, &mut index.dim)?;
        index.items.push(IndexItem { key, kind, payload, vector });
    }
    Ok(index)
}

impl RetrievalIndex {
    pub fn items(&self) -> &[IndexItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Top-`k` items of `kind` by cosine similarity to `query`.
    pub fn retrieve(
        &self,
        provider: &dyn EmbeddingProvider,
        query: &str,
        k: usize,
        kind: PayloadKind,
    ) -> Result<Vec<Retrieved>, RetrievalError> {
        let values =
            provider.embed(query).map_err(|message| RetrievalError::Provider { key: query.to_string(), message })?;
        let q = EmbeddingVector::new(values);
        if !q.is_finite() {
            return Err(RetrievalError::NonFinite(query.to_string()));
        }
        if q.norm() == 0.0 {
            return Err(RetrievalError::ZeroVector(query.to_string()));
        }
        if !self.is_empty() && q.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch { key: query.to_string(), expected: self.dim, got: q.dim() });
        }
        Ok(self.retrieve_vector(&q.values, k, kind))
    }

    /// Ranking against a precomputed query vector.
    pub fn retrieve_vector(&self, query: &[f64], k: usize, kind: PayloadKind) -> Vec<Retrieved> {
        let mut scored: Vec<Retrieved> = self
            .items
            .iter()
            .filter(|item| item.kind == kind)
            .map(|item| Retrieved {
                payload: item.payload.clone(),
                key: item.key.clone(),
                similarity: cosine(query, &item.vector.values),
            })
            .collect();
        scored.sort_by(|a, b| {
            b.similarity.partial_cmp(&a.similarity).unwrap_or(Ordering::Equal).then_with(|| a.key.cmp(&b.key))
        });
        scored.truncate(k);
        scored
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), RetrievalError> {
        writeln!(out, "{INDEX_MAGIC} dim={} items={}", self.dim, self.items.len())?;
        for item in &self.items {
            let line = serde_json::to_string(item).map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, RetrievalError> {
        let mut lines = reader.lines().enumerate();
        let format = |line: usize, message: String| RetrievalError::Format { line, message };
        let (_, header) = lines.next().ok_or_else(|| format(1, "missing header".into()))?;
        let header = header?;
        let rest = header.strip_prefix(INDEX_MAGIC).ok_or_else(|| format(1, format!("expected {INDEX_MAGIC:?}")))?;
        let mut dim = None;
        let mut count = None;
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                Some(("items", v)) => count = v.parse::<usize>().ok(),
                _ => return Err(format(1, format!("unknown header field {field:?}"))),
            }
        }
        let (Some(dim), Some(count)) = (dim, count) else {
            return Err(format(1, "header needs dim and items".into()));
        };
        let mut index = RetrievalIndex { items: Vec::with_capacity(count), dim };
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item: IndexItem = serde_json::from_str(&line).map_err(|e| format(i + 1, format!("bad item: {e}")))?;
            if item.vector.dim() != dim {
                return Err(format(i + 1, format!("vector dim {} != {dim}", item.vector.dim())));
            }
            index.items.push(item);
        }
        if index.items.len() != count {
            return Err(format(0, format!("header promises {count} items, found {}", index.items.len())));
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn premises(n: usize) -> Vec<(String, String)> {
        (0..n).map(|i| (format!("P{i}"), format!("stmt {i}"))).collect()
    }

    #[test]
    fn empty_inputs_give_empty_index() {
        let idx = build_index(&MockEmbedding::default(), &[], &[]).unwrap();
        assert!(idx.is_empty());
    }

    #[test]
    fn size_and_dim() {
        let idx = build_index(&MockEmbedding::new(16, 1), &premises(3), &[]).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.dim(), 16);
    }

    #[test]
    fn duplicate_texts_share_vectors() {
        let p = vec![("A".to_string(), "x".to_string()), ("A".to_string(), "x".to_string())];
        let idx = build_index(&MockEmbedding::default(), &p, &[]).unwrap();
        assert_eq!(idx.items()[0].vector, idx.items()[1].vector);
    }

    #[test]
    fn self_similarity_first() {
        let mock = MockEmbedding::default();
        let idx = build_index(&mock, &premises(20), &[]).unwrap();
        let hits = idx.retrieve(&mock, &premise_key("P7", "stmt 7"), 3, PayloadKind::Premise).unwrap();
        assert_eq!(hits[0].payload, "P7");
        assert!((hits[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_larger_than_index() {
        let mock = MockEmbedding::default();
        let idx = build_index(&mock, &premises(4), &[]).unwrap();
        assert_eq!(idx.retrieve(&mock, "q", 100, PayloadKind::Premise).unwrap().len(), 4);
        assert!(idx.retrieve(&mock, "q", 100, PayloadKind::Tactic).unwrap().is_empty());
    }

    #[test]
    fn orthogonal_vectors() {
        let p = premises(3);
        let mut provider = StaticEmbedding::default();
        for (i, (n, s)) in p.iter().enumerate() {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            provider = provider.with(premise_key(n, s), v);
        }
        provider = provider.with("q", vec![0.0, 2.0, 0.0]);
        let idx = build_index(&provider, &p, &[]).unwrap();
        let hits = idx.retrieve(&provider, "q", 3, PayloadKind::Premise).unwrap();
        assert_eq!(hits[0].payload, "P1");
        assert_eq!(hits[0].similarity, 1.0);
        // ties at 0.0 ordered by key
        assert_eq!((hits[1].payload.as_str(), hits[1].similarity), ("P0", 0.0));
        assert_eq!((hits[2].payload.as_str(), hits[2].similarity), ("P2", 0.0));
    }

    #[test]
    fn zero_query_is_rejected() {
        let provider = StaticEmbedding::default().with("a : b", vec![1.0, 0.0]).with("zero", vec![0.0, 0.0]);
        let idx = build_index(&provider, &[("a".into(), "b".into())], &[]).unwrap();
        assert!(matches!(idx.retrieve(&provider, "zero", 1, PayloadKind::Premise), Err(RetrievalError::ZeroVector(_))));
    }

    #[test]
    fn provider_error_names_item() {
        let provider = StaticEmbedding::default().with("a : b", vec![1.0]);
        let err = build_index(&provider, &[("a".into(), "b".into()), ("c".into(), "d".into())], &[]).unwrap_err();
        match err {
            RetrievalError::Provider { key, .. } => assert_eq!(key, "c : d"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn mixed_dims_rejected() {
        let provider = StaticEmbedding::default().with("a : b", vec![1.0]).with("c : d", vec![1.0, 1.0]);
        let err = build_index(&provider, &[("a".into(), "b".into()), ("c".into(), "d".into())], &[]).unwrap_err();
        assert!(matches!(err, RetrievalError::DimensionMismatch { .. }));
    }

    #[test]
    fn tactic_key_includes_goal() {
        let t = TacticExample { tactic: "simpl".into(), goal: "0 + n = n".into() };
        assert_eq!(t.key_text(), "simpl\n0 + n = n");
        let mock = MockEmbedding::default();
        let idx = build_index(&mock, &[], std::slice::from_ref(&t)).unwrap();
        let hits = idx.retrieve(&mock, &t.key_text(), 1, PayloadKind::Tactic).unwrap();
        assert_eq!(hits[0].payload, "simpl");
    }

    #[test]
    fn parallel_build_matches_sequential() {
        let mock = MockEmbedding::new(8, 3);
        let a = build_index(&mock, &premises(37), &[]).unwrap();
        let b = build_index_parallel(&mock, &premises(37), &[], 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn persistence_round_trip() {
        let mock = MockEmbedding::new(12, 9);
        let tactics = vec![TacticExample { tactic: "lia".into(), goal: "x < y".into() }];
        let idx = build_index(&mock, &premises(10), &tactics).unwrap();
        let mut buf = Vec::new();
        idx.write(&mut buf).unwrap();
        let back = RetrievalIndex::read(buf.as_slice()).unwrap();
        assert_eq!(back, idx);
        for q in ["a", "stmt 3", "lia"] {
            assert_eq!(
                idx.retrieve(&mock, q, 5, PayloadKind::Premise).unwrap(),
                back.retrieve(&mock, q, 5, PayloadKind::Premise).unwrap()
            );
        }
    }

    #[test]
    fn truncated_index_file_rejected() {
        let mock = MockEmbedding::new(4, 0);
        let idx = build_index(&mock, &premises(3), &[]).unwrap();
        let mut buf = Vec::new();
        idx.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(RetrievalIndex::read(cut.as_bytes()).is_err());
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, dim)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_bounded(a in vec_strategy(6), b in vec_strategy(6)) {
            let ab = cosine(&a, &b);
            prop_assert_eq!(ab, cosine(&b, &a));
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn matches_brute_force(n in 0usize..120, k in 1usize..20, qseed in 0u64..1000) {
            let mock = MockEmbedding::new(8, 5);
            let idx = build_index(&mock, &premises(n), &[]).unwrap();
            let query = format!("query {qseed}");
            let got = idx.retrieve(&mock, &query, k, PayloadKind::Premise).unwrap();
            // brute force: score every item, full sort, take k
            let q = mock.embed(&query).unwrap();
            let mut all: Vec<(f64, String)> = idx.items().iter().map(|it| {
                let dot: f64 = q.iter().zip(&it.vector.values).map(|(x, y)| x * y).sum();
                let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                let ni = it.vector.values.iter().map(|x| x * x).sum::<f64>().sqrt();
                (dot / (nq * ni), it.key.clone())
            }).collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            prop_assert_eq!(got.len(), k.min(n));
            for (g, (s, key)) in got.iter().zip(&all) {
                prop_assert_eq!(&g.key, key);
                prop_assert!((g.similarity - s).abs() < 1e-12);
            }
            prop_assert_eq!(got, idx.retrieve(&mock, &query, k, PayloadKind::Premise).unwrap());
        }
    }
}
