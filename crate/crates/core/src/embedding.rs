//! Pivot-table embeddings: a content-independent query half concatenated with
//! a content half, compared by rescaled cosine distance.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::name_tokens;
use crate::http::JsonClient;
use crate::pivot::{PivotGrid, PivotSpec};

pub const DEFAULT_HALF_DIM: usize = 64;
/// Leading content slots reserved for shape and distribution statistics.
const STAT_SLOTS: usize = 10;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embeddings come from different providers: `{left}` vs `{right}`")]
    ProviderMismatch { left: String, right: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub provider_id: String,
    /// Set when a remote provider failed and the baseline answered instead.
    #[serde(default)]
    pub flagged: bool,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_compatible(&self, other: &Embedding) -> Result<(), EmbeddingError> {
        if self.provider_id != other.provider_id {
            return Err(EmbeddingError::ProviderMismatch {
                left: self.provider_id.clone(),
                right: other.provider_id.clone(),
            });
        }
        if self.dim() != other.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> String;
    fn embed_query(&self, spec: &PivotSpec) -> Embedding;
    fn embed_content(&self, grid: &PivotGrid) -> Embedding;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn provider_id(&self) -> String {
        (**self).provider_id()
    }
    fn embed_query(&self, spec: &PivotSpec) -> Embedding {
        (**self).embed_query(spec)
    }
    fn embed_content(&self, grid: &PivotGrid) -> Embedding {
        (**self).embed_content(grid)
    }
}

/// Deterministic offline encoder built on signed feature hashing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineEmbedder {
    half_dim: usize,
}

impl Default for BaselineEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HALF_DIM)
    }
}

fn l2_normalize(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
}

fn hash_into(slots: &mut [f64], token: &str) {
    if slots.is_empty() {
        return;
    }
    let h = fnv1a64(token.as_bytes());
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    slots[(h % slots.len() as u64) as usize] += sign;
}

/// Clause-tagged tokens of a canonical query. SQL keywords carry no signal
/// and are omitted.
pub fn query_tokens(spec: &PivotSpec) -> Vec<String> {
    let mut tokens = vec![format!("fn:{}", spec.agg_fn().keyword().to_lowercase())];
    let attr = spec.agg_attr();
    tokens.push(format!("agg:{}", attr.to_lowercase()));
    tokens.extend(name_tokens(attr).into_iter().map(|t| format!("agg:{t}")));
    for g in spec.groups() {
        tokens.push(format!("by:{}", g.to_lowercase()));
        tokens.extend(name_tokens(g).into_iter().map(|t| format!("by:{t}")));
    }
    tokens
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Shape and distribution features, symmetric in rows and columns.
fn content_stats(grid: &PivotGrid) -> [f64; STAT_SLOTS] {
    let mut values: Vec<f64> = grid.non_null_values().collect();
    let mut out = [0.0; STAT_SLOTS];
    if values.is_empty() {
        return out;
    }
    // Sorting fixes the summation order, so a transposed grid sums identically.
    values.sort_by(f64::total_cmp);
    let (short, long) = (grid.n().min(grid.m()), grid.n().max(grid.m()));
    out[0] = (1.0 + short as f64).ln();
    out[1] = (1.0 + long as f64).ln();
    out[2] = values.len() as f64 / grid.cell_count() as f64;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale > 0.0 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        out[3] = mean / scale;
        out[4] = std / scale;
        out[5] = values[0] / scale;
        out[6] = values[values.len() - 1] / scale;
        out[7] = quantile(&values, 0.25) / scale;
        out[8] = quantile(&values, 0.5) / scale;
        out[9] = quantile(&values, 0.75) / scale;
    }
    out
}

impl BaselineEmbedder {
    pub fn new(half_dim: usize) -> Self {
        assert!(half_dim > STAT_SLOTS, "half dimension must exceed {STAT_SLOTS}");
        Self { half_dim }
    }

    pub fn half_dim(&self) -> usize {
        self.half_dim
    }

    fn wrap(&self, values: Vec<f64>) -> Embedding {
        Embedding {
            values,
            provider_id: self.provider_id(),
            flagged: false,
        }
    }
}

impl EmbeddingProvider for BaselineEmbedder {
    fn provider_id(&self) -> String {
        format!("baseline-fnv1a64-{}", self.half_dim)
    }

    fn embed_query(&self, spec: &PivotSpec) -> Embedding {
        let mut values = vec![0.0; self.half_dim];
        for token in query_tokens(spec) {
            hash_into(&mut values, &token);
        }
        l2_normalize(&mut values);
        self.wrap(values)
    }

    fn embed_content(&self, grid: &PivotGrid) -> Embedding {
        let mut values = vec![0.0; self.half_dim];
        let (stats, headers) = values.split_at_mut(STAT_SLOTS);
        stats.copy_from_slice(&content_stats(grid));
        for tuple in grid.row_headers.iter().chain(&grid.col_headers) {
            for label in tuple {
                hash_into(headers, &format!("h:{}", label.to_lowercase()));
            }
        }
        // Each block gets unit weight before the final normalization.
        l2_normalize(stats);
        l2_normalize(headers);
        l2_normalize(&mut values);
        self.wrap(values)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_in_flight() -> usize {
    4
}

#[derive(Serialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
enum EncodeRequest<'a> {
    Query(String),
    Content(&'a PivotGrid),
}

#[derive(Deserialize)]
struct EncodeReply {
    vector: Vec<f64>,
}

/// Encoder service client. Failures fall back to the baseline, flagged; the
/// differing provider id keeps such vectors out of distance comparisons.
#[derive(Debug)]
pub struct RemoteEmbedder {
    client: JsonClient,
    endpoint: String,
    fallback: BaselineEmbedder,
}

impl RemoteEmbedder {
    pub fn new(config: &RemoteEmbedderConfig) -> Self {
        Self {
            client: JsonClient::new(
                &config.endpoint,
                config.token.clone(),
                Duration::from_millis(config.timeout_ms),
                config.max_in_flight,
            ),
            endpoint: config.endpoint.clone(),
            fallback: BaselineEmbedder::default(),
        }
    }

    fn request(&self, request: &EncodeRequest<'_>) -> Option<Embedding> {
        let reply: EncodeReply = self.client.post(request).ok()?;
        if reply.vector.is_empty() || reply.vector.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Embedding {
            values: reply.vector,
            provider_id: self.provider_id(),
            flagged: false,
        })
    }

    fn flag(mut e: Embedding) -> Embedding {
        e.flagged = true;
        e
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn provider_id(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn embed_query(&self, spec: &PivotSpec) -> Embedding {
        self.request(&EncodeRequest::Query(spec.canonical_query()))
            .unwrap_or_else(|| Self::flag(self.fallback.embed_query(spec)))
    }

    fn embed_content(&self, grid: &PivotGrid) -> Embedding {
        self.request(&EncodeRequest::Content(grid))
            .unwrap_or_else(|| Self::flag(self.fallback.embed_content(grid)))
    }
}

/// Concatenates the query and content halves.
pub fn embed_pivot(
    provider: &dyn EmbeddingProvider,
    spec: &PivotSpec,
    grid: &PivotGrid,
) -> Result<Embedding, EmbeddingError> {
    let query = provider.embed_query(spec);
    let content = provider.embed_content(grid);
    if query.provider_id != content.provider_id {
        return Err(EmbeddingError::ProviderMismatch {
            left: query.provider_id,
            right: content.provider_id,
        });
    }
    let mut values = query.values;
    values.extend(content.values);
    Ok(Embedding {
        values,
        provider_id: query.provider_id,
        flagged: query.flagged || content.flagged,
    })
}

/// `(1 − cos)/2`. A zero operand counts as orthogonal (0.5).
pub fn pairwise_distance(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    a.check_compatible(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.5);
    }
    if a.values == b.values {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
    Ok(((1.0 - cos) / 2.0).clamp(0.0, 1.0))
}

/// Smallest pairwise distance; sets of at most one element score 1.
pub fn set_diversity(embeddings: &[&Embedding]) -> Result<f64, EmbeddingError> {
    let mut min = 1.0f64;
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            min = min.min(pairwise_distance(embeddings[i], embeddings[j])?);
        }
    }
    Ok(min)
}
