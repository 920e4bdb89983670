//! Background retrieval by embedding similarity.
//!
//! Every query frame is scored against every candidate background with
//! cosine similarity; the per-query score vectors are averaged and the
//! candidate with the highest mean similarity wins.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ImagePlane;
use crate::par::Execution;

pub const EMB_MAGIC: [u8; 4] = *b"EMB1";

/// Immutable id-indexed embedding matrix. Row norms are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f32>,
    norms: Vec<f64>,
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

impl EmbeddingStore {
    pub fn new(dim: usize, ids: Vec<String>, vectors: Vec<f32>) -> Result<Self> {
        if vectors.len() != ids.len() * dim {
            return Err(Error::Format(format!(
                "{} ids x dim {dim} needs {} values, got {}",
                ids.len(),
                ids.len() * dim,
                vectors.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let mut norms = Vec::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            let row = &vectors[i * dim..(i + 1) * dim];
            let n = norm(row);
            if !row.iter().all(|x| x.is_finite()) || n == 0.0 || !n.is_finite() {
                return Err(Error::ZeroNormVector(id.clone()));
            }
            norms.push(n);
        }
        Ok(EmbeddingStore {
            dim,
            ids,
            vectors,
            norms,
        })
    }

    pub fn from_rows(rows: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let dim = rows.first().map_or(0, |(_, v)| v.len());
        let mut ids = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::DimMismatch(format!(
                    "row {id:?} has dim {}, expected {dim}",
                    v.len()
                )));
            }
            ids.push(id);
            vectors.extend(v);
        }
        Self::new(dim, ids, vectors)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.vectors.len() * 4);
        out.extend_from_slice(&EMB_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let fmt = |what: &str| Error::Format(format!("EMB1: {what}"));
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(|_| fmt("missing header"))?;
        if word != EMB_MAGIC {
            return Err(fmt("bad magic"));
        }
        let mut read_u32 = |r: &mut &[u8]| -> Result<usize> {
            r.read_exact(&mut word).map_err(|_| fmt("truncated"))?;
            Ok(u32::from_le_bytes(word) as usize)
        };
        let count = read_u32(&mut r)?;
        let dim = read_u32(&mut r)?;
        let n = count.checked_mul(dim).ok_or_else(|| fmt("size overflow"))?;
        if r.len() < n.saturating_mul(4) {
            return Err(fmt("truncated vectors"));
        }
        let (payload, mut rest) = r.split_at(n * 4);
        let vectors = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(&mut rest)?;
            if rest.len() < len {
                return Err(fmt("truncated id"));
            }
            let (s, tail) = rest.split_at(len);
            ids.push(String::from_utf8(s.to_vec()).map_err(|_| fmt("id is not UTF-8"))?);
            rest = tail;
        }
        if !rest.is_empty() {
            return Err(fmt("trailing bytes"));
        }
        Self::new(dim, ids, vectors)
    }
}

pub fn load_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

pub fn save_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&store.to_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Cosine similarity accumulated in f64 and clamped to `[-1, 1]`.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Similarities of one query against every stored row, aligned with the
/// store's ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }
}

pub fn score_vector_with(
    exec: Execution,
    query: &[f32],
    targets: &EmbeddingStore,
) -> Result<ScoreVector> {
    if targets.is_empty() {
        return Err(Error::EmptyStore);
    }
    if query.len() != targets.dim() {
        return Err(Error::DimMismatch(format!(
            "query dim {} vs store dim {}",
            query.len(),
            targets.dim()
        )));
    }
    let qn = norm(query);
    if qn == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let scores = exec.map_range(targets.len(), |j| {
        (dot(query, targets.row(j)) / (qn * targets.norms[j])).clamp(-1.0, 1.0)
    });
    Ok(ScoreVector(scores))
}

pub fn score_vector(query: &[f32], targets: &EmbeddingStore) -> Result<ScoreVector> {
    score_vector_with(Execution::default(), query, targets)
}

/// One score vector per query row. Parallel across queries.
pub fn score_all_with(
    exec: Execution,
    queries: &EmbeddingStore,
    targets: &EmbeddingStore,
) -> Result<Vec<ScoreVector>> {
    exec.map_range(queries.len(), |i| {
        score_vector_with(Execution::Sequential, queries.row(i), targets)
    })
    .into_iter()
    .collect()
}

pub fn score_all(queries: &EmbeddingStore, targets: &EmbeddingStore) -> Result<Vec<ScoreVector>> {
    score_all_with(Execution::default(), queries, targets)
}

/// Elementwise arithmetic mean.
pub fn aggregate(scores: &[ScoreVector]) -> Result<ScoreVector> {
    let first = scores.first().ok_or(Error::EmptyList)?;
    let m = first.len();
    let mut sum = vec![0.0f64; m];
    for s in scores {
        if s.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                found: s.len(),
            });
        }
        sum.iter_mut().zip(&s.0).for_each(|(acc, &v)| *acc += v);
    }
    let n = scores.len() as f64;
    Ok(ScoreVector(sum.into_iter().map(|v| v / n).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    /// Highest similarity, i.e. the closest frame.
    #[default]
    Max,
    /// Lowest similarity, the literal `argmin` reading.
    Min,
}

impl std::str::FromStr for SelectMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(SelectMode::Max),
            "min" => Ok(SelectMode::Min),
            other => Err(Error::Schema(format!("unknown select mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub id: String,
    pub index: usize,
    pub score: f64,
}

/// Picks the best-scoring row; ties go to the lowest index.
pub fn select_background(
    avg: &ScoreVector,
    targets: &EmbeddingStore,
    mode: SelectMode,
) -> Result<Selection> {
    if targets.is_empty() || avg.is_empty() {
        return Err(Error::EmptyStore);
    }
    if avg.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            found: avg.len(),
        });
    }
    let mut best = 0;
    for (i, &s) in avg.0.iter().enumerate().skip(1) {
        let better = match mode {
            SelectMode::Max => s > avg.0[best],
            SelectMode::Min => s < avg.0[best],
        };
        if better {
            best = i;
        }
    }
    Ok(Selection {
        id: targets.ids()[best].clone(),
        index: best,
        score: avg.0[best],
    })
}

/// Normalized luminance histogram with `bins` bins and a small constant
/// floor, so the result never has zero norm. A deterministic stand-in for a
/// learned embedding when no embedding sidecar is configured.
pub fn histogram_embedding(img: &ImagePlane<f32>, bins: usize) -> Vec<f32> {
    let bins = bins.max(1);
    let mut hist = vec![1.0f64; bins];
    let c = img.channels();
    for px in img.data().chunks_exact(c) {
        let l = if c >= 3 {
            0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
        } else {
            px[0]
        };
        let b = ((l.clamp(0.0, 1.0) * bins as f32) as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    hist.into_iter().map(|h| (h / total) as f32).collect()
}
