//! Diverse subset selection: embed assets, build a cosine-similarity kernel
//! and take the greedy MAP subset under a k-DPP.

use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};
use crate::text::{fold, tokenize};
use crate::types::{AdAsset, AssetCatalog, CatalogEntry};

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_JITTER: f64 = 1e-6;
pub const DEFAULT_GAIN_FLOOR: f64 = 1e-9;

const UNIGRAM_SEED: u64 = 0x5eed_0001;
const TRIGRAM_SEED: u64 = 0x5eed_0003;
const FALLBACK_SEED: u64 = 0x5eed_00ff;

/// Unit-norm dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
}

impl Embedding {
    /// L2-normalizes `v`; `None` for the zero vector.
    pub fn from_raw(v: Vec<f64>) -> Option<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (norm > 0.0).then(|| Embedding {
            vector: v.into_iter().map(|x| x / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding>;
}

/// Signed feature hashing of word unigrams and character trigrams.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    pub dim: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        HashedEmbedder { dim: DEFAULT_DIM }
    }
}

impl HashedEmbedder {
    fn add(&self, v: &mut [f64], bytes: &[u8], seed: u64) {
        let h = xxh3_64_with_seed(bytes, seed);
        let bucket = (h % self.dim as u64) as usize;
        v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
}

impl Embedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let folded = fold(text);
        if folded.is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        let mut v = vec![0.0; self.dim];
        for tok in tokenize(&folded) {
            self.add(&mut v, tok.as_bytes(), UNIGRAM_SEED);
        }
        let padded: Vec<char> = format!(" {folded} ").chars().collect();
        let mut buf = String::new();
        for w in padded.windows(3) {
            buf.clear();
            buf.extend(w);
            self.add(&mut v, buf.as_bytes(), TRIGRAM_SEED);
        }
        Embedding::from_raw(v)
            .or_else(|| {
                // every feature cancelled out; fall back to a single whole-text bucket
                let mut v = vec![0.0; self.dim];
                self.add(&mut v, folded.as_bytes(), FALLBACK_SEED);
                Embedding::from_raw(v.into_iter().map(f64::abs).collect())
            })
            .ok_or_else(|| Error::invalid("embedding degenerated to zero"))
    }
}

/// Symmetric n x n similarity matrix with jitter on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityKernel {
    n: usize,
    data: Vec<f64>,
    pub jitter: f64,
}

impl SimilarityKernel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

pub fn build_kernel(embeddings: &[Embedding], jitter: f64) -> Result<SimilarityKernel> {
    build_weighted_kernel(embeddings, None, jitter)
}

/// Kernel `diag(q) S diag(q)` where `S` is the cosine kernel and `q` are
/// optional positive per-item quality weights.
pub fn build_weighted_kernel(
    embeddings: &[Embedding],
    quality: Option<&[f64]>,
    jitter: f64,
) -> Result<SimilarityKernel> {
    let n = embeddings.len();
    if n == 0 {
        return Err(Error::invalid("kernel needs at least one embedding"));
    }
    let dim = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != dim) {
        return Err(Error::invalid("embedding dimensions differ"));
    }
    if let Some(q) = quality {
        if q.len() != n || q.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid(
                "quality weights must be positive, one per item",
            ));
        }
    }
    let q = |i: usize| quality.map_or(1.0, |q| q[i]);
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = q(i) * q(i) * (1.0 + jitter);
        for j in i + 1..n {
            let s = q(i) * q(j) * embeddings[i].dot(&embeddings[j]).clamp(-1.0, 1.0);
            data[i * n + j] = s;
            data[j * n + i] = s;
        }
    }
    Ok(SimilarityKernel { n, data, jitter })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedySelection {
    /// Selected indices in selection order.
    pub indices: Vec<usize>,
    /// Log-determinant gain of each pick.
    pub gains: Vec<f64>,
}

/// Greedy log-det maximization with incremental Cholesky residuals.
///
/// Stops after `k` picks or when the best remaining residual is within
/// `gain_floor` of what the diagonal jitter alone leaves for an exact
/// duplicate of a selected item.
pub fn greedy_map(kernel: &SimilarityKernel, k: usize, gain_floor: f64) -> Result<GreedySelection> {
    let n = kernel.n;
    if k < 1 || k > n {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    let mut d2: Vec<f64> = (0..n).map(|i| kernel.get(i, i)).collect();
    let floor: Vec<f64> = d2
        .iter()
        .map(|&lii| gain_floor + 2.0 * kernel.jitter * lii / (1.0 + kernel.jitter))
        .collect();
    let mut chol: Vec<Vec<f64>> = vec![Vec::with_capacity(k); n];
    let mut taken = vec![false; n];
    let mut out = GreedySelection {
        indices: Vec::with_capacity(k),
        gains: Vec::with_capacity(k),
    };

    while out.indices.len() < k {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !taken[i] && best.is_none_or(|b| d2[i] > d2[b]) {
                best = Some(i);
            }
        }
        let Some(j) = best else { break };
        if d2[j] <= floor[j] {
            break;
        }
        taken[j] = true;
        out.indices.push(j);
        out.gains.push(d2[j].ln());
        let dj = d2[j].sqrt();
        let cj = chol[j].clone();
        let row = kernel.row(j);
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let dot: f64 = cj.iter().zip(&chol[i]).map(|(a, b)| a * b).sum();
            let e = (row[i] - dot) / dj;
            chol[i].push(e);
            d2[i] -= e * e;
        }
    }
    Ok(out)
}

pub fn kdpp_map_greedy(kernel: &SimilarityKernel, k: usize, gain_floor: f64) -> Result<Vec<usize>> {
    greedy_map(kernel, k, gain_floor).map(|s| s.indices)
}

fn select_pool(
    pool: &[AdAsset],
    embedder: &dyn Embedder,
    budget: usize,
    gain_floor: f64,
) -> Result<Vec<AdAsset>> {
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let embs = pool
        .iter()
        .map(|a| embedder.embed(&a.text))
        .collect::<Result<Vec<_>>>()?;
    let kernel = build_kernel(&embs, DEFAULT_JITTER)?;
    let picks = kdpp_map_greedy(&kernel, budget.min(pool.len()), gain_floor)?;
    Ok(picks.into_iter().map(|i| pool[i].clone()).collect())
}

/// Diverse subsets of at most `titles` titles and `descriptions` descriptions, in selection order.
pub fn select_assets(
    entry: &CatalogEntry,
    embedder: &dyn Embedder,
    titles: usize,
    descriptions: usize,
    gain_floor: f64,
) -> Result<CatalogEntry> {
    if titles == 0 || descriptions == 0 {
        return Err(Error::invalid("selection budgets must be positive"));
    }
    Ok(CatalogEntry {
        titles: select_pool(&entry.titles, embedder, titles, gain_floor)?,
        descriptions: select_pool(&entry.descriptions, embedder, descriptions, gain_floor)?,
    })
}

/// Runs [`select_assets`] on every url of the catalog.
pub fn select_catalog(
    catalog: &AssetCatalog,
    embedder: &dyn Embedder,
    titles: usize,
    descriptions: usize,
    gain_floor: f64,
) -> Result<AssetCatalog> {
    let mut out = AssetCatalog::new();
    for (url, entry) in &catalog.entries {
        let picked = select_assets(entry, embedder, titles, descriptions, gain_floor)?;
        *out.ensure_url(url) = picked;
    }
    Ok(out)
}
