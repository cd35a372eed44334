//! N-gram diversity metrics over a set of texts: PairwiseBLEU, SelfBLEU and
//! Distinct-N, each reported per n-gram order and averaged over orders 1..=4.
//!
//! Sentence BLEU here uses clipped modified precision, an unsmoothed unigram
//! term, add-one smoothing on numerator and denominator for orders >= 2, and
//! the brevity penalty against the closest reference length (shorter one on
//! ties). Scores are on a 0..100 scale except [`sentence_bleu`], which is 0..1.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const MAX_ORDER: usize = 4;

/// All contiguous `n`-token windows with multiplicity.
pub fn ngram_multiset<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    assert!(n >= 1, "n-gram order must be positive");
    let mut out = HashMap::new();
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Clipped match counts and totals for one candidate against its references.
#[derive(Debug, Clone)]
struct BleuStats {
    matches: Vec<usize>,
    totals: Vec<usize>,
    cand_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn score(&self, max_n: usize) -> f64 {
        if self.matches[0] == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for k in 0..max_n {
            let p = if k == 0 {
                self.matches[0] as f64 / self.totals[0] as f64
            } else {
                (self.matches[k] + 1) as f64 / (self.totals[k] + 1) as f64
            };
            log_sum += p.ln();
        }
        let bp = if self.cand_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        } else {
            1.0
        };
        bp * (log_sum / max_n as f64).exp()
    }
}

fn closest_ref_len(cand_len: usize, ref_lens: impl Iterator<Item = usize>) -> usize {
    ref_lens
        .min_by_key(|&r| (r.abs_diff(cand_len), r))
        .expect("at least one reference")
}

/// Sentence BLEU in [0, 1] with the smoothing described in the module docs.
pub fn sentence_bleu<T: Eq + Hash>(
    candidate: &[T],
    references: &[&[T]],
    max_n: usize,
) -> Result<f64> {
    if candidate.is_empty() {
        return Err(Error::invalid("BLEU candidate is empty"));
    }
    if max_n == 0 {
        return Err(Error::invalid("BLEU max order must be positive"));
    }
    let refs: Vec<&[T]> = references
        .iter()
        .copied()
        .filter(|r| !r.is_empty())
        .collect();
    if refs.is_empty() {
        return Err(Error::invalid(
            "BLEU needs at least one non-empty reference",
        ));
    }
    let mut matches = vec![0; max_n];
    let mut totals = vec![0; max_n];
    for n in 1..=max_n {
        let cand = ngram_multiset(candidate, n);
        let ref_counts: Vec<_> = refs.iter().map(|r| ngram_multiset(r, n)).collect();
        for (g, &c) in &cand {
            let max_ref = ref_counts
                .iter()
                .map(|rc| rc.get(g).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            matches[n - 1] += c.min(max_ref);
            totals[n - 1] += c;
        }
    }
    let stats = BleuStats {
        matches,
        totals,
        cand_len: candidate.len(),
        ref_len: closest_ref_len(candidate.len(), refs.iter().map(|r| r.len())),
    };
    Ok(stats.score(max_n))
}

/// Texts interned to integer ids with n-gram counts precomputed for every order.
pub struct TokenCorpus {
    ids: Vec<Vec<u32>>,
    max_order: usize,
}

impl TokenCorpus {
    pub fn new<S: AsRef<str>>(texts: &[Vec<S>], max_order: usize) -> Self {
        let mut vocab: HashMap<&str, u32> = HashMap::new();
        let ids = texts
            .iter()
            .map(|t| {
                t.iter()
                    .map(|tok| {
                        let next = vocab.len() as u32;
                        *vocab.entry(tok.as_ref()).or_insert(next)
                    })
                    .collect()
            })
            .collect();
        TokenCorpus { ids, max_order }
    }

    pub fn from_raw<S: AsRef<str>>(texts: &[S], max_order: usize) -> Self {
        let toks: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        TokenCorpus::new(&toks, max_order)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn counts(&self, subset: &[usize]) -> Vec<Vec<HashMap<&[u32], usize>>> {
        subset
            .iter()
            .map(|&i| {
                (1..=self.max_order)
                    .map(|n| ngram_multiset(&self.ids[i], n))
                    .collect()
            })
            .collect()
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.len() < 2 {
            return Err(Error::invalid("BLEU diversity needs at least two texts"));
        }
        if let Some(&i) = subset.iter().find(|&&i| self.ids[i].is_empty()) {
            return Err(Error::invalid(format!("text {i} has no tokens")));
        }
        Ok(())
    }

    /// Mean of 100 x BLEU over ordered pairs, for every max order 1..=max_order.
    pub fn pairwise_bleu(&self, subset: &[usize]) -> Result<Vec<f64>> {
        self.check_subset(subset)?;
        let counts = self.counts(subset);
        let mut sums = vec![0.0; self.max_order];
        let mut pairs = 0usize;
        for (a, &i) in subset.iter().enumerate() {
            for (b, &j) in subset.iter().enumerate() {
                if a == b {
                    continue;
                }
                let stats = self.stats_against(&counts[a], i, &[(&counts[b], j)]);
                for (k, s) in sums.iter_mut().enumerate() {
                    *s += 100.0 * stats.score(k + 1);
                }
                pairs += 1;
            }
        }
        Ok(sums.into_iter().map(|s| s / pairs as f64).collect())
    }

    /// Mean over texts of 100 x BLEU against all other texts as references.
    pub fn self_bleu(&self, subset: &[usize]) -> Result<Vec<f64>> {
        self.check_subset(subset)?;
        let counts = self.counts(subset);
        let mut sums = vec![0.0; self.max_order];
        for (a, &i) in subset.iter().enumerate() {
            let refs: Vec<_> = subset
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(b, &j)| (&counts[b], j))
                .collect();
            let stats = self.stats_against(&counts[a], i, &refs);
            for (k, s) in sums.iter_mut().enumerate() {
                *s += 100.0 * stats.score(k + 1);
            }
        }
        Ok(sums.into_iter().map(|s| s / subset.len() as f64).collect())
    }

    /// 100 x distinct / total pooled n-grams per order; `None` where no text
    /// is long enough to contain an n-gram of that order.
    pub fn distinct_n(&self, subset: &[usize]) -> Vec<Option<f64>> {
        (1..=self.max_order)
            .map(|n| {
                let mut pooled: HashMap<&[u32], usize> = HashMap::new();
                let mut total = 0;
                for &i in subset {
                    for w in self.ids[i].windows(n) {
                        *pooled.entry(w).or_insert(0) += 1;
                        total += 1;
                    }
                }
                (total > 0).then(|| 100.0 * pooled.len() as f64 / total as f64)
            })
            .collect()
    }

    fn stats_against(
        &self,
        cand: &[HashMap<&[u32], usize>],
        cand_idx: usize,
        refs: &[(&Vec<HashMap<&[u32], usize>>, usize)],
    ) -> BleuStats {
        let mut matches = vec![0; self.max_order];
        let mut totals = vec![0; self.max_order];
        for k in 0..self.max_order {
            for (g, &c) in &cand[k] {
                let max_ref = refs
                    .iter()
                    .map(|(rc, _)| rc[k].get(g).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                matches[k] += c.min(max_ref);
                totals[k] += c;
            }
        }
        let cand_len = self.ids[cand_idx].len();
        BleuStats {
            matches,
            totals,
            cand_len,
            ref_len: closest_ref_len(cand_len, refs.iter().map(|&(_, j)| self.ids[j].len())),
        }
    }

    /// Full report over the given subset of texts.
    pub fn report(&self, subset: &[usize]) -> Result<DiversityReport> {
        let pb = self.pairwise_bleu(subset)?;
        let sb = self.self_bleu(subset)?;
        let dist = self.distinct_n(subset);
        if dist.iter().all(Option::is_none) {
            return Err(Error::invalid("texts too short for every n-gram order"));
        }
        let per_order: BTreeMap<usize, OrderScores> = (0..self.max_order)
            .map(|k| {
                (
                    k + 1,
                    OrderScores {
                        pairwise_bleu: pb[k],
                        self_bleu: sb[k],
                        distinct_n: dist[k],
                    },
                )
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let dist_present: Vec<f64> = dist.iter().flatten().copied().collect();
        Ok(DiversityReport {
            pairwise_bleu: mean(&pb),
            self_bleu: mean(&sb),
            distinct_n: mean(&dist_present),
            per_order,
            count: subset.len(),
        })
    }

    pub fn all(&self) -> Vec<usize> {
        (0..self.ids.len()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderScores {
    pub pairwise_bleu: f64,
    pub self_bleu: f64,
    pub distinct_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub pairwise_bleu: f64,
    pub self_bleu: f64,
    pub distinct_n: f64,
    pub per_order: BTreeMap<usize, OrderScores>,
    pub count: usize,
}

/// The report as one flat record: aggregates, the twelve per-order values and the count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatDiversityRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_url: Option<String>,
    pub count: usize,
    pub pairwise_bleu: f64,
    pub self_bleu: f64,
    pub distinct_n: f64,
    pub pb_1: f64,
    pub pb_2: f64,
    pub pb_3: f64,
    pub pb_4: f64,
    pub sb_1: f64,
    pub sb_2: f64,
    pub sb_3: f64,
    pub sb_4: f64,
    pub dist_1: Option<f64>,
    pub dist_2: Option<f64>,
    pub dist_3: Option<f64>,
    pub dist_4: Option<f64>,
}

impl DiversityReport {
    pub fn flatten(&self, page_url: Option<String>) -> FlatDiversityRecord {
        let o = |n: usize| self.per_order[&n];
        FlatDiversityRecord {
            page_url,
            count: self.count,
            pairwise_bleu: self.pairwise_bleu,
            self_bleu: self.self_bleu,
            distinct_n: self.distinct_n,
            pb_1: o(1).pairwise_bleu,
            pb_2: o(2).pairwise_bleu,
            pb_3: o(3).pairwise_bleu,
            pb_4: o(4).pairwise_bleu,
            sb_1: o(1).self_bleu,
            sb_2: o(2).self_bleu,
            sb_3: o(3).self_bleu,
            sb_4: o(4).self_bleu,
            dist_1: o(1).distinct_n,
            dist_2: o(2).distinct_n,
            dist_3: o(3).distinct_n,
            dist_4: o(4).distinct_n,
        }
    }
}

/// PairwiseBLEU at a single max order.
pub fn pairwise_bleu<S: AsRef<str>>(texts: &[Vec<S>], max_n: usize) -> Result<f64> {
    let c = TokenCorpus::new(texts, max_n);
    Ok(c.pairwise_bleu(&c.all())?[max_n - 1])
}

/// SelfBLEU at a single max order.
pub fn self_bleu<S: AsRef<str>>(texts: &[Vec<S>], max_n: usize) -> Result<f64> {
    let c = TokenCorpus::new(texts, max_n);
    Ok(c.self_bleu(&c.all())?[max_n - 1])
}

/// Distinct-N at a single order.
pub fn distinct_n<S: AsRef<str>>(texts: &[Vec<S>], n: usize) -> Result<f64> {
    let c = TokenCorpus::new(texts, n);
    c.distinct_n(&c.all())[n - 1].ok_or_else(|| Error::invalid(format!("no {n}-grams in texts")))
}

/// Tokenizes raw texts and scores them at orders 1..=4.
pub fn diversity_report<S: AsRef<str>>(texts: &[S]) -> Result<DiversityReport> {
    let c = TokenCorpus::from_raw(texts, MAX_ORDER);
    c.report(&c.all())
}
