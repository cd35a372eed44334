//! Synthetic serving worlds: pages, asset pools, queries and hidden win/click oracles.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stitch::features::{emit_features, Family};
use crate::stitch::logistic;
use crate::text::tokenize;
use crate::types::{
    AdAsset, AssetCatalog, AssetKind, AssetSource, LandingPage, Objective, Position, Query,
    StitchedAd,
};

/// Feature salts of the oracles; distinct from every ranking salt.
pub const WIN_SALT: u64 = 0x0c1e_0001;
pub const CLICK_SALT: u64 = 0x0c1e_0002;

/// Per-family standard deviations of the hidden oracle weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyScales {
    pub whole: f64,
    pub length: f64,
    pub unigram: f64,
    pub bigram: f64,
    pub unigram_cross: f64,
    pub bigram_cross: f64,
}

impl Default for FamilyScales {
    fn default() -> Self {
        FamilyScales {
            whole: 0.6,
            length: 0.1,
            unigram: 0.3,
            bigram: 0.2,
            unigram_cross: 0.3,
            bigram_cross: 0.2,
        }
    }
}

impl FamilyScales {
    pub fn of(&self, f: Family) -> f64 {
        match f {
            Family::Whole => self.whole,
            Family::Length => self.length,
            Family::Unigram => self.unigram,
            Family::Bigram => self.bigram,
            Family::UnigramCross => self.unigram_cross,
            Family::BigramCross => self.bigram_cross,
        }
    }
}

/// The world file. Every field has a default, so a file may set only a few.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    pub hash_bits: u32,
    pub pages: usize,
    pub titles_per_page: usize,
    pub descriptions_per_page: usize,
    /// Queries in total, assigned to pages round-robin.
    pub queries: usize,
    pub vocab_per_page: usize,
    pub max_query_tokens: usize,
    /// Share of oracle features with a non-zero weight.
    pub oracle_density: f64,
    pub win_scales: FamilyScales,
    pub click_scales: FamilyScales,
    /// Multiplier of each slot's oracle contribution, in T1..D2 order.
    pub position_weights: [f64; 5],
    pub win_bias: f64,
    pub win_scale: f64,
    pub click_bias: f64,
    pub revenue_per_click: f64,
    pub quick_back_base: f64,
    /// Added quick-back probability when the ad shows an unfactual asset.
    pub quick_back_bias: f64,
    pub unfactual_fraction: f64,
    pub force_win: Option<f64>,
    pub force_click: Option<f64>,
    /// Std of a hidden per-asset logit offset outside the feature space; 0 keeps the oracle realizable.
    pub misspecified: f64,
    pub objective: Objective,
    pub shard_size: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 0,
            hash_bits: 18,
            pages: 5,
            titles_per_page: 6,
            descriptions_per_page: 4,
            queries: 20,
            vocab_per_page: 14,
            max_query_tokens: 2,
            oracle_density: 1.0,
            win_scales: FamilyScales::default(),
            click_scales: FamilyScales::default(),
            position_weights: [1.0, 0.7, 0.5, 0.8, 0.5],
            win_bias: 0.5,
            win_scale: 0.9,
            click_bias: -1.5,
            revenue_per_click: 0.5,
            quick_back_base: 0.05,
            quick_back_bias: 0.25,
            unfactual_fraction: 0.0,
            force_win: None,
            force_click: None,
            misspecified: 0.0,
            objective: Objective::Win,
            shard_size: 100,
        }
    }
}

impl WorldSpec {
    /// Every ad is shown and the ranker learns clicks: 5 pages, 50 assets, 20 queries.
    pub fn click_bandit(seed: u64) -> Self {
        WorldSpec {
            seed,
            force_win: Some(1.0),
            objective: Objective::Click,
            ..WorldSpec::default()
        }
    }

    /// Clicks depend mostly on how asset words meet query words, so one
    /// query-blind ad per page leaves money on the table.
    pub fn query_driven(seed: u64) -> Self {
        WorldSpec {
            seed,
            objective: Objective::Click,
            win_scales: FamilyScales {
                whole: 0.2,
                length: 0.05,
                unigram: 0.1,
                bigram: 0.05,
                unigram_cross: 0.3,
                bigram_cross: 0.2,
            },
            click_scales: FamilyScales {
                whole: 0.3,
                length: 0.05,
                unigram: 0.2,
                bigram: 0.1,
                unigram_cross: 0.8,
                bigram_cross: 0.4,
            },
            ..WorldSpec::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        let checks = [
            (
                (16..=30).contains(&self.hash_bits),
                "hash_bits must be in [16, 30]",
            ),
            (self.queries >= 1, "queries must be positive"),
            (
                self.win_scale > 0.0 && self.win_scale <= 1.0,
                "win_scale must be in (0, 1]",
            ),
            (
                self.revenue_per_click > 0.0,
                "revenue_per_click must be positive",
            ),
            (
                prob(self.oracle_density),
                "oracle_density must be in [0, 1]",
            ),
            (
                prob(self.quick_back_base),
                "quick_back_base must be in [0, 1]",
            ),
            (
                prob(self.unfactual_fraction),
                "unfactual_fraction must be in [0, 1]",
            ),
            (
                self.force_win.is_none_or(prob),
                "force_win must be in [0, 1]",
            ),
            (
                self.force_click.is_none_or(prob),
                "force_click must be in [0, 1]",
            ),
            (
                self.misspecified >= 0.0,
                "misspecified must be non-negative",
            ),
            (self.shard_size >= 1, "shard_size must be positive"),
        ];
        let bad: Vec<&str> = checks
            .iter()
            .filter(|(ok, _)| !ok)
            .map(|(_, m)| *m)
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// One (page, query) pair the query generator can produce.
#[derive(Debug, Clone)]
pub struct Context {
    pub page_url: String,
    pub query: Query,
    /// Oracle contribution of each pooled asset id before position weighting: (win, click).
    pub(crate) contrib: HashMap<String, (f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub pages: Vec<LandingPage>,
    pub catalog: AssetCatalog,
    pub contexts: Vec<Context>,
    pub oracle_theta: Vec<f32>,
    pub unfactual: HashSet<String>,
}

/// Expected outcome of showing one ad in one context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdOdds {
    pub win: f64,
    pub click: f64,
    pub quick_back: f64,
}

impl AdOdds {
    /// Probability that an SRPV with this ad produces a click.
    pub fn clicks(&self) -> f64 {
        self.win * self.click
    }
}

const WORD_PARTS: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "ze", "po", "da", "fe", "gu", "ha", "ji", "ko",
    "lu", "ma", "ni", "or", "pe", "qu", "ri", "su",
];

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    (0..n).map(|_| *WORD_PARTS.choose(rng).unwrap()).collect()
}

fn phrase(rng: &mut ChaCha8Rng, vocab: &[String], len: usize) -> String {
    let mut words: Vec<&String> = vocab.choose_multiple(rng, len).collect();
    words.shuffle(rng);
    let mut s = words
        .iter()
        .map(|w| w.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s
}

impl World {
    /// A fully synthetic world drawn from `spec.seed`.
    pub fn synthetic(spec: WorldSpec) -> Result<World> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut pages = Vec::new();
        let mut catalog = AssetCatalog::new();
        let mut vocabs = Vec::new();
        for p in 0..spec.pages {
            let mut vocab: Vec<String> = Vec::new();
            while vocab.len() < spec.vocab_per_page.max(4) {
                let w = word(&mut rng);
                if !vocab.contains(&w) {
                    vocab.push(w);
                }
            }
            let url = format!("https://www.site{p}.example.com/offers");
            let mut titles: Vec<String> = Vec::new();
            while titles.len() < spec.titles_per_page {
                let len = rng.random_range(2..=4);
                let t = phrase(&mut rng, &vocab, len);
                if !titles.contains(&t) {
                    titles.push(t);
                }
            }
            let mut descs: Vec<String> = Vec::new();
            while descs.len() < spec.descriptions_per_page {
                let len = rng.random_range(5..=8);
                let d = phrase(&mut rng, &vocab, len) + ".";
                if !descs.contains(&d) {
                    descs.push(d);
                }
            }
            for (i, t) in titles.iter().enumerate() {
                catalog.insert(AdAsset::new(
                    &url,
                    AssetKind::Title,
                    AssetSource::Generated,
                    i,
                    t,
                ));
            }
            for (i, d) in descs.iter().enumerate() {
                catalog.insert(AdAsset::new(
                    &url,
                    AssetKind::Description,
                    AssetSource::Generated,
                    i,
                    d,
                ));
            }
            pages.push(LandingPage::assemble(
                &url,
                &titles[0],
                titles.clone(),
                descs.clone(),
                &vocab.join(" "),
            )?);
            vocabs.push(vocab);
        }
        catalog.canonicalize();
        let queries = (0..spec.queries)
            .map(|i| {
                let p = i % spec.pages.max(1);
                let len = rng.random_range(1..=spec.max_query_tokens.max(1));
                (
                    pages[p].url.clone(),
                    phrase(&mut rng, &vocabs[p], len).to_lowercase(),
                )
            })
            .collect();
        World::build(spec, pages, catalog, queries, &mut rng)
    }

    /// A world over an existing catalog; queries are drawn from each page's own words.
    pub fn from_catalog(
        spec: WorldSpec,
        pages: Vec<LandingPage>,
        catalog: AssetCatalog,
    ) -> Result<World> {
        spec.validate()?;
        if catalog.is_empty() {
            return Err(Error::invalid("simulation needs a non-empty catalog"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let urls: Vec<&String> = catalog.entries.keys().collect();
        let mut queries = Vec::new();
        for i in 0..spec.queries {
            let url = urls[i % urls.len()];
            let mut words: Vec<String> = pages
                .iter()
                .find(|p| &p.url == url)
                .map(|p| tokenize(&p.full_text))
                .unwrap_or_else(|| {
                    catalog.entries[url]
                        .assets()
                        .flat_map(|a| tokenize(&a.text))
                        .collect()
                });
            words.sort();
            words.dedup();
            let len = rng
                .random_range(1..=spec.max_query_tokens.max(1))
                .min(words.len());
            let q: Vec<String> = words.choose_multiple(&mut rng, len).cloned().collect();
            queries.push((url.to_string(), q.join(" ")));
        }
        World::build(spec, pages, catalog, queries, &mut rng)
    }

    fn build(
        spec: WorldSpec,
        pages: Vec<LandingPage>,
        catalog: AssetCatalog,
        queries: Vec<(String, String)>,
        rng: &mut ChaCha8Rng,
    ) -> Result<World> {
        let dim = 1usize << spec.hash_bits;
        let mut theta = vec![0.0f32; dim];
        let mut assigned = vec![false; dim];
        let mut hidden: HashMap<String, (f64, f64)> = HashMap::new();
        let mut contexts = Vec::with_capacity(queries.len());
        let empty = Default::default();
        for (url, raw) in queries {
            let query = Query::new(&raw);
            let entry = catalog.get(&url).unwrap_or(&empty);
            let mut contrib = HashMap::new();
            for asset in entry.assets() {
                let mut parts = [0.0f64; 2];
                for (k, (salt, scales)) in [
                    (WIN_SALT, &spec.win_scales),
                    (CLICK_SALT, &spec.click_scales),
                ]
                .into_iter()
                .enumerate()
                {
                    emit_features(&asset.text, &query, salt, spec.hash_bits, |family, id| {
                        let i = id as usize;
                        if !assigned[i] {
                            assigned[i] = true;
                            if rng.random_bool(spec.oracle_density) {
                                let z: f64 = rng.sample(StandardNormal);
                                theta[i] = (scales.of(family) * z) as f32;
                            }
                        }
                        parts[k] += theta[i] as f64;
                    });
                }
                let h = *hidden.entry(asset.id.clone()).or_insert_with(|| {
                    if spec.misspecified > 0.0 {
                        let a: f64 = rng.sample(StandardNormal);
                        let b: f64 = rng.sample(StandardNormal);
                        (spec.misspecified * a, spec.misspecified * b)
                    } else {
                        (0.0, 0.0)
                    }
                });
                contrib.insert(asset.id.clone(), (parts[0] + h.0, parts[1] + h.1));
            }
            contexts.push(Context {
                page_url: url,
                query,
                contrib,
            });
        }
        let mut ids: Vec<&String> = catalog.assets().map(|a| &a.id).collect();
        ids.sort();
        let unfactual = ids
            .into_iter()
            .filter(|_| rng.random_bool(spec.unfactual_fraction))
            .cloned()
            .collect();
        Ok(World {
            spec,
            pages,
            catalog,
            contexts,
            oracle_theta: theta,
            unfactual,
        })
    }

    /// Oracle probabilities for `ad` shown in context `ctx`.
    pub fn odds(&self, ctx: usize, ad: &StitchedAd) -> AdOdds {
        let c = &self.contexts[ctx];
        let (mut win, mut click) = (self.spec.win_bias, self.spec.click_bias);
        let mut flagged = false;
        for (pos, asset) in ad.filled() {
            let w = self.spec.position_weights[pos.index()];
            let (uw, uc) = c.contrib.get(&asset.id).copied().unwrap_or((0.0, 0.0));
            win += w * uw;
            click += w * uc;
            flagged |= self.unfactual.contains(&asset.id);
        }
        let qb = self.spec.quick_back_base
            + if flagged {
                self.spec.quick_back_bias
            } else {
                0.0
            };
        AdOdds {
            win: self
                .spec
                .force_win
                .unwrap_or_else(|| self.spec.win_scale * logistic(win)),
            click: self.spec.force_click.unwrap_or_else(|| logistic(click)),
            quick_back: qb.clamp(0.0, 1.0),
        }
    }

    /// The ad with the highest expected clicks per SRPV in context `ctx`, by exhaustive search.
    pub fn best_ad(&self, ctx: usize) -> Option<(StitchedAd, AdOdds)> {
        let entry = self.catalog.get(&self.contexts[ctx].page_url)?;
        if entry.titles.is_empty() || entry.descriptions.is_empty() {
            return None;
        }
        let t_orders = arrangements(entry.titles.len(), 3);
        let d_orders = arrangements(entry.descriptions.len(), 2);
        let mut best: Option<(StitchedAd, AdOdds)> = None;
        for t in &t_orders {
            for d in &d_orders {
                let mut ad = StitchedAd::default();
                for (slot, &i) in [Position::T1, Position::T2, Position::T3].iter().zip(t) {
                    *ad.slot_mut(*slot) = Some(entry.titles[i].clone());
                }
                for (slot, &i) in [Position::D1, Position::D2].iter().zip(d) {
                    *ad.slot_mut(*slot) = Some(entry.descriptions[i].clone());
                }
                let odds = self.odds(ctx, &ad);
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| odds.clicks() > b.clicks())
                {
                    best = Some((ad, odds));
                }
            }
        }
        best
    }
}

/// All ordered selections of `min(k, n)` distinct indices out of `n`.
fn arrangements(n: usize, k: usize) -> Vec<Vec<usize>> {
    let k = k.min(n);
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                rec(n, k, cur, out);
                cur.pop();
            }
        }
    }
    rec(n, k, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_world_shape() {
        let w = World::synthetic(WorldSpec::default()).unwrap();
        assert_eq!(w.pages.len(), 5);
        assert_eq!(w.catalog.assets().count(), 50);
        assert_eq!(w.contexts.len(), 20);
        assert!(w.catalog.violations().is_empty());
        for p in &w.pages {
            assert!(p.violations().is_empty(), "{:?}", p.violations());
        }
        let cfg = crate::types::SystemConfig::default();
        for a in w.catalog.assets() {
            assert!(crate::types::validate_asset(a, &cfg).is_ok(), "{}", a.text);
        }
    }

    #[test]
    fn same_seed_same_world() {
        let a = World::synthetic(WorldSpec::default()).unwrap();
        let b = World::synthetic(WorldSpec::default()).unwrap();
        assert_eq!(a.oracle_theta, b.oracle_theta);
        assert_eq!(a.catalog, b.catalog);
        let c = World::synthetic(WorldSpec {
            seed: 1,
            ..WorldSpec::default()
        })
        .unwrap();
        assert_ne!(a.catalog, c.catalog);
    }

    #[test]
    fn arrangement_counts() {
        assert_eq!(arrangements(6, 3).len(), 120);
        assert_eq!(arrangements(4, 2).len(), 12);
        assert_eq!(arrangements(1, 3), vec![vec![0]]);
    }

    #[test]
    fn best_ad_dominates_samples() {
        let w = World::synthetic(WorldSpec::default()).unwrap();
        let (best, odds) = w.best_ad(0).unwrap();
        assert!(best.violations().is_empty());
        let entry = w.catalog.get(&w.contexts[0].page_url).unwrap();
        let other = StitchedAd {
            title1: Some(entry.titles[0].clone()),
            desc1: Some(entry.descriptions[0].clone()),
            ..StitchedAd::default()
        };
        assert!(w.odds(0, &other).clicks() <= odds.clicks());
    }

    #[test]
    fn forced_odds() {
        let spec = WorldSpec {
            force_win: Some(1.0),
            force_click: Some(0.0),
            ..WorldSpec::default()
        };
        let w = World::synthetic(spec).unwrap();
        let (ad, _) = w.best_ad(3).unwrap();
        let o = w.odds(3, &ad);
        assert_eq!((o.win, o.click), (1.0, 0.0));
    }

    #[test]
    fn spec_parses_from_toml() {
        let s: WorldSpec =
            toml::from_str("seed = 9\nqueries = 4\nforce_win = 1.0\n[click_scales]\nwhole = 2.0\n")
                .unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.force_win, Some(1.0));
        assert_eq!(s.click_scales.whole, 2.0);
        assert_eq!(s.click_scales.length, FamilyScales::default().length);
        assert!(WorldSpec {
            win_scale: 0.0,
            ..s
        }
        .validate()
        .is_err());
    }
}
