//! Human-judgment aggregation and the ship gate on the Overall Good rate.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::types::{url_host, AdAsset, AssetCatalog};

pub const DEFAULT_THRESHOLD: f64 = 0.9;
pub const DEFAULT_CONFIDENCE: f64 = 0.975;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextQuality {
    Good,
    Fair,
    Bad,
    Embarrassing,
    NotScorable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn is_yes(self) -> bool {
        self == YesNo::Yes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub asset_id: String,
    pub text_quality: TextQuality,
    pub human_like: YesNo,
    pub factual: YesNo,
    pub relevant: YesNo,
}

/// Good or Fair text quality, and yes on every other aspect.
pub fn overall_good(j: &Judgment) -> bool {
    matches!(j.text_quality, TextQuality::Good | TextQuality::Fair)
        && j.human_like.is_yes()
        && j.factual.is_yes()
        && j.relevant.is_yes()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub n: usize,
    pub overall_good: usize,
    pub rate: f64,
    /// One-sided Wilson lower bound at `confidence`.
    pub lower_bound: f64,
    /// Two-sided 95% Wilson interval, for reporting.
    pub interval_95: (f64, f64),
    pub threshold: f64,
    pub confidence: f64,
    /// Good-or-Fair share among scorable judgments.
    pub text_quality_rate: f64,
    pub human_like_rate: f64,
    pub factual_rate: f64,
    pub relevant_rate: f64,
    pub passed: bool,
}

fn z_for(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(confidence)
}

/// Wilson score bounds for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let center = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let denom = 1.0 + z2 / n;
    (
        ((center - spread) / denom).clamp(0.0, 1.0),
        ((center + spread) / denom).clamp(0.0, 1.0),
    )
}

/// One-sided Wilson lower bound at the given confidence level.
pub fn wilson_lower_bound(successes: usize, n: usize, confidence: f64) -> f64 {
    wilson_interval(successes, n, z_for(confidence)).0
}

pub fn gate(judgments: &[Judgment], threshold: f64, confidence: f64) -> Result<GateReport> {
    if judgments.is_empty() {
        return Err(Error::invalid("quality gate needs at least one judgment"));
    }
    if !(0.5..1.0).contains(&confidence) {
        return Err(Error::invalid(format!(
            "confidence {confidence} outside [0.5, 1)"
        )));
    }
    let n = judgments.len();
    let good = judgments.iter().filter(|j| overall_good(j)).count();
    let rate = good as f64 / n as f64;
    let lower_bound = wilson_lower_bound(good, n, confidence);

    let share = |count: usize, of: usize| {
        if of == 0 {
            0.0
        } else {
            count as f64 / of as f64
        }
    };
    let scorable = judgments
        .iter()
        .filter(|j| j.text_quality != TextQuality::NotScorable)
        .count();
    let tq_good = judgments
        .iter()
        .filter(|j| matches!(j.text_quality, TextQuality::Good | TextQuality::Fair))
        .count();
    let yes = |f: fn(&Judgment) -> YesNo| judgments.iter().filter(|j| f(j).is_yes()).count();

    Ok(GateReport {
        n,
        overall_good: good,
        rate,
        lower_bound,
        interval_95: wilson_interval(good, n, z_for(0.975)),
        threshold,
        confidence,
        text_quality_rate: share(tq_good, scorable),
        human_like_rate: share(yes(|j| j.human_like), n),
        factual_rate: share(yes(|j| j.factual), n),
        relevant_rate: share(yes(|j| j.relevant), n),
        passed: lower_bound >= threshold,
    })
}

#[derive(Debug, Clone)]
pub struct EvalSample {
    pub assets: Vec<AdAsset>,
    /// Fewer assets than requested were available after capping.
    pub shortfall: bool,
}

/// Landing page domain used for stratification (host without `www.`).
pub fn stratum_of(page_url: &str) -> String {
    match url_host(page_url) {
        Ok(h) => h.strip_prefix("www.").map(str::to_string).unwrap_or(h),
        Err(_) => page_url.to_string(),
    }
}

/// Caps each domain at `per_domain_cap` assets (seeded choice), then draws
/// `total` uniformly from the capped pool.
pub fn sample_for_eval(
    catalog: &AssetCatalog,
    per_domain_cap: usize,
    total: usize,
    seed: u64,
) -> EvalSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_domain: BTreeMap<String, Vec<&AdAsset>> = BTreeMap::new();
    for a in catalog.assets() {
        by_domain
            .entry(stratum_of(&a.page_url))
            .or_default()
            .push(a);
    }
    let mut pool: Vec<&AdAsset> = Vec::new();
    for assets in by_domain.values_mut() {
        assets.shuffle(&mut rng);
        pool.extend(assets.iter().take(per_domain_cap));
    }
    if pool.len() <= total {
        return EvalSample {
            shortfall: pool.len() < total,
            assets: pool.into_iter().cloned().collect(),
        };
    }
    let mut picks = index::sample(&mut rng, pool.len(), total).into_vec();
    picks.sort_unstable();
    EvalSample {
        assets: picks.into_iter().map(|i| pool[i].clone()).collect(),
        shortfall: false,
    }
}
