//! Domain types shared across the pipeline.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{char_len, fold, normalize, tokenize};

/// An advertiser landing page, already parsed into its text fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingPage {
    pub url: String,
    pub domain: String,
    pub page_title: String,
    #[serde(default)]
    pub visual_headings: Vec<String>,
    #[serde(default)]
    pub body_snippets: Vec<String>,
    pub full_text: String,
}

impl LandingPage {
    /// Builds a page whose `full_text` is the concatenation of all fields plus
    /// `extra_text`, and whose `domain` is the URL host without a `www.` prefix.
    pub fn assemble(
        url: &str,
        page_title: &str,
        visual_headings: Vec<String>,
        body_snippets: Vec<String>,
        extra_text: &str,
    ) -> Result<Self> {
        let host = url_host(url)?;
        let domain = host.strip_prefix("www.").unwrap_or(&host).to_string();
        let mut parts = vec![page_title.to_string()];
        parts.extend(visual_headings.iter().cloned());
        parts.extend(body_snippets.iter().cloned());
        parts.push(extra_text.to_string());
        let full_text = normalize(&parts.join(" \n "));
        Ok(LandingPage {
            url: url.to_string(),
            domain,
            page_title: normalize(page_title),
            visual_headings: visual_headings.iter().map(|h| normalize(h)).collect(),
            body_snippets: body_snippets.iter().map(|s| normalize(s)).collect(),
            full_text,
        })
    }

    /// Returns every invariant the page breaks; empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match url_host(&self.url) {
            Err(e) => out.push(e.to_string()),
            Ok(host) => {
                let domain = self.domain.to_lowercase();
                if domain.is_empty() || domain != self.domain {
                    out.push(format!(
                        "domain `{}` must be non-empty lowercase",
                        self.domain
                    ));
                } else if !(host == domain || host.ends_with(&format!(".{domain}"))) {
                    out.push(format!(
                        "domain `{domain}` is not a suffix of host `{host}`"
                    ));
                }
            }
        }
        let body = fold(&self.full_text);
        let fields = std::iter::once(&self.page_title)
            .chain(&self.visual_headings)
            .chain(&self.body_snippets);
        for field in fields {
            let f = fold(field);
            if !f.is_empty() && !body.contains(&f) {
                out.push(format!("full_text does not contain `{field}`"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "page {}: {}",
                self.url,
                v.join("; ")
            )))
        }
    }
}

/// Lowercase host of an absolute URL.
pub fn url_host(url: &str) -> Result<String> {
    let parsed = url::Url::parse(url).map_err(|e| Error::invalid(format!("url `{url}`: {e}")))?;
    parsed
        .host_str()
        .map(|h| h.to_lowercase())
        .ok_or_else(|| Error::invalid(format!("url `{url}` has no host")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    Title,
    Description,
}

impl AssetKind {
    pub(crate) fn tag(self) -> char {
        match self {
            AssetKind::Title => 't',
            AssetKind::Description => 'd',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetSource {
    Advertiser,
    Extraction,
    Generated,
    Guided,
}

impl AssetSource {
    pub(crate) fn tag(self) -> char {
        match self {
            AssetSource::Advertiser => 'a',
            AssetSource::Extraction => 'x',
            AssetSource::Generated => 'g',
            AssetSource::Guided => 'c',
        }
    }
}

/// Selling-point category carried as metadata. Three are named; the other nine
/// are slots whose display labels come from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ProductOrService,
    AdvertiserNameOrBrand,
    Location,
    Custom1,
    Custom2,
    Custom3,
    Custom4,
    Custom5,
    Custom6,
    Custom7,
    Custom8,
    Custom9,
}

impl Category {
    pub const ALL: [Category; 12] = [
        Category::ProductOrService,
        Category::AdvertiserNameOrBrand,
        Category::Location,
        Category::Custom1,
        Category::Custom2,
        Category::Custom3,
        Category::Custom4,
        Category::Custom5,
        Category::Custom6,
        Category::Custom7,
        Category::Custom8,
        Category::Custom9,
    ];

    /// Display label; custom slots read from `labels` (index 0 is `Custom1`).
    pub fn label(self, labels: &CategoryLabels) -> &str {
        match self {
            Category::ProductOrService => "Product or Service",
            Category::AdvertiserNameOrBrand => "Advertiser Name or Brand",
            Category::Location => "Location",
            other => {
                let slot = Category::ALL.iter().position(|c| *c == other).unwrap() - 3;
                &labels.0[slot]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryLabels(pub [String; 9]);

impl Default for CategoryLabels {
    fn default() -> Self {
        CategoryLabels(std::array::from_fn(|i| format!("custom_{}", i + 1)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdAsset {
    pub id: String,
    pub page_url: String,
    pub kind: AssetKind,
    pub text: String,
    pub source: AssetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

impl AdAsset {
    /// Creates an asset with a deterministic id derived from its url, kind,
    /// source, position in its origin list and text.
    pub fn new(
        page_url: &str,
        kind: AssetKind,
        source: AssetSource,
        index: usize,
        text: &str,
    ) -> Self {
        let text = normalize(text);
        AdAsset {
            id: asset_id(page_url, kind, source, index, &text),
            page_url: page_url.to_string(),
            kind,
            text,
            source,
            category: None,
        }
    }
}

pub fn asset_id(
    page_url: &str,
    kind: AssetKind,
    source: AssetSource,
    index: usize,
    text: &str,
) -> String {
    use xxhash_rust::xxh3::xxh3_64;
    format!(
        "{:016x}-{}{}{}-{:08x}",
        xxh3_64(page_url.as_bytes()),
        source.tag(),
        kind.tag(),
        index,
        xxh3_64(text.as_bytes()) as u32
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssetViolation {
    EmptyText,
    EmptyId,
    TitleTooLong { len: usize, max: usize },
    DescriptionTooLong { len: usize, max: usize },
}

impl fmt::Display for AssetViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssetViolation::EmptyText => write!(f, "empty text"),
            AssetViolation::EmptyId => write!(f, "empty id"),
            AssetViolation::TitleTooLong { len, max } => {
                write!(f, "title too long ({len} > {max})")
            }
            AssetViolation::DescriptionTooLong { len, max } => {
                write!(f, "description too long ({len} > {max})")
            }
        }
    }
}

/// Checks an asset against the length and non-emptiness rules.
pub fn validate_asset(asset: &AdAsset, config: &SystemConfig) -> Result<(), Vec<AssetViolation>> {
    let mut v = Vec::new();
    if asset.id.is_empty() {
        v.push(AssetViolation::EmptyId);
    }
    let text = normalize(&asset.text);
    let len = char_len(&text);
    if text.is_empty() {
        v.push(AssetViolation::EmptyText);
    }
    match asset.kind {
        AssetKind::Title if len > config.max_title_chars => v.push(AssetViolation::TitleTooLong {
            len,
            max: config.max_title_chars,
        }),
        AssetKind::Description if len > config.max_desc_chars => {
            v.push(AssetViolation::DescriptionTooLong {
                len,
                max: config.max_desc_chars,
            })
        }
        _ => {}
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Title and description pools of one landing page.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub titles: Vec<AdAsset>,
    pub descriptions: Vec<AdAsset>,
}

impl CatalogEntry {
    pub fn len(&self) -> usize {
        self.titles.len() + self.descriptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pool(&self, kind: AssetKind) -> &[AdAsset] {
        match kind {
            AssetKind::Title => &self.titles,
            AssetKind::Description => &self.descriptions,
        }
    }

    pub fn assets(&self) -> impl Iterator<Item = &AdAsset> {
        self.titles.iter().chain(&self.descriptions)
    }
}

/// Assets grouped by landing page url. Iteration order is url order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssetCatalog {
    pub entries: BTreeMap<String, CatalogEntry>,
}

impl AssetCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an (possibly empty) entry for a url.
    pub fn ensure_url(&mut self, url: &str) -> &mut CatalogEntry {
        self.entries.entry(url.to_string()).or_default()
    }

    pub fn insert(&mut self, asset: AdAsset) {
        let entry = self.entries.entry(asset.page_url.clone()).or_default();
        match asset.kind {
            AssetKind::Title => entry.titles.push(asset),
            AssetKind::Description => entry.descriptions.push(asset),
        }
    }

    pub fn get(&self, url: &str) -> Option<&CatalogEntry> {
        self.entries.get(url)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(CatalogEntry::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn assets(&self) -> impl Iterator<Item = &AdAsset> {
        self.entries.values().flat_map(CatalogEntry::assets)
    }

    /// Sorts every pool by asset id so content is independent of insertion order.
    pub fn canonicalize(&mut self) {
        for entry in self.entries.values_mut() {
            entry.titles.sort_by(|a, b| a.id.cmp(&b.id));
            entry.descriptions.sort_by(|a, b| a.id.cmp(&b.id));
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for (url, entry) in &self.entries {
            for (kind, pool) in [
                (AssetKind::Title, &entry.titles),
                (AssetKind::Description, &entry.descriptions),
            ] {
                for a in pool {
                    if &a.page_url != url {
                        out.push(format!(
                            "asset {} filed under {url} but points at {}",
                            a.id, a.page_url
                        ));
                    }
                    if a.kind != kind {
                        out.push(format!(
                            "asset {} of kind {:?} in {:?} pool",
                            a.id, a.kind, kind
                        ));
                    }
                    if !seen.insert(a.id.as_str()) {
                        out.push(format!("duplicate asset id {}", a.id));
                    }
                }
            }
        }
        out
    }
}

/// The five display slots, in fill order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Position {
    T1,
    T2,
    T3,
    D1,
    D2,
}

impl Position {
    pub const ALL: [Position; 5] = [
        Position::T1,
        Position::T2,
        Position::T3,
        Position::D1,
        Position::D2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn kind(self) -> AssetKind {
        match self {
            Position::T1 | Position::T2 | Position::T3 => AssetKind::Title,
            Position::D1 | Position::D2 => AssetKind::Description,
        }
    }

    pub fn from_index(i: usize) -> Option<Position> {
        Position::ALL.get(i).copied()
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A composed ad copy. `title1` and `desc1` are always filled for a servable ad.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StitchedAd {
    pub title1: Option<AdAsset>,
    pub title2: Option<AdAsset>,
    pub title3: Option<AdAsset>,
    pub desc1: Option<AdAsset>,
    pub desc2: Option<AdAsset>,
}

impl StitchedAd {
    pub fn slot(&self, pos: Position) -> Option<&AdAsset> {
        match pos {
            Position::T1 => self.title1.as_ref(),
            Position::T2 => self.title2.as_ref(),
            Position::T3 => self.title3.as_ref(),
            Position::D1 => self.desc1.as_ref(),
            Position::D2 => self.desc2.as_ref(),
        }
    }

    pub fn slot_mut(&mut self, pos: Position) -> &mut Option<AdAsset> {
        match pos {
            Position::T1 => &mut self.title1,
            Position::T2 => &mut self.title2,
            Position::T3 => &mut self.title3,
            Position::D1 => &mut self.desc1,
            Position::D2 => &mut self.desc2,
        }
    }

    /// Filled slots in position order.
    pub fn filled(&self) -> impl Iterator<Item = (Position, &AdAsset)> {
        Position::ALL
            .into_iter()
            .filter_map(|p| self.slot(p).map(|a| (p, a)))
    }

    /// Asset ids per slot, the identity of the ad independent of texts.
    pub fn slot_ids(&self) -> [Option<&str>; 5] {
        Position::ALL.map(|p| self.slot(p).map(|a| a.id.as_str()))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.title1.is_none() {
            out.push("title1 missing".to_string());
        }
        if self.desc1.is_none() {
            out.push("desc1 missing".to_string());
        }
        let mut seen = HashSet::new();
        for (pos, a) in self.filled() {
            if a.kind != pos.kind() {
                out.push(format!("{pos} holds a {:?} asset", a.kind));
            }
            if !seen.insert(&a.id) {
                out.push(format!("asset {} appears twice", a.id));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Query {
    pub fn new(raw: &str) -> Self {
        Query {
            raw: raw.to_string(),
            tokens: tokenize(&normalize(raw)),
        }
    }

    pub fn empty() -> Self {
        Query::new("")
    }
}

/// What the per-position models are trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Probability that the ad wins the auction (is shown).
    #[default]
    Win,
    /// Probability that a shown ad is clicked.
    Click,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Titles kept per url after diverse selection.
    pub title_budget: usize,
    /// Descriptions kept per url after diverse selection.
    pub desc_budget: usize,
    pub max_title_chars: usize,
    pub max_desc_chars: usize,
    pub hash_bits: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Residual floor below which diverse selection stops early.
    pub dpp_epsilon: f64,
    pub rng_seed: u64,
    /// Multiplier turning averaged gradient mass into a Thompson pseudo-count.
    pub trial_scale: f64,
    pub objective: Objective,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            title_budget: 10,
            desc_budget: 10,
            max_title_chars: 30,
            max_desc_chars: 90,
            hash_bits: 22,
            learning_rate: 0.02,
            batch_size: 1000,
            dpp_epsilon: 1e-9,
            rng_seed: 0,
            trial_scale: 4.0,
            objective: Objective::Win,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.title_budget == 0 {
            bad.push("title_budget must be positive");
        }
        if self.desc_budget == 0 {
            bad.push("desc_budget must be positive");
        }
        if self.max_title_chars == 0 || self.max_desc_chars == 0 {
            bad.push("character limits must be positive");
        }
        if !(16..=30).contains(&self.hash_bits) {
            bad.push("hash_bits must be in [16, 30]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bad.push("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be positive");
        }
        if !(self.dpp_epsilon > 0.0) {
            bad.push("dpp_epsilon must be positive");
        }
        if !(self.trial_scale >= 0.0 && self.trial_scale.is_finite()) {
            bad.push("trial_scale must be non-negative");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Budgets large enough to fill all five slots.
    pub fn validate_full_stitch(&self) -> Result<()> {
        self.validate()?;
        if self.title_budget < 3 || self.desc_budget < 2 {
            return Err(Error::Config(
                "filling all five positions needs title_budget >= 3 and desc_budget >= 2".into(),
            ));
        }
        Ok(())
    }
}
