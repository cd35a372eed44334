//! Factuality cross-checks of assets against their landing page.
//!
//! Every check follows the same predicate: a claim found in the asset must be
//! supported by the page. Phrase claims come from a list of sensitive phrase
//! patterns, brand claims from a lexicon, and domain claims from domain-shaped
//! tokens.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{normalize, tokenize};
use crate::types::{AdAsset, AssetCatalog, LandingPage};

/// Placeholder in a phrase pattern that matches an integer or decimal literal.
pub const NUM_WILDCARD: &str = "<NUM>";

const KNOWN_TLDS: &[&str] = &[
    "ai", "app", "au", "biz", "br", "ca", "ch", "cn", "co", "com", "de", "dev", "dk", "edu", "es",
    "eu", "fi", "fr", "gov", "in", "info", "io", "it", "jp", "me", "mx", "net", "nl", "no", "nz",
    "online", "org", "pl", "ru", "se", "shop", "site", "store", "tv", "uk", "us", "xyz",
];

#[derive(Debug, Clone)]
struct PhrasePattern {
    source: String,
    regex: Regex,
}

impl PhrasePattern {
    fn compile(pattern: &str) -> Result<Self> {
        let pattern = normalize(pattern);
        if pattern.is_empty() {
            return Err(Error::invalid("empty sensitive phrase"));
        }
        let mut body = String::new();
        for (i, literal) in pattern.split(NUM_WILDCARD).enumerate() {
            if i > 0 {
                body.push_str(r"(\d+(?:[.,]\d+)?)");
            }
            let words: Vec<String> = literal.split(' ').map(regex::escape).collect();
            body.push_str(&words.join(r"\s+"));
        }
        let word_edge = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
        let lead = if pattern.starts_with(NUM_WILDCARD) || word_edge(pattern.chars().next()) {
            r"\b"
        } else {
            ""
        };
        let trail = if pattern.ends_with(NUM_WILDCARD) || word_edge(pattern.chars().last()) {
            r"\b"
        } else {
            ""
        };
        let regex = Regex::new(&format!("(?i){lead}{body}{trail}"))
            .map_err(|e| Error::invalid(format!("phrase `{pattern}`: {e}")))?;
        Ok(PhrasePattern {
            source: pattern,
            regex,
        })
    }
}

/// Cross-check configuration.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    phrases: Vec<PhrasePattern>,
    brands: BTreeSet<String>,
    // first folded token -> brands starting with it as token sequences, longest first
    brand_index: HashMap<String, Vec<(Vec<String>, String)>>,
    pub domain_check: bool,
}

impl RuleSet {
    pub fn new<P, B>(phrases: P, brands: B, domain_check: bool) -> Result<Self>
    where
        P: IntoIterator,
        P::Item: AsRef<str>,
        B: IntoIterator,
        B::Item: AsRef<str>,
    {
        let phrases = phrases
            .into_iter()
            .map(|p| PhrasePattern::compile(p.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut rules = RuleSet {
            phrases,
            domain_check,
            ..Default::default()
        };
        for b in brands {
            rules.add_brand(b.as_ref());
        }
        Ok(rules)
    }

    /// No phrases, no brands, domain check off: every asset passes.
    pub fn empty() -> Self {
        RuleSet::default()
    }

    pub fn add_phrase(&mut self, pattern: &str) -> Result<()> {
        self.phrases.push(PhrasePattern::compile(pattern)?);
        Ok(())
    }

    fn add_brand(&mut self, brand: &str) {
        let brand = normalize(brand);
        let tokens = tokenize(&brand);
        if tokens.is_empty() || !self.brands.insert(brand.clone()) {
            return;
        }
        let slot = self.brand_index.entry(tokens[0].clone()).or_default();
        slot.push((tokens, brand));
        slot.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.1.cmp(&b.1)));
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.phrases.iter().map(|p| p.source.as_str())
    }

    pub fn brands(&self) -> &BTreeSet<String> {
        &self.brands
    }

    /// Parses the plain-text rules format:
    ///
    /// ```text
    /// domain_check = on
    /// [phrases]
    /// free shipping
    /// <NUM>% discount
    /// [brands]
    /// Contoso
    /// ```
    ///
    /// `#` starts a comment line. The flag may appear before any section or in
    /// an `[options]` section.
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            Options,
            Phrases,
            Brands,
        }
        let mut section = Section::Options;
        let mut phrases = Vec::new();
        let mut brands = Vec::new();
        let mut domain_check = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::Config(format!("rules line {}: {m}", i + 1));
            match line {
                "[phrases]" => section = Section::Phrases,
                "[brands]" => section = Section::Brands,
                "[options]" => section = Section::Options,
                _ if line.starts_with('[') => return Err(err(format!("unknown section {line}"))),
                _ => match section {
                    Section::Phrases => phrases.push(line.to_string()),
                    Section::Brands => brands.push(line.to_string()),
                    Section::Options => {
                        let (k, v) = line
                            .split_once('=')
                            .ok_or_else(|| err(format!("expected key = value, got `{line}`")))?;
                        if k.trim() != "domain_check" {
                            return Err(err(format!("unknown option `{}`", k.trim())));
                        }
                        domain_check = match v.trim().to_lowercase().as_str() {
                            "on" | "true" | "1" | "yes" => true,
                            "off" | "false" | "0" | "no" => false,
                            other => return Err(err(format!("bad domain_check value `{other}`"))),
                        };
                    }
                },
            }
        }
        RuleSet::new(phrases, brands, domain_check)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RuleSet::parse(&text)
    }

    /// Inverse of [`RuleSet::parse`].
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "domain_check = {}\n[phrases]\n",
            if self.domain_check { "on" } else { "off" }
        );
        for p in &self.phrases {
            s.push_str(&p.source);
            s.push('\n');
        }
        s.push_str("[brands]\n");
        for b in &self.brands {
            s.push_str(b);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Phrase,
    Brand,
    Domain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub matched_span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl CheckVerdict {
    fn from_violations(violations: Vec<Violation>) -> Self {
        CheckVerdict {
            passed: violations.is_empty(),
            violations,
        }
    }
}

/// Every sensitive phrase occurring in the asset must occur in the page, with
/// identical numbers bound to each wildcard.
pub fn phrase_check(asset: &AdAsset, page: &LandingPage, rules: &RuleSet) -> CheckVerdict {
    let text = normalize(&asset.text);
    let page_text = normalize(&page.full_text);
    let mut violations = Vec::new();
    for pattern in &rules.phrases {
        let mut page_bindings: Option<Vec<Vec<String>>> = None;
        for caps in pattern.regex.captures_iter(&text) {
            let binding: Vec<String> = caps
                .iter()
                .skip(1)
                .flatten()
                .map(|m| m.as_str().to_string())
                .collect();
            let supported = page_bindings
                .get_or_insert_with(|| {
                    pattern
                        .regex
                        .captures_iter(&page_text)
                        .map(|c| {
                            c.iter()
                                .skip(1)
                                .flatten()
                                .map(|m| m.as_str().to_string())
                                .collect()
                        })
                        .collect()
                })
                .contains(&binding);
            if !supported {
                violations.push(Violation {
                    rule: Rule::Phrase,
                    matched_span: caps[0].to_string(),
                });
            }
        }
    }
    CheckVerdict::from_violations(violations)
}

/// Brands from the lexicon found in the asset (longest match at token
/// boundaries) must appear in the page text or url.
pub fn brand_check(asset: &AdAsset, page: &LandingPage, rules: &RuleSet) -> CheckVerdict {
    let mut violations = Vec::new();
    let found = find_brands(&tokenize(&asset.text), rules);
    if found.is_empty() {
        return CheckVerdict::from_violations(violations);
    }
    let page_tokens = tokenize(&page.full_text);
    let url = page.url.to_lowercase();
    for (tokens, brand) in found {
        let in_text = page_tokens
            .windows(tokens.len())
            .any(|w| w == tokens.as_slice());
        let in_url = url.contains(&tokens.concat()) || url.contains(&tokens.join("-"));
        if !(in_text || in_url) {
            violations.push(Violation {
                rule: Rule::Brand,
                matched_span: brand.clone(),
            });
        }
    }
    CheckVerdict::from_violations(violations)
}

fn find_brands<'r>(tokens: &[String], rules: &'r RuleSet) -> Vec<&'r (Vec<String>, String)> {
    let mut found: Vec<&(Vec<String>, String)> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let hit = rules
            .brand_index
            .get(&tokens[i])
            .and_then(|cands| cands.iter().find(|(bt, _)| tokens[i..].starts_with(bt)));
        match hit {
            Some(b) => {
                i += b.0.len();
                if !found.iter().any(|f| f.1 == b.1) {
                    found.push(b);
                }
            }
            None => i += 1,
        }
    }
    found
}

fn domain_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:[a-z0-9](?:[a-z0-9-]*[a-z0-9])?\.)+[a-z]{2,63}\b").unwrap()
    })
}

/// Domain-shaped tokens with a known top-level suffix, lowercased.
pub fn domain_tokens(text: &str) -> Vec<String> {
    domain_regex()
        .find_iter(text)
        .map(|m| m.as_str().to_lowercase())
        .filter(|d| {
            d.rsplit('.')
                .next()
                .is_some_and(|tld| KNOWN_TLDS.contains(&tld))
        })
        .collect()
}

/// Every domain mentioned in the asset must be the page's domain or a subdomain of it.
pub fn domain_check(asset: &AdAsset, page: &LandingPage) -> CheckVerdict {
    let domain = page.domain.to_lowercase();
    let violations = domain_tokens(&asset.text)
        .into_iter()
        .filter(|d| !(*d == domain || d.ends_with(&format!(".{domain}"))))
        .map(|d| Violation {
            rule: Rule::Domain,
            matched_span: d,
        })
        .collect();
    CheckVerdict::from_violations(violations)
}

/// All enabled checks with all violations, phrase then brand then domain.
pub fn check_asset(asset: &AdAsset, page: &LandingPage, rules: &RuleSet) -> CheckVerdict {
    let mut v = phrase_check(asset, page, rules).violations;
    v.extend(brand_check(asset, page, rules).violations);
    if rules.domain_check {
        v.extend(domain_check(asset, page).violations);
    }
    CheckVerdict::from_violations(v)
}

/// The first failing check's verdict, or `None` when the asset passes.
pub fn first_failure(asset: &AdAsset, page: &LandingPage, rules: &RuleSet) -> Option<CheckVerdict> {
    let phrase = phrase_check(asset, page, rules);
    if !phrase.passed {
        return Some(phrase);
    }
    let brand = brand_check(asset, page, rules);
    if !brand.passed {
        return Some(brand);
    }
    if rules.domain_check {
        let domain = domain_check(asset, page);
        if !domain.passed {
            return Some(domain);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub asset: AdAsset,
    pub verdict: CheckVerdict,
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: AssetCatalog,
    pub rejected: Vec<Rejection>,
}

/// Splits a catalog into assets passing every check and rejected ones.
pub fn filter_catalog(
    catalog: &AssetCatalog,
    pages: &[LandingPage],
    rules: &RuleSet,
) -> Result<FilterOutcome> {
    let by_url: HashMap<&str, &LandingPage> = pages.iter().map(|p| (p.url.as_str(), p)).collect();
    let mut kept = AssetCatalog::new();
    let mut rejected = Vec::new();
    for (url, entry) in &catalog.entries {
        let page = by_url
            .get(url.as_str())
            .ok_or_else(|| Error::NotFound(format!("no landing page for {url}")))?;
        kept.ensure_url(url);
        for asset in entry.assets() {
            match first_failure(asset, page, rules) {
                None => kept.insert(asset.clone()),
                Some(verdict) => rejected.push(Rejection {
                    asset: asset.clone(),
                    verdict,
                }),
            }
        }
    }
    Ok(FilterOutcome { kept, rejected })
}
