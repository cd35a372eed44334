//! Loading pages and asset candidates, extraction from page fields, and
//! splitting full ad copies into assets.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::read_records;
use crate::text::{fold, normalize, truncate_at_sentence, truncate_at_word};
use crate::types::{AdAsset, AssetCatalog, AssetKind, AssetSource, LandingPage, SystemConfig};

/// A complete ad copy (up to three titles, up to two descriptions) for one page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdCopyRecord {
    pub page_url: String,
    pub titles: Vec<String>,
    pub descriptions: Vec<String>,
    pub source: AssetSource,
}

/// One line of an assets file, discriminated by its `format` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum AssetRecord {
    Asset(AdAsset),
    Adcopy(AdCopyRecord),
}

/// Title candidates from the page title and visual headings, description
/// candidates from body snippets. Over-long text is cut back to a word (or
/// sentence) boundary; exact duplicates after folding are dropped.
pub fn extract_assets(page: &LandingPage, config: &SystemConfig) -> Vec<AdAsset> {
    let mut out = Vec::new();
    let mut seen: HashSet<(AssetKind, String)> = HashSet::new();

    let title_sources = std::iter::once(&page.page_title).chain(&page.visual_headings);
    let mut n_titles = 0;
    for raw in title_sources {
        let Some(text) = truncate_at_word(raw, config.max_title_chars) else {
            continue;
        };
        if seen.insert((AssetKind::Title, fold(&text))) {
            out.push(AdAsset::new(
                &page.url,
                AssetKind::Title,
                AssetSource::Extraction,
                n_titles,
                &text,
            ));
            n_titles += 1;
        }
    }

    let mut n_desc = 0;
    for raw in &page.body_snippets {
        let Some(text) = truncate_at_sentence(raw, config.max_desc_chars) else {
            continue;
        };
        if seen.insert((AssetKind::Description, fold(&text))) {
            out.push(AdAsset::new(
                &page.url,
                AssetKind::Description,
                AssetSource::Extraction,
                n_desc,
                &text,
            ));
            n_desc += 1;
        }
    }
    out
}

/// One asset per title and per description, in record order.
pub fn split_adcopy(record: &AdCopyRecord) -> Result<Vec<AdAsset>> {
    let bad = |m: &str| Error::invalid(format!("ad copy for {}: {m}", record.page_url));
    if record.page_url.is_empty() {
        return Err(bad("missing page_url"));
    }
    if record.titles.is_empty() {
        return Err(bad("missing title"));
    }
    if record.descriptions.is_empty() {
        return Err(bad("missing description"));
    }
    if record.titles.len() > 3 {
        return Err(bad("more than 3 titles"));
    }
    if record.descriptions.len() > 2 {
        return Err(bad("more than 2 descriptions"));
    }
    if record
        .titles
        .iter()
        .chain(&record.descriptions)
        .any(|s| normalize(s).is_empty())
    {
        return Err(bad("empty text"));
    }

    let titles = record
        .titles
        .iter()
        .enumerate()
        .map(|(i, t)| AdAsset::new(&record.page_url, AssetKind::Title, record.source, i, t));
    let descs = record.descriptions.iter().enumerate().map(|(i, d)| {
        AdAsset::new(
            &record.page_url,
            AssetKind::Description,
            record.source,
            i,
            d,
        )
    });
    Ok(titles.chain(descs).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadedCatalog {
    pub pages: Vec<LandingPage>,
    pub catalog: AssetCatalog,
    pub warnings: Vec<LoadWarning>,
}

/// Reads a pages file and an assets file into a catalog keyed by page url.
///
/// Every page gets an entry even when no asset refers to it. Assets pointing at
/// unknown pages, repeated ids and empty texts are dropped with a warning; a
/// line that does not decode is an error. Pools are sorted by id, so the result
/// does not depend on line order.
pub fn load_catalog(pages_path: &Path, assets_path: &Path) -> Result<LoadedCatalog> {
    let pages: Vec<LandingPage> = read_records(pages_path)?;
    for (i, p) in pages.iter().enumerate() {
        p.validate().map_err(|e| Error::Record {
            path: pages_path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    let records: Vec<AssetRecord> = read_records(assets_path)?;
    let (catalog, warnings) = build_catalog(&pages, records, assets_path)?;
    Ok(LoadedCatalog {
        pages,
        catalog,
        warnings,
    })
}

pub(crate) fn build_catalog(
    pages: &[LandingPage],
    records: Vec<AssetRecord>,
    assets_path: &Path,
) -> Result<(AssetCatalog, Vec<LoadWarning>)> {
    let mut catalog = AssetCatalog::new();
    for p in pages {
        catalog.ensure_url(&p.url);
    }
    let mut warnings = Vec::new();
    let mut ids = HashSet::new();
    for (i, rec) in records.into_iter().enumerate() {
        let line = i + 1;
        let assets = match rec {
            AssetRecord::Asset(a) => vec![a],
            AssetRecord::Adcopy(r) => split_adcopy(&r).map_err(|e| Error::Record {
                path: assets_path.to_path_buf(),
                line,
                message: e.to_string(),
            })?,
        };
        for mut a in assets {
            a.text = normalize(&a.text);
            if !catalog.entries.contains_key(&a.page_url) {
                warnings.push(LoadWarning {
                    line,
                    message: format!("asset {} references unknown page {}", a.id, a.page_url),
                });
            } else if a.text.is_empty() {
                warnings.push(LoadWarning {
                    line,
                    message: format!("asset {} has empty text", a.id),
                });
            } else if !ids.insert(a.id.clone()) {
                warnings.push(LoadWarning {
                    line,
                    message: format!("duplicate asset id {}", a.id),
                });
            } else {
                catalog.insert(a);
            }
        }
    }
    catalog.canonicalize();
    Ok((catalog, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::write_records;
    use crate::text::{char_len, tokenize};
    use crate::types::validate_asset;
    use proptest::prelude::*;

    fn page(title: &str, headings: &[&str], snippets: &[&str]) -> LandingPage {
        LandingPage::assemble(
            "https://www.microsoft.com/surface",
            title,
            headings.iter().map(|s| s.to_string()).collect(),
            snippets.iter().map(|s| s.to_string()).collect(),
            "",
        )
        .unwrap()
    }

    #[test]
    fn title_and_heading_become_titles() {
        let p = page("Microsoft Surface 8 Pro", &["Surface 8 Deals"], &[]);
        let a = extract_assets(&p, &SystemConfig::default());
        assert_eq!(a.len(), 2);
        assert!(a
            .iter()
            .all(|x| x.kind == AssetKind::Title && x.source == AssetSource::Extraction));
    }

    #[test]
    fn snippet_only_page() {
        let p = page(
            "",
            &[],
            &["Shop the new Surface lineup with free delivery."],
        );
        let a = extract_assets(&p, &SystemConfig::default());
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].kind, AssetKind::Description);
    }

    #[test]
    fn long_title_cut_at_word_boundary() {
        let title = "Microsoft Surface Pro 8 Tablet With Keyboard Deals";
        assert_eq!(char_len(title), 50);
        let p = page(title, &[], &[]);
        let a = extract_assets(&p, &SystemConfig::default());
        let t = &a[0].text;
        assert!(char_len(t) <= 30);
        assert!(title.starts_with(t.as_str()));
        let full = tokenize(title);
        let cut = tokenize(t);
        assert_eq!(&full[..cut.len()], &cut[..]);
    }

    #[test]
    fn duplicate_heading_dropped() {
        let p = page("Surface Deals", &["surface   deals", "Surface Pro"], &[]);
        assert_eq!(extract_assets(&p, &SystemConfig::default()).len(), 2);
    }

    #[test]
    fn split_counts_and_errors() {
        let rec = AdCopyRecord {
            page_url: "https://a.com".into(),
            titles: vec!["Red Shoes".into(), "Shop Now".into()],
            descriptions: vec!["Great shoes for running.".into()],
            source: AssetSource::Generated,
        };
        let a = split_adcopy(&rec).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, split_adcopy(&rec).unwrap());

        let mut no_title = rec.clone();
        no_title.titles.clear();
        let err = split_adcopy(&no_title).unwrap_err().to_string();
        assert!(err.contains("missing title"), "{err}");
    }

    fn fixture_pages() -> Vec<LandingPage> {
        vec![
            page("Surface Pro", &[], &["Buy the Surface Pro today."]),
            LandingPage::assemble("https://contoso.com/", "Contoso Shoes", vec![], vec![], "")
                .unwrap(),
        ]
    }

    #[test]
    fn load_catalog_drops_unknown_urls() {
        let dir = tempfile::tempdir().unwrap();
        let pages = fixture_pages();
        let pages_path = dir.path().join("pages.jsonl");
        write_records(&pages_path, &pages).unwrap();

        let mut recs: Vec<AssetRecord> = vec![
            AssetRecord::Adcopy(AdCopyRecord {
                page_url: pages[0].url.clone(),
                titles: vec!["Surface Pro".into(), "Surface Deals".into()],
                descriptions: vec!["Buy the Surface Pro today.".into()],
                source: AssetSource::Advertiser,
            }),
            AssetRecord::Asset(AdAsset::new(
                &pages[1].url,
                AssetKind::Title,
                AssetSource::Generated,
                0,
                "Contoso Shoes",
            )),
            AssetRecord::Asset(AdAsset::new(
                &pages[1].url,
                AssetKind::Description,
                AssetSource::Generated,
                0,
                "Shoes that fit.",
            )),
        ];
        let assets_path = dir.path().join("assets.jsonl");
        write_records(&assets_path, &recs).unwrap();
        let loaded = load_catalog(&pages_path, &assets_path).unwrap();
        assert_eq!(loaded.catalog.entries.len(), 2);
        assert_eq!(loaded.catalog.len(), 5);
        assert!(loaded.warnings.is_empty());

        recs.push(AssetRecord::Asset(AdAsset::new(
            "https://nowhere.org/",
            AssetKind::Title,
            AssetSource::Generated,
            0,
            "Lost",
        )));
        write_records(&assets_path, &recs).unwrap();
        let loaded = load_catalog(&pages_path, &assets_path).unwrap();
        assert_eq!(loaded.catalog.len(), 5);
        assert_eq!(loaded.warnings.len(), 1);
        assert_eq!(loaded.warnings[0].line, 4);

        // order insensitive
        recs.reverse();
        write_records(&assets_path, &recs).unwrap();
        let reversed = load_catalog(&pages_path, &assets_path).unwrap();
        assert_eq!(reversed.catalog, loaded.catalog);
    }

    #[test]
    fn empty_assets_file() {
        let dir = tempfile::tempdir().unwrap();
        let pages_path = dir.path().join("pages.jsonl");
        write_records(&pages_path, &fixture_pages()).unwrap();
        let assets_path = dir.path().join("assets.jsonl");
        std::fs::write(&assets_path, "").unwrap();
        let loaded = load_catalog(&pages_path, &assets_path).unwrap();
        assert_eq!(loaded.catalog.entries.len(), 2);
        assert!(loaded.catalog.is_empty());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let pages_path = dir.path().join("pages.jsonl");
        write_records(&pages_path, &fixture_pages()).unwrap();
        let assets_path = dir.path().join("assets.jsonl");
        std::fs::write(&assets_path, "\n{\"format\":\"asset\"}\n").unwrap();
        match load_catalog(&pages_path, &assets_path) {
            Err(Error::Record { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected record error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn extraction_output_is_valid(
            title in "[A-Za-z0-9 ]{0,80}",
            heads in proptest::collection::vec("[A-Za-z ,]{0,60}", 0..4),
            snips in proptest::collection::vec("[A-Za-z .!]{0,200}", 0..4),
        ) {
            let p = LandingPage::assemble("https://x.example.org/p", &title, heads, snips, "").unwrap();
            let cfg = SystemConfig::default();
            for a in extract_assets(&p, &cfg) {
                prop_assert!(validate_asset(&a, &cfg).is_ok(), "{:?}", a);
            }
        }

        #[test]
        fn split_is_loss_free(
            titles in proptest::collection::vec("[A-Za-z]{1,8}( [A-Za-z]{1,8}){0,3}", 1..=3),
            descs in proptest::collection::vec("[A-Za-z]{1,8}( [A-Za-z]{1,8}){0,8}", 1..=2),
        ) {
            let rec = AdCopyRecord { page_url: "https://a.com".into(), titles: titles.clone(), descriptions: descs.clone(), source: AssetSource::Guided };
            let assets = split_adcopy(&rec).unwrap();
            let t: Vec<_> = assets.iter().filter(|a| a.kind == AssetKind::Title).map(|a| a.text.clone()).collect();
            let d: Vec<_> = assets.iter().filter(|a| a.kind == AssetKind::Description).map(|a| a.text.clone()).collect();
            prop_assert_eq!(t, titles);
            prop_assert_eq!(d, descs);
        }
    }
}
