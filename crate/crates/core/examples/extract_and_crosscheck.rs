//! Turn a landing page and an ad copy into assets, then drop the ones the page does not back up.

use adstitch::crosscheck::{check_asset, RuleSet};
use adstitch::ingest::{extract_assets, split_adcopy, AdCopyRecord};
use adstitch::types::{AssetSource, LandingPage, SystemConfig};

fn main() -> adstitch::Result<()> {
    let page = LandingPage::assemble(
        "https://www.contoso.com/tents",
        "Contoso Outdoor Tents For Every Season And Every Trail",
        vec![
            "Family Tents On Sale".into(),
            "Ultralight Backpacking Tents".into(),
        ],
        vec!["Save 20% on all family tents this week. Free returns on every order.".into()],
        "Contoso tents are tested in the mountains.",
    )?;
    let config = SystemConfig::default();

    let mut assets = extract_assets(&page, &config);
    assets.extend(split_adcopy(&AdCopyRecord {
        page_url: page.url.clone(),
        titles: vec![
            "Contoso Tents".into(),
            "Tents With Free Shipping".into(),
            "Northwind Tents".into(),
        ],
        descriptions: vec![
            "Save 20% on family tents.".into(),
            "Save 40% at tentsdirect.com today.".into(),
        ],
        source: AssetSource::Generated,
    })?);

    let rules = RuleSet::parse(
        "domain_check = on\n[phrases]\nfree shipping\nsave <NUM>%\n[brands]\nContoso\nNorthwind\n",
    )?;
    for a in &assets {
        let verdict = check_asset(a, &page, &rules);
        let status = if verdict.passed {
            "keep".to_string()
        } else {
            format!("drop {:?}", verdict.violations)
        };
        println!("{:<12} {:<55} {}", format!("{:?}", a.kind), a.text, status);
    }
    Ok(())
}
