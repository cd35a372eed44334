//! Prune a pool of near-duplicate titles with greedy k-DPP selection.

use adstitch::diversity::diversity_report;
use adstitch::select::{select_assets, HashedEmbedder, DEFAULT_GAIN_FLOOR};
use adstitch::types::{AdAsset, AssetKind, AssetSource, CatalogEntry};

fn main() -> adstitch::Result<()> {
    let url = "https://www.fabrikam.com/coffee";
    let titles = [
        "Fresh Roasted Coffee Beans",
        "Fresh Roasted Coffee Bean",
        "Freshly Roasted Coffee Beans",
        "Single Origin Coffee",
        "Single Origin Coffee Beans",
        "Monthly Coffee Subscription",
        "Coffee Subscription Monthly",
        "Order Beans Online Today",
        "Roasted To Order In Seattle",
        "Espresso Blends For Home",
    ];
    let descriptions = [
        "Beans shipped within 48 hours of roasting.",
        "Beans shipped within two days of roasting.",
        "Subscribe and get 10% off every bag.",
        "Single origin coffee from small farms.",
    ];
    let mut entry = CatalogEntry::default();
    for (i, t) in titles.iter().enumerate() {
        entry.titles.push(AdAsset::new(
            url,
            AssetKind::Title,
            AssetSource::Generated,
            i,
            t,
        ));
    }
    for (i, d) in descriptions.iter().enumerate() {
        entry.descriptions.push(AdAsset::new(
            url,
            AssetKind::Description,
            AssetSource::Generated,
            i,
            d,
        ));
    }

    let chosen = select_assets(&entry, &HashedEmbedder::default(), 5, 2, DEFAULT_GAIN_FLOOR)?;
    for a in chosen.assets() {
        println!("{:?}: {}", a.kind, a.text);
    }

    let before = diversity_report(&titles)?;
    let kept: Vec<&str> = chosen.titles.iter().map(|a| a.text.as_str()).collect();
    let after = diversity_report(&kept)?;
    println!(
        "titles  self-BLEU {:.1} -> {:.1}",
        before.self_bleu, after.self_bleu
    );
    println!(
        "titles  distinct-n {:.1} -> {:.1}",
        before.distinct_n, after.distinct_n
    );
    Ok(())
}
