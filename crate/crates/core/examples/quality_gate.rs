//! Sample assets for human review and decide whether a batch clears the good-rate bar.

use adstitch::quality::{gate, sample_for_eval, Judgment, TextQuality, YesNo, DEFAULT_CONFIDENCE};
use adstitch::types::{AdAsset, AssetCatalog, AssetKind, AssetSource};

fn judged(id: &str, good: bool) -> Judgment {
    Judgment {
        asset_id: id.to_string(),
        text_quality: if good {
            TextQuality::Good
        } else {
            TextQuality::Bad
        },
        human_like: YesNo::Yes,
        factual: if good { YesNo::Yes } else { YesNo::No },
        relevant: YesNo::Yes,
    }
}

fn main() -> adstitch::Result<()> {
    let mut catalog = AssetCatalog::new();
    for site in 0..40 {
        let url = format!("https://www.shop{site}.com/");
        for i in 0..30 {
            catalog.insert(AdAsset::new(
                &url,
                AssetKind::Title,
                AssetSource::Generated,
                i,
                &format!("Offer {i} at shop {site}"),
            ));
        }
    }
    let sample = sample_for_eval(&catalog, 50, 500, 7);
    println!("sampled {} assets for review", sample.assets.len());

    for good in [480, 450] {
        let judgments: Vec<Judgment> = sample
            .assets
            .iter()
            .enumerate()
            .map(|(i, a)| judged(&a.id, i < good))
            .collect();
        let r = gate(&judgments, 0.9, DEFAULT_CONFIDENCE)?;
        println!(
            "{good}/500 good: rate {:.3}, lower bound {:.4}, {}",
            r.rate,
            r.lower_bound,
            if r.passed { "pass" } else { "fail" }
        );
    }
    Ok(())
}
