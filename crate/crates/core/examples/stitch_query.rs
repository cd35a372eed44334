//! Stitch a five-slot ad for a query, greedy slot by slot, in exploit and explore mode.

use adstitch::stitch::{
    count_options, featurize, stitch, train_online, PositionModels, StitchMode, StitchRequest,
    TrainExample,
};
use adstitch::types::{AdAsset, AssetKind, AssetSource, Position, Query};

fn main() -> adstitch::Result<()> {
    let url = "https://shop.northwind.com/laptops";
    let titles: Vec<AdAsset> = [
        "Northwind Laptops",
        "Gaming Laptops On Sale",
        "Business Laptops",
        "Laptops For Students",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| AdAsset::new(url, AssetKind::Title, AssetSource::Generated, i, t))
    .collect();
    let descriptions: Vec<AdAsset> = [
        "Gaming laptops with fast displays.",
        "All day battery life for work.",
        "Student discounts on every laptop.",
    ]
    .iter()
    .enumerate()
    .map(|(i, d)| AdAsset::new(url, AssetKind::Description, AssetSource::Generated, i, d))
    .collect();

    // Teach T1 and D1 that gaming assets win for a gaming query.
    let query = Query::new("gaming laptop");
    let mut models = PositionModels::new(16);
    for (pos, pool) in [(Position::T1, &titles), (Position::D1, &descriptions)] {
        let batch: Vec<TrainExample> = pool
            .iter()
            .map(|a| TrainExample {
                features: featurize(a, &query, pos, models.hash_bits),
                label: a.text.to_lowercase().contains("gaming") as u8,
            })
            .collect();
        for _ in 0..200 {
            train_online(models.get_mut(pos), &batch, 0.1)?;
        }
    }

    let mut request = StitchRequest {
        query: &query,
        titles: &titles,
        descriptions: &descriptions,
        mode: StitchMode::Exploit,
        rng_seed: None,
        trial_scale: 4.0,
    };
    let out = stitch(&models, &request)?;
    println!(
        "exploit, {} evaluations (formula: {}):",
        out.evaluations,
        count_options(titles.len(), descriptions.len())
    );
    for (pos, a) in out.ad.filled() {
        println!(
            "  {pos}: {:<36} p={:.3}",
            a.text,
            out.scores[pos.index()].unwrap_or(0.0)
        );
    }

    request.mode = StitchMode::Explore;
    for seed in 0..3 {
        request.rng_seed = Some(seed);
        let ad = stitch(&models, &request)?.ad;
        let texts: Vec<&str> = ad.filled().map(|(_, a)| a.text.as_str()).collect();
        println!("explore seed {seed}: {}", texts.join(" | "));
    }
    Ok(())
}
