//! Pairwise-BLEU, Self-BLEU and Distinct-n of a small title set, per n-gram order.

use adstitch::diversity::{diversity_report, sentence_bleu};
use adstitch::text::tokenize;

fn main() -> adstitch::Result<()> {
    let titles = [
        "Cheap Flights To Paris",
        "Cheap Flights To Rome",
        "Book Cheap Flights Today",
        "Last Minute Hotel Deals",
        "Compare Hotel Prices Now",
    ];
    let report = diversity_report(&titles)?;
    println!("order  pairwise-BLEU  self-BLEU  distinct");
    for (n, o) in &report.per_order {
        let distinct = o.distinct_n.map_or("-".to_string(), |d| format!("{d:.1}"));
        println!(
            "{n:>5}  {:>13.1}  {:>9.1}  {distinct:>8}",
            o.pairwise_bleu, o.self_bleu
        );
    }
    println!(
        " mean  {:>13.1}  {:>9.1}  {:>8.1}",
        report.pairwise_bleu, report.self_bleu, report.distinct_n
    );

    let cand = tokenize("the the the the the the the");
    let reference = tokenize("the cat is on the mat");
    println!(
        "clipped unigram BLEU: {:.4}",
        sentence_bleu(&cand, &[&reference[..]], 1)?
    );
    Ok(())
}
