//! Explore-mode online training in a click world, checked against the oracle's best stitch.
//!
//! cargo run --release --example online_learning -- [seed]

use std::time::Instant;

use adstitch::sim::{
    expected_performance, oracle_performance, simulate, OnlinePolicy, World, WorldSpec,
};
use adstitch::stitch::{PositionModels, StitchMode};

fn main() -> adstitch::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let world = World::synthetic(WorldSpec::click_bandit(seed))?;
    let best = oracle_performance(&world);
    let mut policy = OnlinePolicy::new(
        PositionModels::new(world.spec.hash_bits),
        StitchMode::Explore,
        0.5,
        1000,
        0.01,
    );

    let start = Instant::now();
    let mut regret = Vec::new();
    for round in 0..20u64 {
        let log = simulate(&world, &mut policy, 10_000, true, round)?;
        regret.push(log.regret());
        policy.mode = StitchMode::Exploit;
        let now = expected_performance(&world, &policy, 0)?;
        policy.mode = StitchMode::Explore;
        println!(
            "{:>7} SRPV  exploit CTR {:.4}  ({:5.1}% of best {:.4})",
            (round + 1) * 10_000,
            now.ctr,
            100.0 * now.ctr / best.ctr,
            best.ctr
        );
    }
    let first: f64 = regret[..10].iter().sum();
    let second: f64 = regret[10..].iter().sum();
    println!(
        "regret: first half {first:.1}, second half {second:.1}; {:.1?}",
        start.elapsed()
    );
    Ok(())
}
