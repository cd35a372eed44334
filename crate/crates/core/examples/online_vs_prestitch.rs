//! Query-time stitching against a handful of ads stitched offline per page.
//!
//! cargo run --release --example online_vs_prestitch -- [seed]

use adstitch::sim::{ab_compare, simulate, OnlinePolicy, PrestitchPolicy, World, WorldSpec};
use adstitch::stitch::{PositionModels, StitchMode};

fn main() -> adstitch::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let world = World::synthetic(WorldSpec::query_driven(seed))?;

    // Both arms share the models learned from one exploration run.
    let mut learner = OnlinePolicy::new(
        PositionModels::new(world.spec.hash_bits),
        StitchMode::Explore,
        0.5,
        1000,
        0.01,
    );
    simulate(&world, &mut learner, 200_000, true, 100)?;
    learner.flush()?;

    let mut online =
        OnlinePolicy::new(learner.models.clone(), StitchMode::Exploit, 0.5, 1000, 0.01);
    let mut prestitch =
        PrestitchPolicy::build(learner.models.clone(), &world.catalog, 5, 0.3, seed)?;
    let treatment = simulate(&world, &mut online, 100_000, false, 200)?;
    let control = simulate(&world, &mut prestitch, 100_000, false, 200)?;

    print!("{}", ab_compare(&treatment, &control, seed)?.table());
    Ok(())
}
