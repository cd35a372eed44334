//! Serve requests in process and over the line protocol, then hot-swap retrained models.

use std::time::Instant;

use adstitch::service::{ServeRequest, Service};
use adstitch::sim::{simulate, OnlinePolicy, World, WorldSpec};
use adstitch::stitch::{checkpoint, PositionModels, StitchMode};

fn main() -> adstitch::Result<()> {
    let spec = WorldSpec {
        titles_per_page: 10,
        descriptions_per_page: 10,
        ..WorldSpec::default()
    };
    let world = World::synthetic(spec)?;
    let service = Service::new(
        world.catalog.clone(),
        PositionModels::new(world.spec.hash_bits),
        42,
        4.0,
    );

    let url = world.contexts[0].page_url.clone();
    let req = ServeRequest {
        page_url: url.clone(),
        query: world.contexts[0].query.raw.clone(),
        mode: StitchMode::Exploit,
        request_id: "warm".into(),
    };
    let mut latencies: Vec<u64> = (0..10_000)
        .map(|_| service.serve(&req).map(|r| r.latency_micros.unwrap_or(0)))
        .collect::<adstitch::Result<_>>()?;
    latencies.sort_unstable();
    println!(
        "exploit latency: median {} us, p99 {} us",
        latencies[5_000], latencies[9_900]
    );

    let input = format!(
        "{}\n{{\"page_url\":\"https://unknown.example.com/\",\"query\":\"x\",\"request_id\":\"2\"}}\n",
        serde_json::to_string(&ServeRequest { request_id: "1".into(), ..req.clone() }).unwrap()
    );
    let mut output = Vec::new();
    service
        .serve_lines(input.as_bytes(), &mut output)
        .map_err(|e| adstitch::Error::io("stdout", e))?;
    for line in String::from_utf8_lossy(&output).lines() {
        println!("{}", &line[..line.len().min(120)]);
    }

    // Train offline, save a checkpoint, and swap it in.
    let mut learner = OnlinePolicy::new(
        PositionModels::new(world.spec.hash_bits),
        StitchMode::Explore,
        4.0,
        1000,
        0.02,
    );
    let started = Instant::now();
    simulate(&world, &mut learner, 20_000, true, 1)?;
    learner.flush()?;
    let path = std::env::temp_dir().join("adstitch_example.ckpt");
    checkpoint::save(&learner.models, &path)?;
    service.reload_from(&path)?;
    println!(
        "reloaded models after {} updates ({:.1?}); T1 is now {}",
        service.models().updates_seen(),
        started.elapsed(),
        service
            .serve(&req)?
            .ad
            .title1
            .map(|a| a.text)
            .unwrap_or_default()
    );
    std::fs::remove_file(&path).ok();
    Ok(())
}
