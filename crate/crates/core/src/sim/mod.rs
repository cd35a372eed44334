//! Closed-loop serving simulation with hidden win and click oracles.

pub mod metrics;
pub mod policy;
pub mod world;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{ab_compare, business_metrics, AbReport, BusinessMetrics, EpisodeLog, Shard};
pub use policy::{OnlinePolicy, Policy, PrestitchPolicy};
pub use world::{World, WorldSpec};

use crate::error::{Error, Result};
use crate::stitch::lr::logistic_loss;
use crate::stitch::{examples_for, BatchTrainer, PositionModels};
use crate::types::{AdAsset, AssetCatalog, CatalogEntry, Objective, Position, Query, StitchedAd};

/// Runs `n_srpv` page views against `policy`.
///
/// Page views, oracle coin flips and per-request seeds are drawn from one
/// stream keyed by the world seed and `seed`, independent of what the policy
/// serves, so two policies run with the same seeds see common random numbers.
pub fn simulate(
    world: &World,
    policy: &mut dyn Policy,
    n_srpv: u64,
    train: bool,
    seed: u64,
) -> Result<EpisodeLog> {
    simulate_with(world, policy, n_srpv, train, seed, &mut |_| Ok(()))
}

/// One served ad and its outcome, as written to a serving log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServedRecord {
    pub page_url: String,
    pub query: String,
    /// Asset id per slot, T1..D2.
    pub slot_ids: [Option<String>; 5],
    pub shown: bool,
    pub clicked: bool,
}

/// Like [`simulate`], calling `on_served` for every page view that got an ad.
pub fn simulate_with(
    world: &World,
    policy: &mut dyn Policy,
    n_srpv: u64,
    train: bool,
    seed: u64,
    on_served: &mut dyn FnMut(&ServedRecord) -> Result<()>,
) -> Result<EpisodeLog> {
    if n_srpv == 0 {
        return Err(Error::invalid("simulation needs at least one SRPV"));
    }
    if world.catalog.is_empty() || world.contexts.is_empty() {
        return Err(Error::invalid(
            "simulation needs a non-empty catalog and query set",
        ));
    }
    let best: Vec<f64> = (0..world.contexts.len())
        .map(|c| world.best_ad(c).map_or(0.0, |(_, o)| o.clicks()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(world.spec.seed.rotate_left(32) ^ seed);
    let empty = CatalogEntry::default();
    let shard_size = world.spec.shard_size as u64;
    let mut log = EpisodeLog {
        shard_size: world.spec.shard_size,
        ..EpisodeLog::default()
    };
    let mut shard = Shard::default();

    for _ in 0..n_srpv {
        let ctx = rng.random_range(0..world.contexts.len());
        let (u_win, u_click, u_qb): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let request_seed: u64 = rng.random();
        let context = &world.contexts[ctx];
        shard.srpv += 1;
        shard.oracle_clicks += best[ctx];
        let entry = world.catalog.get(&context.page_url).unwrap_or(&empty);
        match policy.serve(&context.page_url, entry, &context.query, request_seed) {
            Err(Error::NoAd(_)) => log.no_ad += 1,
            Err(e) => return Err(e),
            Ok(out) => {
                let odds = world.odds(ctx, &out.ad);
                shard.expected_clicks += odds.clicks();
                let shown = u_win < odds.win;
                let clicked = shown && u_click < odds.click;
                if shown {
                    shard.impressions += 1;
                }
                if clicked {
                    shard.clicks += 1;
                    shard.revenue += world.spec.revenue_per_click;
                    if u_qb < odds.quick_back {
                        shard.quick_backs += 1;
                    }
                }
                on_served(&ServedRecord {
                    page_url: context.page_url.clone(),
                    query: context.query.raw.clone(),
                    slot_ids: out.ad.slot_ids().map(|id| id.map(str::to_string)),
                    shown,
                    clicked,
                })?;
                if train {
                    match world.spec.objective {
                        Objective::Win => policy.observe(&out, shown)?,
                        Objective::Click if shown => policy.observe(&out, clicked)?,
                        Objective::Click => {}
                    }
                }
            }
        }
        if shard.srpv == shard_size {
            push_shard(&mut log, std::mem::take(&mut shard));
        }
    }
    if shard.srpv > 0 {
        push_shard(&mut log, shard);
    }
    Ok(log)
}

fn push_shard(log: &mut EpisodeLog, shard: Shard) {
    log.srpv += shard.srpv;
    log.impressions += shard.impressions;
    log.clicks += shard.clicks;
    log.quick_backs += shard.quick_backs;
    log.revenue += shard.revenue;
    log.expected_clicks += shard.expected_clicks;
    log.oracle_clicks += shard.oracle_clicks;
    log.shards.push(shard);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReplayStats {
    pub records: usize,
    /// Records that produced a label under the objective.
    pub labelled: usize,
}

fn label_for(rec: &ServedRecord, objective: Objective) -> Option<bool> {
    match objective {
        Objective::Win => Some(rec.shown),
        Objective::Click if rec.shown => Some(rec.clicked),
        Objective::Click => None,
    }
}

/// Rebuilds the served ad of `rec` from catalog ids.
fn replay_ad(rec: &ServedRecord, by_id: &HashMap<&str, &AdAsset>) -> Result<StitchedAd> {
    let mut ad = StitchedAd::default();
    for (i, id) in rec.slot_ids.iter().enumerate() {
        if let Some(id) = id {
            let asset = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::NotFound(format!("asset {id} from the serving log")))?;
            let pos = Position::from_index(i).expect("five slots");
            if asset.kind != pos.kind() {
                return Err(Error::invalid(format!("asset {id} cannot fill slot {pos}")));
            }
            *ad.slot_mut(pos) = Some((*asset).clone());
        }
    }
    Ok(ad)
}

/// Retrains `models` from a serving log, labelling each record per `objective`
/// exactly as the simulator does when training online.
pub fn train_on_log(
    models: &mut PositionModels,
    catalog: &AssetCatalog,
    log: &[ServedRecord],
    objective: Objective,
    batch_size: usize,
    learning_rate: f64,
) -> Result<ReplayStats> {
    let by_id: HashMap<&str, &AdAsset> = catalog.assets().map(|a| (a.id.as_str(), a)).collect();
    let mut trainer = BatchTrainer::new(batch_size, learning_rate);
    let mut stats = ReplayStats::default();
    for rec in log {
        stats.records += 1;
        let Some(label) = label_for(rec, objective) else {
            continue;
        };
        let outcome = models.outcome_for(replay_ad(rec, &by_id)?, &Query::new(&rec.query))?;
        trainer.record(models, &outcome, label)?;
        stats.labelled += 1;
    }
    trainer.flush(models)?;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeldOutLoss {
    /// Per-slot examples scored.
    pub examples: usize,
    /// Mean logistic loss per example, in nats.
    pub mean_loss: f64,
}

/// Logistic loss of `models` on a log they were not trained on. Reported only;
/// training never stops on it.
pub fn held_out_loss(
    models: &PositionModels,
    catalog: &AssetCatalog,
    log: &[ServedRecord],
    objective: Objective,
) -> Result<HeldOutLoss> {
    let by_id: HashMap<&str, &AdAsset> = catalog.assets().map(|a| (a.id.as_str(), a)).collect();
    let (mut total, mut examples) = (0.0, 0usize);
    for rec in log {
        let Some(label) = label_for(rec, objective) else {
            continue;
        };
        let outcome = models.outcome_for(replay_ad(rec, &by_id)?, &Query::new(&rec.query))?;
        for (pos, ex) in examples_for(&outcome, label) {
            total += logistic_loss(models.get(pos).logit(&ex.features)?, ex.label);
            examples += 1;
        }
    }
    Ok(HeldOutLoss {
        examples,
        mean_loss: if examples == 0 {
            0.0
        } else {
            total / examples as f64
        },
    })
}

/// Oracle expectations averaged over the world's contexts (queries are uniform).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub win_rate: f64,
    pub clicks_per_srpv: f64,
    /// Expected clicks over expected impressions.
    pub ctr: f64,
}

fn summarize(odds: impl Iterator<Item = (f64, f64)>, n: usize) -> Expected {
    let (mut win, mut clicks) = (0.0, 0.0);
    for (w, c) in odds {
        win += w;
        clicks += w * c;
    }
    Expected {
        win_rate: win / n as f64,
        clicks_per_srpv: clicks / n as f64,
        ctr: if win > 0.0 { clicks / win } else { 0.0 },
    }
}

/// What `policy` earns in expectation, serving each context with request seed `seed`.
pub fn expected_performance(world: &World, policy: &dyn Policy, seed: u64) -> Result<Expected> {
    let empty = CatalogEntry::default();
    let mut odds = Vec::with_capacity(world.contexts.len());
    for (i, c) in world.contexts.iter().enumerate() {
        let entry = world.catalog.get(&c.page_url).unwrap_or(&empty);
        match policy.serve(&c.page_url, entry, &c.query, seed) {
            Ok(out) => {
                let o = world.odds(i, &out.ad);
                odds.push((o.win, o.click));
            }
            Err(Error::NoAd(_)) => odds.push((0.0, 0.0)),
            Err(e) => return Err(e),
        }
    }
    Ok(summarize(odds.into_iter(), world.contexts.len()))
}

/// Expectations when every context is served its best ad.
pub fn oracle_performance(world: &World) -> Expected {
    let odds = (0..world.contexts.len()).map(|c| {
        world
            .best_ad(c)
            .map_or((0.0, 0.0), |(_, o)| (o.win, o.click))
    });
    summarize(odds, world.contexts.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stitch::StitchMode;

    fn online(world: &World, mode: StitchMode) -> OnlinePolicy {
        OnlinePolicy::new(
            PositionModels::new(world.spec.hash_bits),
            mode,
            4.0,
            100,
            0.02,
        )
    }

    #[test]
    fn forced_oracle_counts() {
        let spec = WorldSpec {
            force_win: Some(1.0),
            force_click: Some(0.0),
            ..WorldSpec::default()
        };
        let w = World::synthetic(spec).unwrap();
        let log = simulate(&w, &mut online(&w, StitchMode::Explore), 1000, false, 1).unwrap();
        assert_eq!(
            (log.srpv, log.impressions, log.clicks, log.quick_backs),
            (1000, 1000, 0, 0)
        );
        assert_eq!(log.revenue, 0.0);
        assert_eq!(log.shards.len(), 10);
        assert!(simulate(&w, &mut online(&w, StitchMode::Explore), 0, false, 1).is_err());
    }

    #[test]
    fn deterministic_and_conserving() {
        let spec = WorldSpec {
            unfactual_fraction: 0.3,
            ..WorldSpec::default()
        };
        let w = World::synthetic(spec).unwrap();
        let run = || simulate(&w, &mut online(&w, StitchMode::Explore), 3000, true, 7).unwrap();
        let a = run();
        assert_eq!(a, run());
        a.check().unwrap();
        assert!(a.clicks > 0 && a.quick_backs > 0);
    }

    #[test]
    fn shards_sum_to_totals() {
        let w = World::synthetic(WorldSpec::default()).unwrap();
        let log = simulate(&w, &mut online(&w, StitchMode::Exploit), 1050, false, 2).unwrap();
        assert_eq!(log.shards.len(), 11);
        assert_eq!(log.shards.iter().map(|s| s.srpv).sum::<u64>(), 1050);
        assert_eq!(log.shards.iter().map(|s| s.clicks).sum::<u64>(), log.clicks);
    }

    #[test]
    fn oracle_bounds_any_policy() {
        let w = World::synthetic(WorldSpec::default()).unwrap();
        let best = oracle_performance(&w);
        let got = expected_performance(&w, &online(&w, StitchMode::Exploit), 0).unwrap();
        assert!(got.clicks_per_srpv <= best.clicks_per_srpv + 1e-12);
    }

    #[test]
    fn prestitch_m1_ignores_query() {
        let w = World::synthetic(WorldSpec::default()).unwrap();
        let p =
            PrestitchPolicy::build(PositionModels::new(w.spec.hash_bits), &w.catalog, 1, 0.3, 0)
                .unwrap();
        let mut per_url = std::collections::HashMap::new();
        for c in &w.contexts {
            let entry = w.catalog.get(&c.page_url).unwrap();
            let ad = p.serve(&c.page_url, entry, &c.query, 0).unwrap().ad;
            assert_eq!(
                per_url
                    .entry(c.page_url.clone())
                    .or_insert_with(|| ad.clone()),
                &ad
            );
        }
        assert!(PrestitchPolicy::build(PositionModels::new(16), &w.catalog, 0, 0.3, 0).is_err());
    }

    #[test]
    fn replaying_the_log_matches_online_training() {
        let w = World::synthetic(WorldSpec::default()).unwrap();
        let mut policy = online(&w, StitchMode::Explore);
        let mut log = Vec::new();
        simulate_with(&w, &mut policy, 2500, true, 4, &mut |r| {
            log.push(r.clone());
            Ok(())
        })
        .unwrap();
        policy.flush().unwrap();
        assert_eq!(log.len(), 2500);
        let mut replayed = PositionModels::new(w.spec.hash_bits);
        let stats =
            train_on_log(&mut replayed, &w.catalog, &log, Objective::Win, 100, 0.02).unwrap();
        assert_eq!(stats.labelled, 2500);
        assert_eq!(replayed, policy.models);

        log[0].slot_ids[0] = Some("missing".into());
        let err =
            train_on_log(&mut replayed, &w.catalog, &log, Objective::Win, 100, 0.02).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn held_out_loss_drops_below_chance() {
        let w = World::synthetic(WorldSpec::default()).unwrap();
        let record = |policy: &mut OnlinePolicy, seed| {
            let mut log = Vec::new();
            simulate_with(&w, policy, 3000, true, seed, &mut |r| {
                log.push(r.clone());
                Ok(())
            })
            .unwrap();
            log
        };
        let mut policy = online(&w, StitchMode::Explore);
        let train = record(&mut policy, 1);
        let fresh = PositionModels::new(w.spec.hash_bits);
        let untrained = held_out_loss(&fresh, &w.catalog, &train, Objective::Win).unwrap();
        assert!(untrained.examples >= 2 * train.len());
        assert!((untrained.mean_loss - std::f64::consts::LN_2).abs() < 1e-12);

        let mut models = fresh.clone();
        train_on_log(&mut models, &w.catalog, &train, Objective::Win, 100, 0.02).unwrap();
        let holdout = record(&mut online(&w, StitchMode::Explore), 2);
        let trained = held_out_loss(&models, &w.catalog, &holdout, Objective::Win).unwrap();
        assert!(trained.mean_loss < std::f64::consts::LN_2, "{trained:?}");
    }

    #[test]
    fn misspecified_world_runs() {
        let spec = WorldSpec {
            misspecified: 1.0,
            ..WorldSpec::default()
        };
        let w = World::synthetic(spec).unwrap();
        let log = simulate(&w, &mut online(&w, StitchMode::Explore), 2000, true, 3).unwrap();
        log.check().unwrap();
    }
}
