//! Query-time ad stitching: greedy slot-by-slot selection scored by
//! per-position logistic regression, with optional Thompson exploration.

pub mod bandit;
pub mod checkpoint;
pub mod features;
pub mod lr;

use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bandit::thompson_sample;
pub use features::{featurize, FeatureVector};
pub use lr::{logistic, lr_score, train_online, trial_count, PositionModel, TrainExample};

use crate::error::{Error, Result};
use crate::types::{AdAsset, AssetKind, Position, Query, StitchedAd};

/// One model per display slot, sharing a feature space size.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionModels {
    pub hash_bits: u32,
    pub models: [PositionModel; 5],
}

impl PositionModels {
    pub fn new(hash_bits: u32) -> Self {
        PositionModels {
            hash_bits,
            models: Position::ALL.map(|p| PositionModel::new(p, hash_bits)),
        }
    }

    pub fn get(&self, pos: Position) -> &PositionModel {
        &self.models[pos.index()]
    }

    pub fn get_mut(&mut self, pos: Position) -> &mut PositionModel {
        &mut self.models[pos.index()]
    }

    pub fn updates_seen(&self) -> u64 {
        self.models.iter().map(|m| m.updates_seen).sum()
    }

    /// Sum over filled slots of each slot's predicted probability for `query`.
    pub fn ad_score(&self, ad: &StitchedAd, query: &Query) -> Result<f64> {
        let mut total = 0.0;
        for (pos, asset) in ad.filled() {
            total += lr_score(self.get(pos), &featurize(asset, query, pos, self.hash_bits))?;
        }
        Ok(total)
    }

    /// Scores and featurizes an already composed ad, as if it had been stitched.
    pub fn outcome_for(&self, ad: StitchedAd, query: &Query) -> Result<StitchOutcome> {
        let mut out = StitchOutcome {
            ad,
            scores: [None; 5],
            features: Default::default(),
            evaluations: 0,
        };
        for (pos, asset) in out.ad.filled() {
            let x = featurize(asset, query, pos, self.hash_bits);
            out.scores[pos.index()] = Some(lr_score(self.get(pos), &x)?);
            out.features[pos.index()] = Some(x);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StitchMode {
    Explore,
    #[default]
    Exploit,
}

#[derive(Debug, Clone)]
pub struct StitchRequest<'a> {
    pub query: &'a Query,
    pub titles: &'a [AdAsset],
    pub descriptions: &'a [AdAsset],
    pub mode: StitchMode,
    /// Seeds the exploration draws; ignored in exploit mode, 0 when absent.
    pub rng_seed: Option<u64>,
    pub trial_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchOutcome {
    pub ad: StitchedAd,
    /// Predicted probability of the chosen asset, per slot.
    pub scores: [Option<f64>; 5],
    /// Ranking features of the chosen asset, per slot; the training input.
    pub features: [Option<FeatureVector>; 5],
    pub evaluations: usize,
}

/// Scoring evaluations made by a greedy fill of pools of size `t` and `d`.
pub fn count_options(t: usize, d: usize) -> usize {
    t + t.saturating_sub(1) + t.saturating_sub(2) + d + d.saturating_sub(1)
}

pub fn stitch(models: &PositionModels, req: &StitchRequest<'_>) -> Result<StitchOutcome> {
    if req.titles.is_empty() {
        return Err(Error::NoAd("title pool is empty".into()));
    }
    if req.descriptions.is_empty() {
        return Err(Error::NoAd("description pool is empty".into()));
    }
    if let Some(a) = req.titles.iter().find(|a| a.kind != AssetKind::Title) {
        return Err(Error::invalid(format!(
            "asset {} in the title pool is not a title",
            a.id
        )));
    }
    if let Some(a) = req
        .descriptions
        .iter()
        .find(|a| a.kind != AssetKind::Description)
    {
        return Err(Error::invalid(format!(
            "asset {} in the description pool is not a description",
            a.id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.rng_seed.unwrap_or(0));
    let mut title_left: Vec<&AdAsset> = req.titles.iter().collect();
    let mut desc_left: Vec<&AdAsset> = req.descriptions.iter().collect();
    let mut out = StitchOutcome {
        ad: StitchedAd::default(),
        scores: [None; 5],
        features: Default::default(),
        evaluations: 0,
    };

    for pos in Position::ALL {
        let pool = match pos.kind() {
            AssetKind::Title => &mut title_left,
            AssetKind::Description => &mut desc_left,
        };
        let model = models.get(pos);
        // (pool index, ranking score, p, features)
        let mut best: Option<(usize, f64, f64, FeatureVector)> = None;
        for (k, asset) in pool.iter().enumerate() {
            let x = featurize(asset, req.query, pos, models.hash_bits);
            let p = lr_score(model, &x)?;
            let score = match req.mode {
                StitchMode::Exploit => p,
                StitchMode::Explore => {
                    thompson_sample(p, trial_count(model, &x, req.trial_scale)?, &mut rng)
                }
            };
            out.evaluations += 1;
            let better = match &best {
                None => true,
                Some((bk, bs, _, _)) => score > *bs || (score == *bs && asset.id < pool[*bk].id),
            };
            if better {
                best = Some((k, score, p, x));
            }
        }
        if let Some((k, _, p, x)) = best {
            let chosen = pool.remove(k);
            *out.ad.slot_mut(pos) = Some(chosen.clone());
            out.scores[pos.index()] = Some(p);
            out.features[pos.index()] = Some(x);
        }
    }
    Ok(out)
}

/// Per-slot training examples from one served ad and its outcome label.
pub fn examples_for(
    outcome: &StitchOutcome,
    label: bool,
) -> impl Iterator<Item = (Position, TrainExample)> + '_ {
    Position::ALL.into_iter().filter_map(move |pos| {
        outcome.features[pos.index()].as_ref().map(|x| {
            (
                pos,
                TrainExample {
                    features: x.clone(),
                    label: label as u8,
                },
            )
        })
    })
}

/// Accumulates per-position examples and trains once a batch is full.
#[derive(Debug, Clone)]
pub struct BatchTrainer {
    pub batch_size: usize,
    pub learning_rate: f64,
    pending: [Vec<TrainExample>; 5],
    events: usize,
}

impl BatchTrainer {
    pub fn new(batch_size: usize, learning_rate: f64) -> Self {
        BatchTrainer {
            batch_size: batch_size.max(1),
            learning_rate,
            pending: Default::default(),
            events: 0,
        }
    }

    /// Records one served ad; returns true when this event triggered training.
    pub fn record(
        &mut self,
        models: &mut PositionModels,
        outcome: &StitchOutcome,
        label: bool,
    ) -> Result<bool> {
        for (pos, ex) in examples_for(outcome, label) {
            self.pending[pos.index()].push(ex);
        }
        self.events += 1;
        if self.events >= self.batch_size {
            self.flush(models)?;
            return Ok(true);
        }
        Ok(false)
    }

    pub fn flush(&mut self, models: &mut PositionModels) -> Result<()> {
        for pos in Position::ALL {
            let batch = std::mem::take(&mut self.pending[pos.index()]);
            if !batch.is_empty() {
                train_online(models.get_mut(pos), &batch, self.learning_rate)?;
            }
        }
        self.events = 0;
        Ok(())
    }
}

/// Shared model snapshot: readers clone the `Arc`, a trainer swaps in a new one.
#[derive(Debug)]
pub struct ModelStore {
    current: RwLock<Arc<PositionModels>>,
}

impl ModelStore {
    pub fn new(models: PositionModels) -> Self {
        ModelStore {
            current: RwLock::new(Arc::new(models)),
        }
    }

    pub fn snapshot(&self) -> Arc<PositionModels> {
        self.current
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    pub fn swap(&self, models: PositionModels) -> Arc<PositionModels> {
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        std::mem::replace(&mut *guard, Arc::new(models))
    }
}
