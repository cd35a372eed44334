//! Serving policies the simulator can drive.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stitch::{
    stitch, BatchTrainer, PositionModels, StitchMode, StitchOutcome, StitchRequest,
};
use crate::types::{AssetCatalog, CatalogEntry, Query, StitchedAd};

pub trait Policy {
    /// Picks an ad for `query` on the page whose pools are `entry`.
    fn serve(
        &self,
        page_url: &str,
        entry: &CatalogEntry,
        query: &Query,
        seed: u64,
    ) -> Result<StitchOutcome>;

    /// Feeds back the label of a served ad.
    fn observe(&mut self, outcome: &StitchOutcome, label: bool) -> Result<()>;

    fn models(&self) -> &PositionModels;

    /// Applies anything still buffered, e.g. a partial training batch.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Stitches every request from scratch and learns from its own traffic.
#[derive(Debug, Clone)]
pub struct OnlinePolicy {
    pub models: PositionModels,
    pub mode: StitchMode,
    pub trial_scale: f64,
    trainer: BatchTrainer,
}

impl OnlinePolicy {
    pub fn new(
        models: PositionModels,
        mode: StitchMode,
        trial_scale: f64,
        batch_size: usize,
        learning_rate: f64,
    ) -> Self {
        OnlinePolicy {
            models,
            mode,
            trial_scale,
            trainer: BatchTrainer::new(batch_size, learning_rate),
        }
    }

    /// Trains on any partially filled batch.
    pub fn flush(&mut self) -> Result<()> {
        self.trainer.flush(&mut self.models)
    }
}

impl Policy for OnlinePolicy {
    fn serve(
        &self,
        _page_url: &str,
        entry: &CatalogEntry,
        query: &Query,
        seed: u64,
    ) -> Result<StitchOutcome> {
        stitch(
            &self.models,
            &StitchRequest {
                query,
                titles: &entry.titles,
                descriptions: &entry.descriptions,
                mode: self.mode,
                rng_seed: Some(seed),
                trial_scale: self.trial_scale,
            },
        )
    }

    fn observe(&mut self, outcome: &StitchOutcome, label: bool) -> Result<()> {
        self.trainer
            .record(&mut self.models, outcome, label)
            .map(|_| ())
    }

    fn models(&self) -> &PositionModels {
        &self.models
    }

    fn finish(&mut self) -> Result<()> {
        self.flush()
    }
}

/// Serves one of a few ads stitched offline per url, ranked at query time.
#[derive(Debug, Clone)]
pub struct PrestitchPolicy {
    pub models: PositionModels,
    pub ads: BTreeMap<String, Vec<StitchedAd>>,
}

impl PrestitchPolicy {
    /// Stitches each url without a query under `m` model snapshots: the
    /// models as given, then `m - 1` copies with Gaussian noise of std
    /// `perturb_sd` on every weight. Duplicate ads are kept once.
    pub fn build(
        models: PositionModels,
        catalog: &AssetCatalog,
        m: usize,
        perturb_sd: f64,
        seed: u64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("prestitch needs m >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut snapshots = vec![models.clone()];
        for _ in 1..m {
            let mut s = models.clone();
            for model in s.models.iter_mut() {
                for w in model.weights.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *w += (perturb_sd * z) as f32;
                }
            }
            snapshots.push(s);
        }
        let empty = Query::empty();
        let mut ads = BTreeMap::new();
        for (url, entry) in &catalog.entries {
            if entry.titles.is_empty() || entry.descriptions.is_empty() {
                continue;
            }
            let mut list: Vec<StitchedAd> = Vec::new();
            for snap in &snapshots {
                let out = stitch(
                    snap,
                    &StitchRequest {
                        query: &empty,
                        titles: &entry.titles,
                        descriptions: &entry.descriptions,
                        mode: StitchMode::Exploit,
                        rng_seed: None,
                        trial_scale: 0.0,
                    },
                )?;
                if !list.iter().any(|a| a.slot_ids() == out.ad.slot_ids()) {
                    list.push(out.ad);
                }
            }
            ads.insert(url.clone(), list);
        }
        Ok(PrestitchPolicy { models, ads })
    }
}

impl Policy for PrestitchPolicy {
    fn serve(
        &self,
        page_url: &str,
        _entry: &CatalogEntry,
        query: &Query,
        _seed: u64,
    ) -> Result<StitchOutcome> {
        let list = self
            .ads
            .get(page_url)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::NoAd(format!("no prestitched ad for {page_url}")))?;
        let mut best: Option<(usize, f64)> = None;
        for (i, ad) in list.iter().enumerate() {
            let s = self.models.ad_score(ad, query)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let ad = list[best.expect("non-empty list").0].clone();
        let mut out = self.models.outcome_for(ad, query)?;
        out.evaluations = list.len();
        Ok(out)
    }

    /// The candidate set is fixed offline and the ranking model stays frozen.
    fn observe(&mut self, _outcome: &StitchOutcome, _label: bool) -> Result<()> {
        Ok(())
    }

    fn models(&self) -> &PositionModels {
        &self.models
    }
}
