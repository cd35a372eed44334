//! Search ad assembly from per-page asset pools.
//!
//! Assets (titles and descriptions) come from landing pages or from a text
//! generator. They are cross-checked against the page, thinned to a diverse
//! subset with a k-DPP, and stitched into a five-slot ad at query time by
//! per-position logistic models explored with Thompson sampling.
//!
//! | stage | module |
//! |---|---|
//! | pages, assets, extraction | [`ingest`], [`types`] |
//! | factuality filter | [`crosscheck`] |
//! | human-judgment gate | [`quality`] |
//! | PairwiseBLEU / SelfBLEU / Distinct-N | [`diversity`] |
//! | diverse subset selection | [`select`] |
//! | query-time stitching and training | [`stitch`] |
//! | synthetic traffic and A/B reports | [`sim`] |
//! | serving, config, command line | [`service`], [`config`], [`cli`] |
//!
//! Runnable examples live in `examples/`: `extract_and_crosscheck`,
//! `diverse_selection`, `diversity_metrics`, `quality_gate`, `stitch_query`,
//! `online_learning`, `online_vs_prestitch` and `serve_endpoint`.

pub mod cli;
pub mod config;
pub mod crosscheck;
pub mod diversity;
pub mod error;
pub mod ingest;
pub mod quality;
pub mod records;
pub mod select;
pub mod service;
pub mod sim;
pub mod stitch;
pub mod text;
pub mod types;

pub use error::{Error, Result};
