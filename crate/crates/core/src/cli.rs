//! The `adstitch` command line.
//!
//! Every subcommand writes its artifacts to files and one JSON summary line to
//! stdout. Failures print one JSON line `{"error":kind,"message":...}` to
//! stderr and exit nonzero.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::config::AppConfig;
use crate::crosscheck::{filter_catalog, RuleSet};
use crate::diversity::{diversity_report, FlatDiversityRecord};
use crate::error::{Error, Result};
use crate::ingest::{build_catalog, extract_assets, load_catalog, AssetRecord, LoadedCatalog};
use crate::quality::{gate, Judgment};
use crate::records::{read_records, write_record, write_records};
use crate::select::{select_catalog, HashedEmbedder};
use crate::service::Service;
use crate::sim::{
    ab_compare, business_metrics, held_out_loss, simulate_with, train_on_log, EpisodeLog,
    OnlinePolicy, Policy, PrestitchPolicy, ServedRecord, World, WorldSpec,
};
use crate::stitch::{checkpoint, PositionModels, StitchMode};
use crate::types::{AssetCatalog, AssetKind, LandingPage};

#[derive(Debug, Parser)]
#[command(
    name = "adstitch",
    version,
    about = "Ad asset pipeline, query-time stitching and simulation"
)]
pub struct Cli {
    /// Flat `key = value` config file; ADSTITCH_* variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// Landing pages, one record per line (config: pages_path).
    #[arg(long)]
    pub pages: Option<PathBuf>,
    /// Assets or ad copies, one record per line (config: assets_path).
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Title,
    Description,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Online,
    Prestitch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Explore,
    Exploit,
}

impl From<ModeArg> for StitchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Explore => StitchMode::Explore,
            ModeArg::Exploit => StitchMode::Exploit,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load pages and assets, optionally extract candidates from pages, write one catalog file.
    Ingest {
        #[command(flatten)]
        input: CatalogArgs,
        /// Add title and description candidates taken from the pages themselves.
        #[arg(long)]
        extract: bool,
        #[arg(long)]
        out: PathBuf,
        /// Where to write load warnings (unknown pages, duplicates).
        #[arg(long)]
        warnings: Option<PathBuf>,
    },
    /// Drop assets whose claims the landing page does not support.
    Filter {
        #[command(flatten)]
        input: CatalogArgs,
        /// Rule file with `[phrases]`, `[brands]` and domain_check (config: rules_path).
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejected: PathBuf,
    },
    /// Keep a diverse subset of each url's titles and descriptions.
    Select {
        #[command(flatten)]
        input: CatalogArgs,
        /// Title budget per url (config: title_budget).
        #[arg(long)]
        titles: Option<usize>,
        /// Description budget per url (config: desc_budget).
        #[arg(long)]
        descriptions: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise-BLEU, Self-BLEU and Distinct-n per url.
    Diversity {
        /// Assets file; pages are not needed.
        #[arg(long, conflicts_with = "texts")]
        assets: Option<PathBuf>,
        /// Plain text file, one text per line, scored as a single set.
        #[arg(long)]
        texts: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "title")]
        kind: KindArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pass or fail a batch of human judgments against a good-rate threshold.
    Gate {
        #[arg(long)]
        judgments: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[arg(long, default_value_t = 0.975)]
        confidence: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrain the stitching models from a serving log.
    Train {
        #[command(flatten)]
        input: CatalogArgs,
        /// Served-ad records as written by `simulate --served-log`.
        #[arg(long)]
        log: PathBuf,
        /// Start from this checkpoint instead of zero weights.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Served-ad records to report logistic loss on after training.
        #[arg(long)]
        holdout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drive a policy through a simulated world.
    Simulate {
        /// World file (TOML); defaults apply when absent (config: world_path).
        #[arg(long)]
        world: Option<PathBuf>,
        /// Use this catalog instead of a synthetic one.
        #[command(flatten)]
        input: CatalogArgs,
        #[arg(long, default_value_t = 10_000)]
        srpv: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "online")]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value = "explore")]
        mode: ModeArg,
        /// Train the online policy on its own traffic.
        #[arg(long)]
        train: bool,
        #[arg(long)]
        init: Option<PathBuf>,
        /// Where to save the models after the run.
        #[arg(long)]
        checkpoint_out: Option<PathBuf>,
        /// Write one record per served ad.
        #[arg(long)]
        served_log: Option<PathBuf>,
        /// Candidate ads per url for the prestitch policy.
        #[arg(long, default_value_t = 5)]
        prestitch_m: usize,
        #[arg(long, default_value_t = 0.3)]
        perturb_sd: f64,
        /// Episode log output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a table instead of a JSON summary.
        #[arg(long)]
        table: bool,
    },
    /// Compare two episode logs.
    Ab {
        #[arg(long)]
        treatment: PathBuf,
        #[arg(long)]
        control: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        table: bool,
    },
    /// Answer stitch requests, one JSON record per line.
    Serve {
        #[command(flatten)]
        input: CatalogArgs,
        /// Models to serve; also re-read on a reload command (config: checkpoint_path).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Listen on a TCP address instead of reading stdin.
        #[arg(long)]
        listen: Option<String>,
        /// Read requests from a file instead of stdin.
        #[arg(long)]
        requests: Option<PathBuf>,
        /// Write responses to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave latency out of responses so output is byte-reproducible.
        #[arg(long)]
        omit_latency: bool,
    },
    /// Create, inspect or verify model checkpoints.
    Checkpoint {
        #[command(subcommand)]
        action: CheckpointAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CheckpointAction {
    /// Write zero models.
    Init {
        /// Defaults to the configured hash_bits.
        #[arg(long)]
        hash_bits: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print header information.
    Inspect { path: PathBuf },
    /// Load, re-encode and compare with the file bytes.
    Verify { path: PathBuf },
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let message = e.to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("{}", json!({"error": "usage", "message": first}));
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            1
        }
    }
}

fn summary(value: &impl Serialize) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::invalid(e.to_string()))?;
    println!("{line}");
    Ok(())
}

fn required<'a>(
    flag: Option<&'a Path>,
    cfg: &'a AppConfig,
    key: &str,
    what: &str,
) -> Result<&'a Path> {
    flag.or_else(|| cfg.path(key))
        .ok_or_else(|| Error::Config(format!("missing {what}: pass --{what} or set {key}")))
}

fn load_input(input: &CatalogArgs, cfg: &AppConfig) -> Result<LoadedCatalog> {
    let pages = required(input.pages.as_deref(), cfg, "pages_path", "pages")?;
    let assets = required(input.assets.as_deref(), cfg, "assets_path", "assets")?;
    load_catalog(pages, assets)
}

fn load_pages(path: &Path) -> Result<Vec<LandingPage>> {
    let pages: Vec<LandingPage> = read_records(path)?;
    for (i, p) in pages.iter().enumerate() {
        p.validate().map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(pages)
}

fn write_catalog(path: &Path, catalog: &AssetCatalog) -> Result<usize> {
    let records: Vec<AssetRecord> = catalog.assets().cloned().map(AssetRecord::Asset).collect();
    write_records(path, &records)
}

fn catalog_counts(catalog: &AssetCatalog) -> serde_json::Value {
    let titles: usize = catalog.entries.values().map(|e| e.titles.len()).sum();
    let descriptions: usize = catalog.entries.values().map(|e| e.descriptions.len()).sum();
    json!({"urls": catalog.entries.len(), "titles": titles, "descriptions": descriptions})
}

fn read_one<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let mut records: Vec<T> = read_records(path)?;
    if records.len() != 1 {
        return Err(Error::Record {
            path: path.to_path_buf(),
            line: records.len().min(2),
            message: format!("expected exactly one record, found {}", records.len()),
        });
    }
    Ok(records.remove(0))
}

fn load_models(path: Option<&Path>, hash_bits: u32) -> Result<PositionModels> {
    match path {
        Some(p) => checkpoint::load(p),
        None => Ok(PositionModels::new(hash_bits)),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = AppConfig::resolve(cli.config.as_deref())?;
    let sys = &cfg.system;
    match cli.command {
        Command::Ingest {
            input,
            extract,
            out,
            warnings,
        } => {
            let pages_path = required(input.pages.as_deref(), &cfg, "pages_path", "pages")?;
            let mut loaded = match input.assets.as_deref().or_else(|| cfg.path("assets_path")) {
                Some(assets) => load_catalog(pages_path, assets)?,
                None => {
                    let pages = load_pages(pages_path)?;
                    let (catalog, warnings) = build_catalog(&pages, Vec::new(), Path::new(""))?;
                    LoadedCatalog {
                        pages,
                        catalog,
                        warnings,
                    }
                }
            };
            let mut extracted = 0;
            if extract {
                for page in &loaded.pages {
                    for a in extract_assets(page, sys) {
                        if !loaded.catalog.assets().any(|b| b.id == a.id) {
                            loaded.catalog.insert(a);
                            extracted += 1;
                        }
                    }
                }
                loaded.catalog.canonicalize();
            }
            write_catalog(&out, &loaded.catalog)?;
            if let Some(w) = warnings {
                write_records(&w, &loaded.warnings)?;
            }
            let mut s = catalog_counts(&loaded.catalog);
            s["pages"] = json!(loaded.pages.len());
            s["extracted"] = json!(extracted);
            s["warnings"] = json!(loaded.warnings.len());
            summary(&s)
        }
        Command::Filter {
            input,
            rules,
            out,
            rejected,
        } => {
            let loaded = load_input(&input, &cfg)?;
            let rules = RuleSet::load(required(rules.as_deref(), &cfg, "rules_path", "rules")?)?;
            let outcome = filter_catalog(&loaded.catalog, &loaded.pages, &rules)?;
            write_catalog(&out, &outcome.kept)?;
            write_records(&rejected, &outcome.rejected)?;
            let mut by_rule: BTreeMap<String, usize> = BTreeMap::new();
            for r in &outcome.rejected {
                if let Some(v) = r.verdict.violations.first() {
                    let rule =
                        serde_json::to_value(v.rule).map_err(|e| Error::invalid(e.to_string()))?;
                    *by_rule
                        .entry(rule.as_str().unwrap_or("unknown").to_string())
                        .or_default() += 1;
                }
            }
            summary(&json!({
                "kept": outcome.kept.len(),
                "rejected": outcome.rejected.len(),
                "rejected_by_rule": by_rule,
            }))
        }
        Command::Select {
            input,
            titles,
            descriptions,
            out,
        } => {
            let loaded = load_input(&input, &cfg)?;
            let selected = select_catalog(
                &loaded.catalog,
                &HashedEmbedder::default(),
                titles.unwrap_or(sys.title_budget),
                descriptions.unwrap_or(sys.desc_budget),
                sys.dpp_epsilon,
            )?;
            write_catalog(&out, &selected)?;
            summary(&catalog_counts(&selected))
        }
        Command::Diversity {
            assets,
            texts,
            kind,
            out,
        } => {
            let mut records: Vec<FlatDiversityRecord> = Vec::new();
            let mut skipped = 0;
            if let Some(path) = texts {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
                records.push(diversity_report(&lines)?.flatten(None));
            } else {
                let path = required(assets.as_deref(), &cfg, "assets_path", "assets")?;
                let mut by_url: BTreeMap<String, Vec<String>> = BTreeMap::new();
                for rec in read_records::<AssetRecord>(path)? {
                    let list = match rec {
                        AssetRecord::Asset(a) => vec![a],
                        AssetRecord::Adcopy(r) => crate::ingest::split_adcopy(&r)?,
                    };
                    for a in list {
                        let keep = match kind {
                            KindArg::Title => a.kind == AssetKind::Title,
                            KindArg::Description => a.kind == AssetKind::Description,
                            KindArg::All => true,
                        };
                        if keep {
                            by_url.entry(a.page_url).or_default().push(a.text);
                        }
                    }
                }
                for (url, texts) in by_url {
                    if texts.len() < 2 || texts.iter().any(|t| crate::text::tokenize(t).is_empty())
                    {
                        skipped += 1;
                        continue;
                    }
                    records.push(diversity_report(&texts)?.flatten(Some(url)));
                }
            }
            if let Some(out) = out {
                write_records(&out, &records)?;
            }
            let n = records.len().max(1) as f64;
            let mean = |f: fn(&FlatDiversityRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
            summary(&json!({
                "sets": records.len(),
                "skipped": skipped,
                "mean_pairwise_bleu": mean(|r| r.pairwise_bleu),
                "mean_self_bleu": mean(|r| r.self_bleu),
                "mean_distinct_n": mean(|r| r.distinct_n),
            }))
        }
        Command::Gate {
            judgments,
            threshold,
            confidence,
            out,
        } => {
            let path = required(judgments.as_deref(), &cfg, "judgments_path", "judgments")?;
            let js: Vec<Judgment> = read_records(path)?;
            let report = gate(&js, threshold, confidence)?;
            if let Some(out) = out {
                write_record(&out, &report)?;
            }
            summary(&report)
        }
        Command::Train {
            input,
            log,
            init,
            holdout,
            out,
        } => {
            let loaded = load_input(&input, &cfg)?;
            let records: Vec<ServedRecord> = read_records(&log)?;
            let mut models = load_models(init.as_deref(), sys.hash_bits)?;
            let stats = train_on_log(
                &mut models,
                &loaded.catalog,
                &records,
                sys.objective,
                sys.batch_size,
                sys.learning_rate,
            )?;
            checkpoint::save(&models, &out)?;
            let mut report = json!({
                "records": stats.records,
                "labelled": stats.labelled,
                "updates_seen": models.updates_seen(),
            });
            if let Some(path) = holdout {
                let held: Vec<ServedRecord> = read_records(&path)?;
                let loss = held_out_loss(&models, &loaded.catalog, &held, sys.objective)?;
                report["holdout"] = json!(loss);
            }
            summary(&report)
        }
        Command::Simulate {
            world,
            input,
            srpv,
            seed,
            policy,
            mode,
            train,
            init,
            checkpoint_out,
            served_log,
            prestitch_m,
            perturb_sd,
            out,
            table,
        } => {
            let spec = match world.as_deref().or_else(|| cfg.path("world_path")) {
                Some(p) => WorldSpec::load(p)?,
                None => WorldSpec::default(),
            };
            let world = match (&input.pages, &input.assets) {
                (Some(_), Some(_)) => {
                    let loaded = load_input(&input, &cfg)?;
                    World::from_catalog(spec, loaded.pages, loaded.catalog)?
                }
                (None, None) => World::synthetic(spec)?,
                _ => {
                    return Err(Error::Config(
                        "simulate needs both --pages and --assets, or neither".into(),
                    ))
                }
            };
            let models = load_models(init.as_deref(), world.spec.hash_bits)?;
            let mut policy: Box<dyn Policy> = match policy {
                PolicyArg::Online => Box::new(OnlinePolicy::new(
                    models,
                    mode.into(),
                    sys.trial_scale,
                    sys.batch_size,
                    sys.learning_rate,
                )),
                PolicyArg::Prestitch => Box::new(PrestitchPolicy::build(
                    models,
                    &world.catalog,
                    prestitch_m,
                    perturb_sd,
                    seed,
                )?),
            };
            let mut writer = match &served_log {
                Some(p) => Some(BufWriter::new(
                    std::fs::File::create(p).map_err(|e| Error::io(p, e))?,
                )),
                None => None,
            };
            let log = simulate_with(&world, policy.as_mut(), srpv, train, seed, &mut |rec| {
                if let (Some(w), Some(p)) = (writer.as_mut(), served_log.as_deref()) {
                    let line =
                        serde_json::to_string(rec).map_err(|e| Error::invalid(e.to_string()))?;
                    writeln!(w, "{line}").map_err(|e| Error::io(p, e))?;
                }
                Ok(())
            })?;
            if let (Some(mut w), Some(p)) = (writer, served_log.as_deref()) {
                w.flush().map_err(|e| Error::io(p, e))?;
            }
            if let Some(p) = &checkpoint_out {
                policy.finish()?;
                checkpoint::save(policy.models(), p)?;
            }
            if let Some(out) = &out {
                write_record(out, &log)?;
            }
            let metrics = business_metrics(&log)?;
            if table {
                print!("{}", metrics.table());
                Ok(())
            } else {
                summary(&json!({
                    "srpv": log.srpv,
                    "impressions": log.impressions,
                    "clicks": log.clicks,
                    "quick_backs": log.quick_backs,
                    "no_ad": log.no_ad,
                    "metrics": metrics,
                    "regret": log.regret(),
                }))
            }
        }
        Command::Ab {
            treatment,
            control,
            seed,
            out,
            table,
        } => {
            let t = read_one::<EpisodeLog>(&treatment)?;
            let c = read_one::<EpisodeLog>(&control)?;
            let report = ab_compare(&t, &c, seed)?;
            if let Some(out) = out {
                write_record(&out, &report)?;
            }
            if table {
                print!("{}", report.table());
                Ok(())
            } else {
                summary(&report)
            }
        }
        Command::Serve {
            input,
            checkpoint: ckpt,
            listen,
            requests,
            out,
            omit_latency,
        } => {
            let loaded = load_input(&input, &cfg)?;
            let ckpt = ckpt.or_else(|| cfg.path("checkpoint_path").map(Path::to_path_buf));
            let models = load_models(ckpt.as_deref(), sys.hash_bits)?;
            let mut service = Service::new(loaded.catalog, models, sys.rng_seed, sys.trial_scale);
            service.record_latency = !omit_latency;
            service.checkpoint_path = ckpt;
            if let Some(addr) = listen {
                return Arc::new(service).serve_tcp(addr);
            }
            let input: Box<dyn BufRead> = match &requests {
                Some(p) => Box::new(std::io::BufReader::new(
                    std::fs::File::open(p).map_err(|e| Error::io(p, e))?,
                )),
                None => Box::new(std::io::stdin().lock()),
            };
            match &out {
                Some(p) => {
                    let file = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
                    service
                        .serve_lines(input, BufWriter::new(file))
                        .map_err(|e| Error::io(p, e))?;
                }
                None => {
                    service
                        .serve_lines(input, std::io::stdout().lock())
                        .map_err(|e| Error::io("stdout", e))?;
                }
            }
            Ok(())
        }
        Command::Checkpoint { action } => match action {
            CheckpointAction::Init { hash_bits, out } => {
                let models = PositionModels::new(hash_bits.unwrap_or(sys.hash_bits));
                checkpoint::save(&models, &out)?;
                summary(&json!({"hash_bits": models.hash_bits, "path": out}))
            }
            CheckpointAction::Inspect { path } => {
                let models = checkpoint::load(&path)?;
                let positions: Vec<_> = models
                    .models
                    .iter()
                    .map(|m| {
                        json!({
                            "position": m.position,
                            "bias": m.bias,
                            "updates_seen": m.updates_seen,
                            "nonzero_weights": m.weights.iter().filter(|w| **w != 0.0).count(),
                        })
                    })
                    .collect();
                summary(&json!({"hash_bits": models.hash_bits, "positions": positions}))
            }
            CheckpointAction::Verify { path } => {
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let models = checkpoint::from_bytes(&bytes)?;
                if checkpoint::to_bytes(&models) != bytes {
                    return Err(Error::Checkpoint {
                        section: "trailer".into(),
                        message: "re-encoded bytes differ from the file".into(),
                    });
                }
                summary(&json!({"verified": true, "bytes": bytes.len()}))
            }
        },
    }
}
