//! Episode logs, business metrics and A/B comparison.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Two-sided 5% critical value of the standard normal.
pub const Z_CRITICAL: f64 = 1.959963984540054;

/// Totals over a run of consecutive SRPVs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    pub srpv: u64,
    pub impressions: u64,
    pub clicks: u64,
    pub quick_backs: u64,
    pub revenue: f64,
    /// Oracle click probability of the served ads, summed.
    pub expected_clicks: f64,
    /// Same for the best ad of each context.
    pub oracle_clicks: f64,
}

impl Shard {
    pub(crate) fn add(&mut self, other: &Shard) {
        self.srpv += other.srpv;
        self.impressions += other.impressions;
        self.clicks += other.clicks;
        self.quick_backs += other.quick_backs;
        self.revenue += other.revenue;
        self.expected_clicks += other.expected_clicks;
        self.oracle_clicks += other.oracle_clicks;
    }

    /// Expected clicks lost to the best ad of each context.
    pub fn regret(&self) -> f64 {
        self.oracle_clicks - self.expected_clicks
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub srpv: u64,
    pub impressions: u64,
    pub clicks: u64,
    pub quick_backs: u64,
    pub revenue: f64,
    /// SRPVs where no ad could be formed.
    pub no_ad: u64,
    pub expected_clicks: f64,
    pub oracle_clicks: f64,
    pub shard_size: usize,
    pub shards: Vec<Shard>,
}

impl EpisodeLog {
    pub fn regret(&self) -> f64 {
        self.oracle_clicks - self.expected_clicks
    }

    /// Regret summed over the first and second half of the shards.
    pub fn regret_halves(&self) -> (f64, f64) {
        let mid = self.shards.len() / 2;
        let sum = |s: &[Shard]| s.iter().map(Shard::regret).sum::<f64>();
        (sum(&self.shards[..mid]), sum(&self.shards[mid..]))
    }

    pub fn check(&self) -> Result<()> {
        if !(self.quick_backs <= self.clicks
            && self.clicks <= self.impressions
            && self.impressions <= self.srpv)
        {
            return Err(Error::invalid(
                "episode counts violate quick_backs <= clicks <= impressions <= srpv",
            ));
        }
        if !(self.revenue >= 0.0) {
            return Err(Error::invalid("episode revenue is negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusinessMetrics {
    pub rpm: f64,
    pub iy: f64,
    pub ctr: f64,
    pub qbr: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn metrics_of(
    srpv: u64,
    impressions: u64,
    clicks: u64,
    quick_backs: u64,
    revenue: f64,
) -> BusinessMetrics {
    BusinessMetrics {
        rpm: 1000.0 * ratio(revenue, srpv as f64),
        iy: ratio(impressions as f64, srpv as f64),
        ctr: ratio(clicks as f64, impressions as f64),
        qbr: ratio(quick_backs as f64, clicks as f64),
    }
}

pub fn business_metrics(log: &EpisodeLog) -> Result<BusinessMetrics> {
    if log.srpv == 0 {
        return Err(Error::invalid("business metrics need at least one SRPV"));
    }
    Ok(metrics_of(
        log.srpv,
        log.impressions,
        log.clicks,
        log.quick_backs,
        log.revenue,
    ))
}

impl BusinessMetrics {
    pub fn table(&self) -> String {
        format!(
            "metric  value\nRPM     {:.4}\nIY      {:.4}\nCTR     {:.4}\nQBR     {:.4}\n",
            self.rpm, self.iy, self.ctr, self.qbr
        )
    }
}

/// Pooled two-proportion z statistic for `x1/n1` against `x2/n2`; 0 when undefined.
pub fn two_proportion_z(x1: u64, n1: u64, x2: u64, n2: u64) -> f64 {
    if n1 == 0 || n2 == 0 {
        return 0.0;
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    (x1 as f64 / n1f - x2 as f64 / n2f) / se
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    ZTest,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub treatment: f64,
    pub control: f64,
    /// `None` when the control value is zero.
    pub delta_pct: Option<f64>,
    pub test: Significance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    /// 95% percentile interval of treatment minus control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbReport {
    pub treatment: BusinessMetrics,
    pub control: BusinessMetrics,
    pub deltas: Vec<MetricDelta>,
}

impl AbReport {
    pub fn delta(&self, metric: &str) -> Option<&MetricDelta> {
        self.deltas.iter().find(|d| d.metric == metric)
    }

    pub fn table(&self) -> String {
        let mut s = String::from("metric  treatment   control     delta%    significant\n");
        for d in &self.deltas {
            let pct = d
                .delta_pct
                .map_or("undefined".to_string(), |p| format!("{p:+.2}"));
            let _ = writeln!(
                s,
                "{:<7} {:<11.4} {:<11.4} {:<9} {}",
                d.metric.to_uppercase(),
                d.treatment,
                d.control,
                pct,
                d.significant
            );
        }
        s
    }
}

fn pct(t: f64, c: f64) -> Option<f64> {
    (c != 0.0).then(|| 100.0 * (t - c) / c)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn bootstrap_interval(
    treatment: &[Shard],
    control: &[Shard],
    metric: impl Fn(&Shard) -> f64,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, f64)> {
    if treatment.is_empty() || control.is_empty() {
        return None;
    }
    let resample = |shards: &[Shard], rng: &mut ChaCha8Rng| {
        let mut total = Shard::default();
        for _ in 0..shards.len() {
            total.add(&shards[rng.random_range(0..shards.len())]);
        }
        metric(&total)
    };
    let mut diffs: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| resample(treatment, rng) - resample(control, rng))
        .collect();
    diffs.sort_by(f64::total_cmp);
    Some((percentile(&diffs, 0.025), percentile(&diffs, 0.975)))
}

/// Relative change of each business metric with its significance at the 5% level.
pub fn ab_compare(treatment: &EpisodeLog, control: &EpisodeLog, seed: u64) -> Result<AbReport> {
    let t = business_metrics(treatment)?;
    let c = business_metrics(control)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deltas = Vec::with_capacity(4);

    for (name, tv, cv, metric) in [
        (
            "rpm",
            t.rpm,
            c.rpm,
            (|s: &Shard| 1000.0 * ratio(s.revenue, s.srpv as f64)) as fn(&Shard) -> f64,
        ),
        ("iy", t.iy, c.iy, |s: &Shard| {
            ratio(s.impressions as f64, s.srpv as f64)
        }),
    ] {
        let interval = bootstrap_interval(&treatment.shards, &control.shards, metric, &mut rng);
        deltas.push(MetricDelta {
            metric: name.into(),
            treatment: tv,
            control: cv,
            delta_pct: pct(tv, cv),
            test: Significance::Bootstrap,
            z: None,
            interval,
            significant: interval.is_some_and(|(lo, hi)| lo > 0.0 || hi < 0.0),
        });
    }
    for (name, tv, cv, z) in [
        (
            "ctr",
            t.ctr,
            c.ctr,
            two_proportion_z(
                treatment.clicks,
                treatment.impressions,
                control.clicks,
                control.impressions,
            ),
        ),
        (
            "qbr",
            t.qbr,
            c.qbr,
            two_proportion_z(
                treatment.quick_backs,
                treatment.clicks,
                control.quick_backs,
                control.clicks,
            ),
        ),
    ] {
        deltas.push(MetricDelta {
            metric: name.into(),
            treatment: tv,
            control: cv,
            delta_pct: pct(tv, cv),
            test: Significance::ZTest,
            z: Some(z),
            interval: None,
            significant: z.abs() > Z_CRITICAL,
        });
    }
    Ok(AbReport {
        treatment: t,
        control: c,
        deltas,
    })
}
