use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::engine::{run_replication, ReplicationResult};
use super::metrics::{aggregate, percentiles, FiveNines, UeAggregate, UeMetrics, PERCENTILES};
use super::scenario::ScenarioConfig;
use crate::cg_core::FeatureProfile;

/// Column order of the metrics CSV.
pub const CSV_COLUMNS: [&str; 26] = [
    "row_kind",
    "replication",
    "ue_id",
    "offered",
    "delivered",
    "delivered_in_deadline",
    "dropped",
    "reliability",
    "reliability_se",
    "latency_p50_us",
    "latency_p95_us",
    "latency_p99_us",
    "latency_p99_9_us",
    "latency_p99_999_us",
    "reps_scheduled",
    "reps_emitted",
    "reps_skipped",
    "shared_tx",
    "collisions",
    "lbt_blocks",
    "misdetections",
    "unknown_detections",
    "cn_recoveries",
    "in_period_fraction",
    "mean_alignment_delay_slots",
    "five_nines",
];

/// Most rows written to a latency CDF table.
pub const CDF_MAX_ROWS: usize = 1000;

/// All replications of a scenario and their per-UE aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub profile: FeatureProfile,
    pub seed: u64,
    pub replications: Vec<ReplicationResult>,
    pub aggregates: Vec<UeAggregate>,
}

/// Runs every replication in parallel and reduces them in index order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Report {
    let replications: Vec<ReplicationResult> = (0..cfg.replications).into_par_iter().map(|r| run_replication(cfg, r)).collect();
    let aggregates = (0..cfg.ues.len())
        .map(|u| {
            let per_rep: Vec<&UeMetrics> = replications.iter().map(|r| &r.ues[u]).collect();
            aggregate(&per_rep)
        })
        .collect();
    Report { profile: cfg.profile, seed: cfg.seed, replications, aggregates }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn five_nines_label(f: FiveNines) -> &'static str {
    match f {
        FiveNines::Met => "met",
        FiveNines::NotMet => "not_met",
        FiveNines::UnderSampled => "under_sampled",
    }
}

fn binomial_se(m: &UeMetrics) -> Option<f64> {
    m.reliability().map(|p| (p * (1.0 - p) / m.offered as f64).sqrt())
}

fn row(kind: &str, replication: String, m: &UeMetrics, se: Option<f64>, pct: &[Option<f64>], five: FiveNines) -> Vec<String> {
    let mut r = vec![kind.to_string(), replication, m.ue_id.to_string()];
    r.extend([m.offered, m.delivered, m.delivered_in_deadline, m.dropped].map(|v| v.to_string()));
    r.push(opt(m.reliability()));
    r.push(opt(se));
    r.extend(pct.iter().map(|p| opt(*p)));
    r.extend(
        [
            m.reps_scheduled,
            m.reps_emitted,
            m.reps_skipped(),
            m.shared_tx,
            m.collisions,
            m.lbt_blocks,
            m.misdetections,
            m.unknown_detections,
            m.cn_recoveries,
        ]
        .map(|v| v.to_string()),
    );
    r.push(opt(m.in_period_fraction()));
    r.push(opt(m.mean_alignment_delay()));
    r.push(five_nines_label(five).to_string());
    r
}

fn replication_five_nines(m: &UeMetrics) -> FiveNines {
    match m.reliability() {
        _ if m.offered < super::metrics::FIVE_NINES_MIN_OFFERED => FiveNines::UnderSampled,
        Some(r) if r >= 0.99999 => FiveNines::Met,
        _ => FiveNines::NotMet,
    }
}

impl Report {
    /// One row per (replication, UE), then one aggregate row per UE. An
    /// empty report yields the header alone.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for rep in &self.replications {
            for m in &rep.ues {
                let pct = m.percentiles();
                w.write_record(row("replication", rep.replication.to_string(), m, binomial_se(m), &pct, replication_five_nines(m)))?;
            }
        }
        for a in &self.aggregates {
            w.write_record(row("aggregate", String::new(), &a.pooled, a.reliability_se, &a.percentiles_us, a.five_nines))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn summary(&self) -> Summary {
        Summary {
            profile: self.profile,
            seed: self.seed,
            replications: self.replications.len() as u32,
            ues: self
                .aggregates
                .iter()
                .map(|a| UeSummary {
                    ue_id: a.ue_id,
                    offered: a.pooled.offered,
                    delivered: a.pooled.delivered,
                    delivered_in_deadline: a.pooled.delivered_in_deadline,
                    reliability_mean: a.reliability_mean,
                    reliability_se: a.reliability_se,
                    five_nines: a.five_nines,
                    latency_percentiles_us: PERCENTILES.iter().zip(&a.percentiles_us).map(|(&q, &v)| Percentile { q, value_us: v }).collect(),
                    collision_rate: a.pooled.collision_rate(),
                    in_period_fraction: a.pooled.in_period_fraction(),
                    mean_alignment_delay_slots: a.pooled.mean_alignment_delay(),
                    common_nack_recovery_fraction: a.pooled.recovery_fraction(),
                    counters: a.pooled.clone(),
                })
                .collect(),
        }
    }

    /// Empirical latency CDF over all UEs and replications, as the fraction
    /// of offered packets delivered within each latency. Thinned to at most
    /// [`CDF_MAX_ROWS`] rows.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let mut all: Vec<f64> = self.aggregates.iter().flat_map(|a| a.pooled.latencies_us.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        let offered: u64 = self.aggregates.iter().map(|a| a.pooled.offered).sum();
        if all.is_empty() || offered == 0 {
            return Vec::new();
        }
        let n = all.len();
        let step = n.div_ceil(CDF_MAX_ROWS).max(1);
        let mut idx: Vec<usize> = (step - 1..n).step_by(step).collect();
        if idx.last() != Some(&(n - 1)) {
            idx.push(n - 1);
        }
        idx.into_iter().map(|i| (all[i], (i + 1) as f64 / offered as f64)).collect()
    }

    pub fn write_cdf<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["latency_us", "cumulative_fraction"])?;
        for (l, f) in self.cdf() {
            w.write_record([l.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pooled latency percentiles over every UE.
    pub fn overall_percentiles(&self) -> Vec<Option<f64>> {
        let mut all: Vec<f64> = self.aggregates.iter().flat_map(|a| a.pooled.latencies_us.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        percentiles(&all)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Percentile {
    pub q: f64,
    pub value_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UeSummary {
    pub ue_id: u32,
    pub offered: u64,
    pub delivered: u64,
    pub delivered_in_deadline: u64,
    pub reliability_mean: Option<f64>,
    pub reliability_se: Option<f64>,
    pub five_nines: FiveNines,
    pub latency_percentiles_us: Vec<Percentile>,
    pub collision_rate: Option<f64>,
    pub in_period_fraction: Option<f64>,
    pub mean_alignment_delay_slots: Option<f64>,
    pub common_nack_recovery_fraction: Option<f64>,
    pub counters: UeMetrics,
}

/// JSON summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub profile: FeatureProfile,
    pub seed: u64,
    pub replications: u32,
    pub ues: Vec<UeSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg_core::{CgConfig, RvPattern};
    use crate::sim::scenario::UeConfig;
    use crate::ue_mac::TrafficModel;

    fn scenario(replications: u32) -> ScenarioConfig {
        let cg = CgConfig::new(0, 4, 2, RvPattern::Rv0303);
        let traffic = TrafficModel::UniformInPeriod { n_slots: 4, payload_bits: 32 };
        let mut s = ScenarioConfig::new(FeatureProfile::NrR16, vec![UeConfig::new(0, vec![cg], traffic)], 200);
        s.replications = replications;
        s.seed = 11;
        s.validate().unwrap();
        s
    }

    #[test]
    fn csv_layout() {
        let report = run_scenario(&scenario(3));
        let text = report.csv_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert_eq!(lines.len(), 1 + 3 + 1);
        assert!(lines[4].starts_with("aggregate,,0,150,"));
        assert!(lines.iter().all(|l| l.split(',').count() == CSV_COLUMNS.len()));
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut s = scenario(1);
        s.ues.clear();
        let report = run_scenario(&s);
        assert_eq!(report.csv_string().trim_end(), CSV_COLUMNS.join(","));
        assert!(report.cdf().is_empty());
    }

    #[test]
    fn parallel_run_matches_sequential() {
        let s = scenario(4);
        let report = run_scenario(&s);
        for (r, rep) in report.replications.iter().enumerate() {
            assert_eq!(*rep, run_replication(&s, r as u32));
        }
    }

    #[test]
    fn cdf_is_monotone_and_bounded() {
        let report = run_scenario(&scenario(2));
        let cdf = report.cdf();
        assert!(!cdf.is_empty());
        assert!(cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert!(cdf.last().unwrap().1 <= 1.0);
    }
}
