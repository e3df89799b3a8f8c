use serde::Serialize;

use crate::time_grid::Numerology;

/// Percentiles reported for latency, as fractions.
pub const PERCENTILES: [f64; 5] = [0.5, 0.95, 0.99, 0.999, 0.99999];

/// Offered packets needed before a five-nines reliability claim is made.
pub const FIVE_NINES_MIN_OFFERED: u64 = 10_000_000;

/// Counters of one UE in one replication.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UeMetrics {
    pub ue_id: u32,
    pub offered: u64,
    pub delivered: u64,
    pub delivered_in_deadline: u64,
    pub dropped: u64,
    /// Latencies of delivered packets in microseconds, ascending once
    /// finalized.
    #[serde(skip)]
    pub latencies_us: Vec<f64>,
    pub reps_scheduled: u64,
    pub reps_emitted: u64,
    pub skipped_invalid: u64,
    pub skipped_missed: u64,
    pub skipped_lbt: u64,
    pub skipped_cancelled: u64,
    pub skipped_aborted: u64,
    pub shared_tx: u64,
    pub collisions: u64,
    pub lbt_blocks: u64,
    pub misdetections: u64,
    pub unknown_detections: u64,
    pub initial_tx: u64,
    pub cn_decoded: u64,
    pub cn_recoveries: u64,
    /// Packets that got at least one dedicated repetition in the period
    /// they arrived in.
    pub in_period_served: u64,
    pub in_period_reps_sum: u64,
    pub in_period_reps_min: Option<u32>,
    pub in_period_reps_max: Option<u32>,
    /// Sum of waits from arrival instant to first transmission, in slots.
    pub alignment_delay_sum: f64,
    pub alignment_delay_sq_sum: f64,
    pub cg_uci_tx: u64,
}

impl UeMetrics {
    pub fn new(ue_id: u32) -> Self {
        Self { ue_id, ..Self::default() }
    }

    pub fn reps_skipped(&self) -> u64 {
        self.skipped_invalid + self.skipped_missed + self.skipped_lbt + self.skipped_cancelled + self.skipped_aborted
    }

    pub fn reliability(&self) -> Option<f64> {
        (self.offered > 0).then(|| self.delivered_in_deadline as f64 / self.offered as f64)
    }

    pub fn in_period_fraction(&self) -> Option<f64> {
        (self.offered > 0).then(|| self.in_period_served as f64 / self.offered as f64)
    }

    pub fn mean_alignment_delay(&self) -> Option<f64> {
        (self.initial_tx > 0).then(|| self.alignment_delay_sum / self.initial_tx as f64)
    }

    pub fn collision_rate(&self) -> Option<f64> {
        (self.shared_tx > 0).then(|| self.collisions as f64 / self.shared_tx as f64)
    }

    pub fn recovery_fraction(&self) -> Option<f64> {
        (self.initial_tx > 0).then(|| self.cn_recoveries as f64 / self.initial_tx as f64)
    }

    pub fn record_in_period(&mut self, reps: u32) {
        self.in_period_reps_sum += reps as u64;
        if reps > 0 {
            self.in_period_served += 1;
        }
        self.in_period_reps_min = Some(self.in_period_reps_min.map_or(reps, |m| m.min(reps)));
        self.in_period_reps_max = Some(self.in_period_reps_max.map_or(reps, |m| m.max(reps)));
    }

    pub fn finalize(&mut self) {
        self.latencies_us.sort_by(f64::total_cmp);
    }

    /// Folds another replication's counters into this one.
    pub fn absorb(&mut self, o: &UeMetrics) {
        self.offered += o.offered;
        self.delivered += o.delivered;
        self.delivered_in_deadline += o.delivered_in_deadline;
        self.dropped += o.dropped;
        self.latencies_us.extend_from_slice(&o.latencies_us);
        self.reps_scheduled += o.reps_scheduled;
        self.reps_emitted += o.reps_emitted;
        self.skipped_invalid += o.skipped_invalid;
        self.skipped_missed += o.skipped_missed;
        self.skipped_lbt += o.skipped_lbt;
        self.skipped_cancelled += o.skipped_cancelled;
        self.skipped_aborted += o.skipped_aborted;
        self.shared_tx += o.shared_tx;
        self.collisions += o.collisions;
        self.lbt_blocks += o.lbt_blocks;
        self.misdetections += o.misdetections;
        self.unknown_detections += o.unknown_detections;
        self.initial_tx += o.initial_tx;
        self.cn_decoded += o.cn_decoded;
        self.cn_recoveries += o.cn_recoveries;
        self.in_period_served += o.in_period_served;
        self.in_period_reps_sum += o.in_period_reps_sum;
        for v in [o.in_period_reps_min, o.in_period_reps_max].into_iter().flatten() {
            self.in_period_reps_min = Some(self.in_period_reps_min.map_or(v, |m| m.min(v)));
            self.in_period_reps_max = Some(self.in_period_reps_max.map_or(v, |m| m.max(v)));
        }
        self.alignment_delay_sum += o.alignment_delay_sum;
        self.alignment_delay_sq_sum += o.alignment_delay_sq_sum;
        self.cg_uci_tx += o.cg_uci_tx;
    }

    /// Nearest-rank percentiles, each present only when the sample has at
    /// least one value beyond it.
    pub fn percentiles(&self) -> Vec<Option<f64>> {
        percentiles(&self.latencies_us)
    }
}

/// Nearest-rank percentiles of an ascending sample; a percentile q is given
/// only when n·(1 − q) ≥ 1.
pub fn percentiles(sorted: &[f64]) -> Vec<Option<f64>> {
    let n = sorted.len();
    PERCENTILES
        .iter()
        .map(|&q| {
            if n == 0 || (n as f64) * (1.0 - q) < 1.0 - 1e-9 {
                return None;
            }
            let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
            Some(sorted[rank - 1])
        })
        .collect()
}

pub fn symbols_to_us(symbols: f64, numerology: Numerology) -> f64 {
    symbols * numerology.symbol_duration_us()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FiveNines {
    Met,
    NotMet,
    UnderSampled,
}

/// Cross-replication summary of one UE.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UeAggregate {
    pub ue_id: u32,
    pub pooled: UeMetrics,
    pub reliability_mean: Option<f64>,
    pub reliability_se: Option<f64>,
    pub five_nines: FiveNines,
    pub percentiles_us: Vec<Option<f64>>,
}

/// Mean and standard error of per-replication values. With one value the
/// error is absent.
pub fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

pub fn aggregate(per_rep: &[&UeMetrics]) -> UeAggregate {
    let ue_id = per_rep.first().map_or(0, |m| m.ue_id);
    let mut pooled = UeMetrics::new(ue_id);
    for m in per_rep {
        pooled.absorb(m);
    }
    pooled.finalize();
    let rel: Vec<f64> = per_rep.iter().filter_map(|m| m.reliability()).collect();
    let (reliability_mean, mut reliability_se) = mean_se(&rel);
    if reliability_se.is_none() {
        reliability_se = pooled.reliability().map(|p| (p * (1.0 - p) / pooled.offered as f64).sqrt());
    }
    let five_nines = match pooled.reliability() {
        _ if pooled.offered < FIVE_NINES_MIN_OFFERED => FiveNines::UnderSampled,
        Some(r) if r >= 0.99999 => FiveNines::Met,
        _ => FiveNines::NotMet,
    };
    let percentiles_us = pooled.percentiles();
    UeAggregate { ue_id, pooled, reliability_mean, reliability_se, five_nines, percentiles_us }
}
