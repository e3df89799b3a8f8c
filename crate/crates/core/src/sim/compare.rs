use serde::Serialize;
use thiserror::Error;

use super::report::run_scenario;
use super::scenario::ScenarioConfig;
use crate::analytics::{mean_alignment_delay, p_at_least_one_rep, p_common_nack_recovery, p_shared_collision, AnalyticsError};
use crate::cg_core::{occasions_available_flexible, occasions_available_legacy};
use crate::ue_mac::TrafficModel;

/// |z| at or above this marks a disagreement.
pub const Z_LIMIT: f64 = 3.0;

pub const METRICS: [&str; 5] = ["at_least_one_rep", "common_nack_recovery", "shared_collision", "occasion_count", "alignment_delay"];

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("no oracle for metric '{0}' (known: {known})", known = METRICS.join(", "))]
    NoOracle(String),
    #[error("scenario does not fit the '{metric}' oracle: {reason}")]
    Shape { metric: String, reason: String },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// Simulated estimate against the closed form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub metric: String,
    pub simulated: f64,
    pub analytic: f64,
    pub standard_error: f64,
    /// Absent when the estimate has no sampling error (exact comparison).
    pub z: Option<f64>,
    pub samples: u64,
    pub pass: bool,
}

impl Comparison {
    fn statistical(metric: &str, simulated: f64, analytic: f64, standard_error: f64, samples: u64) -> Self {
        let z = if standard_error > 0.0 {
            (simulated - analytic) / standard_error
        } else if simulated == analytic {
            0.0
        } else {
            f64::INFINITY
        };
        Self { metric: metric.into(), simulated, analytic, standard_error, z: Some(z), samples, pass: z.abs() < Z_LIMIT }
    }
}

fn shape(metric: &str, reason: impl Into<String>) -> CompareError {
    CompareError::Shape { metric: metric.into(), reason: reason.into() }
}

fn binomial(metric: &str, hits: u64, n: u64, analytic: f64) -> Comparison {
    let p = hits as f64 / n.max(1) as f64;
    let se = (analytic * (1.0 - analytic) / n.max(1) as f64).sqrt();
    Comparison::statistical(metric, p, analytic, se, n)
}

/// Runs the scenario and compares UE 0 (grant 0) with the closed form named
/// by `metric`.
pub fn compare_with_oracle(cfg: &ScenarioConfig, metric: &str) -> Result<Comparison, CompareError> {
    if !METRICS.contains(&metric) {
        return Err(CompareError::NoOracle(metric.into()));
    }
    let ue = cfg.ues.first().ok_or_else(|| shape(metric, "no UEs"))?;
    let cg = ue.configured_grants.first().ok_or_else(|| shape(metric, "UE 0 has no grant"))?;
    let report = run_scenario(cfg);
    let m = &report.aggregates[0].pooled;
    match metric {
        "at_least_one_rep" => {
            let analytic = p_at_least_one_rep(cg.repetitions, cg.period_slots, cg.gap_slots)?;
            Ok(binomial(metric, m.in_period_served, m.offered, analytic))
        }
        "common_nack_recovery" => Ok(binomial(metric, m.cn_recoveries, m.initial_tx, p_common_nack_recovery(&ue.link))),
        "shared_collision" => {
            let pool = cfg.active_pool().ok_or_else(|| shape(metric, "shared pool not enabled"))?;
            Ok(binomial(metric, m.collisions, m.shared_tx, p_shared_collision(&pool)))
        }
        "occasion_count" => {
            let TrafficModel::Deterministic { period_slots, phase_slots, .. } = ue.traffic else {
                return Err(shape(metric, "needs deterministic traffic"));
            };
            if period_slots != cg.period_slots || cg.offset_slots != 0 {
                return Err(shape(metric, "traffic period must equal the grant period with zero offset"));
            }
            let b = phase_slots % period_slots + 1;
            let k = cg.repetitions;
            let analytic = if cg.flexible_start {
                occasions_available_flexible(k, b)
            } else {
                occasions_available_legacy(k, cg.rv_pattern.rv0_spacing(), b)
            } as f64;
            let same = m.in_period_reps_min == m.in_period_reps_max;
            let simulated = if same { m.in_period_reps_min.unwrap_or(0) as f64 } else { f64::NAN };
            Ok(Comparison {
                metric: metric.into(),
                simulated,
                analytic,
                standard_error: 0.0,
                z: None,
                samples: m.offered,
                pass: same && simulated == analytic,
            })
        }
        "alignment_delay" => {
            let TrafficModel::Jittered { period_slots, .. } = ue.traffic else {
                return Err(shape(metric, "needs jittered traffic"));
            };
            let analytic = mean_alignment_delay(period_slots, ue.configured_grants.len() as u32)?;
            let n = m.initial_tx.max(1) as f64;
            let mean = m.alignment_delay_sum / n;
            let var = (m.alignment_delay_sq_sum / n - mean * mean).max(0.0);
            Ok(Comparison::statistical(metric, mean, analytic, (var / n).sqrt(), m.initial_tx))
        }
        _ => Err(CompareError::NoOracle(metric.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg_core::{CgConfig, FeatureProfile, RvPattern};
    use crate::sim::scenario::{MissPolicy, UeConfig};

    #[test]
    fn unknown_metric_has_no_oracle() {
        let cfg = ScenarioConfig::new(FeatureProfile::NrR16, vec![], 10);
        assert!(matches!(compare_with_oracle(&cfg, "throughput"), Err(CompareError::NoOracle(_))));
    }

    #[test]
    fn occasion_count_exact() {
        let mut cg = CgConfig::new(0, 4, 4, RvPattern::Rv0303);
        cg.starting_from_rv0 = true;
        cg.harq_processes = 2;
        cg.cg_timer = Some(4);
        let traffic = TrafficModel::Deterministic { period_slots: 4, phase_slots: 1, payload_bits: 8 };
        let mut ue = UeConfig::new(0, vec![cg], traffic);
        ue.miss_policy = MissPolicy::Drop;
        let cfg = ScenarioConfig::new(FeatureProfile::NrR16, vec![ue], 40);
        cfg.validate().unwrap();
        let c = compare_with_oracle(&cfg, "occasion_count").unwrap();
        assert_eq!(c.analytic, 2.0);
        assert!(c.pass, "{c:?}");
    }

    #[test]
    fn z_score_flags_disagreement() {
        assert!(binomial("x", 500, 1000, 0.5).pass);
        assert!(!binomial("x", 600, 1000, 0.5).pass);
        let exact = Comparison::statistical("x", 1.0, 1.0, 0.0, 1);
        assert_eq!(exact.z, Some(0.0));
    }
}
