//! Closed-form reliability and latency expressions, plus the shared-pool
//! dimensioning search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cg_core::{occasions_available_flexible, occasions_available_legacy};
use crate::gnb_model::LinkModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("domain: {0}")]
    Domain(String),
    #[error("composed error increases from k_plus = {k_plus} to {}", k_plus + 1)]
    NonMonotone { k_plus: u32 },
}

/// Contention pool of `k_plus` occasions per slot shared by `n_ues` UEs,
/// each accessing a given slot with probability `activity_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedPoolConfig {
    pub k_plus: u32,
    pub n_ues: u32,
    pub activity_q: f64,
}

impl SharedPoolConfig {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.k_plus == 0 || self.n_ues == 0 || !(0.0..=1.0).contains(&self.activity_q) {
            return Err(AnalyticsError::Domain(format!("invalid shared pool {self:?}")));
        }
        Ok(())
    }
}

/// Where in the dedicated period the packet arrives (1-based occasion).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arrival {
    /// Each of the K occasions with probability 1/K.
    Uniform,
    At { b: u32 },
}

/// Dedicated-CG side of the composed error: K repetitions, arrival law,
/// start rule and the per-repetition decoding error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DedicatedCgSummary {
    pub k: u32,
    pub arrival: Arrival,
    /// Per-repetition error probability at the operating SINR.
    pub epsilon: f64,
    pub flexible_start: bool,
    /// RV0 spacing, used by the legacy start rule.
    pub rv0_spacing: u32,
}

impl DedicatedCgSummary {
    fn arrival_weights(&self) -> Result<Vec<(u32, f64)>, AnalyticsError> {
        if self.k == 0 || !(0.0..=1.0).contains(&self.epsilon) {
            return Err(AnalyticsError::Domain(format!("invalid dedicated summary {self:?}")));
        }
        match self.arrival {
            Arrival::Uniform => Ok((1..=self.k).map(|b| (b, 1.0 / self.k as f64)).collect()),
            Arrival::At { b } if (1..=self.k).contains(&b) => Ok(vec![(b, 1.0)]),
            Arrival::At { b } => Err(AnalyticsError::Domain(format!("arrival occasion {b} outside 1..={}", self.k))),
        }
    }

    /// Dedicated repetitions left for an arrival at occasion `b`.
    pub fn dedicated_count(&self, b: u32) -> u32 {
        if self.flexible_start {
            occasions_available_flexible(self.k, b)
        } else {
            occasions_available_legacy(self.k, self.rv0_spacing, b)
        }
    }
}

/// Chance that an arrival uniform over `n` slots still reaches one of `k`
/// repetitions spread with `t` empty slots between them.
pub fn p_at_least_one_rep(k: u32, n: u32, t: u32) -> Result<f64, AnalyticsError> {
    if k == 0 {
        return Err(AnalyticsError::Domain("K must be at least 1".into()));
    }
    let span = t * (k - 1) + k;
    if span > n {
        return Err(AnalyticsError::Domain(format!("layout of {span} slots exceeds N = {n}")));
    }
    Ok(span as f64 / n as f64)
}

pub fn p_unknown_detection(link: &LinkModel) -> f64 {
    link.p_t * link.p_e * (1.0 - link.p_d - link.p_md)
}

/// Unknown detection, common NACK decoded, retransmission identified.
pub fn p_common_nack_recovery(link: &LinkModel) -> f64 {
    p_unknown_detection(link) * link.p_cn * link.p_e * link.p_d
}

pub fn p_shared_collision(pool: &SharedPoolConfig) -> f64 {
    1.0 - (1.0 - pool.activity_q / pool.k_plus as f64).powi(pool.n_ues as i32 - 1)
}

/// Per-arrival failure of everything sent for the packet: X dedicated
/// repetitions erring with epsilon and K - X shared ones, each lost to a
/// collision or a decoding error. X = 0 postpones the packet to a full
/// dedicated period.
fn per_arrival_error(ded: &DedicatedCgSummary, x: u32, s: f64) -> f64 {
    let eps = ded.epsilon;
    if x == 0 {
        eps.powi(ded.k as i32)
    } else {
        eps.powi(x as i32) * s.powi((ded.k - x) as i32)
    }
}

fn shared_failure(ded: &DedicatedCgSummary, pool: &SharedPoolConfig) -> f64 {
    let c = p_shared_collision(pool);
    c + (1.0 - c) * ded.epsilon
}

/// Dedicated-only factor: expected failure of the dedicated repetitions.
pub fn p_error_dedicated(ded: &DedicatedCgSummary) -> Result<f64, AnalyticsError> {
    let k = ded.k as i32;
    Ok(ded
        .arrival_weights()?
        .into_iter()
        .map(|(b, w)| {
            let x = ded.dedicated_count(b);
            w * if x == 0 { ded.epsilon.powi(k) } else { ded.epsilon.powi(x as i32) }
        })
        .sum())
}

/// Shared factor: expected failure of the shared remainder.
pub fn p_error_shared(ded: &DedicatedCgSummary, pool: &SharedPoolConfig) -> Result<f64, AnalyticsError> {
    pool.validate()?;
    let s = shared_failure(ded, pool);
    Ok(ded
        .arrival_weights()?
        .into_iter()
        .map(|(b, w)| {
            let x = ded.dedicated_count(b);
            w * if x == 0 { 1.0 } else { s.powi((ded.k - x) as i32) }
        })
        .sum())
}

/// Packet error with a dedicated CG backed by the shared pool, taken as the
/// expectation over the arrival occasion of the joint failure of the
/// dedicated and the shared repetitions.
pub fn composed_error(ded: &DedicatedCgSummary, pool: &SharedPoolConfig) -> Result<f64, AnalyticsError> {
    pool.validate()?;
    let s = shared_failure(ded, pool);
    let e: f64 = ded
        .arrival_weights()?
        .into_iter()
        .map(|(b, w)| w * per_arrival_error(ded, ded.dedicated_count(b), s))
        .sum();
    Ok(e.clamp(0.0, 1.0))
}

pub const DEFAULT_K_MAX: u32 = 64;

/// Smallest `k_plus` in `1..=k_max` meeting `target`, by linear scan.
/// `Ok(None)` when even `k_max` misses it.
pub fn find_min_kplus(
    ded: &DedicatedCgSummary,
    template: &SharedPoolConfig,
    target: f64,
    k_max: u32,
) -> Result<Option<u32>, AnalyticsError> {
    let mut prev: Option<f64> = None;
    for k_plus in 1..=k_max {
        let e = composed_error(ded, &SharedPoolConfig { k_plus, ..*template })?;
        if let Some(p) = prev {
            if e > p + 1e-15 {
                return Err(AnalyticsError::NonMonotone { k_plus: k_plus - 1 });
            }
        }
        if e <= target {
            return Ok(Some(k_plus));
        }
        prev = Some(e);
    }
    Ok(None)
}

/// Mean wait, in slots, from a continuous-uniform arrival to the next CG
/// start when `m` CGs of period `p` start at slots `floor(i p / m)`.
pub fn mean_alignment_delay(p: u32, m: u32) -> Result<f64, AnalyticsError> {
    if m == 0 || p == 0 || m > p {
        return Err(AnalyticsError::Domain(format!("need 1 <= m <= p, got m = {m}, p = {p}")));
    }
    if p.is_multiple_of(m) {
        return Ok(p as f64 / (2.0 * m as f64));
    }
    // Each gap g between consecutive starts contributes g^2 / 2 to the
    // integral of the wait over one period.
    let starts: Vec<u64> = (0..m as u64).map(|i| i * p as u64 / m as u64).collect();
    let total: f64 = (0..starts.len())
        .map(|i| {
            let next = if i + 1 < starts.len() { starts[i + 1] } else { starts[0] + p as u64 };
            let g = (next - starts[i]) as f64;
            g * g / 2.0
        })
        .sum();
    Ok(total / p as f64)
}
