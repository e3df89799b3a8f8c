use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::time_grid::SYMBOLS_PER_SLOT;

fn default_payload() -> u32 {
    256
}

/// Packet arrival process of one UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficModel {
    /// No traffic at all.
    None,
    /// One packet every `period_slots`, at the start of slot `phase_slots`.
    Deterministic {
        period_slots: u32,
        #[serde(default)]
        phase_slots: u32,
        #[serde(default = "default_payload")]
        payload_bits: u32,
    },
    /// One packet per `n_slots` window, at the start of a uniformly drawn slot.
    UniformInPeriod {
        n_slots: u32,
        #[serde(default = "default_payload")]
        payload_bits: u32,
    },
    /// One packet every `period_slots`, delayed by a continuous uniform jitter
    /// in `[0, jitter_slots)`.
    Jittered {
        period_slots: u32,
        #[serde(default)]
        phase_slots: u32,
        jitter_slots: f64,
        #[serde(default = "default_payload")]
        payload_bits: u32,
    },
}

impl TrafficModel {
    pub fn payload_bits(&self) -> u32 {
        match self {
            TrafficModel::None => 0,
            TrafficModel::Deterministic { payload_bits, .. }
            | TrafficModel::UniformInPeriod { payload_bits, .. }
            | TrafficModel::Jittered { payload_bits, .. } => *payload_bits,
        }
    }

    /// Length of one arrival window in slots; `None` without traffic.
    pub fn window_slots(&self) -> Option<u32> {
        match self {
            TrafficModel::None => None,
            TrafficModel::Deterministic { period_slots, .. } | TrafficModel::Jittered { period_slots, .. } => Some(*period_slots),
            TrafficModel::UniformInPeriod { n_slots, .. } => Some(*n_slots),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            TrafficModel::None => Ok(()),
            TrafficModel::Deterministic { period_slots, phase_slots, .. } => {
                if *period_slots == 0 || phase_slots >= period_slots {
                    Err(format!("deterministic traffic needs 0 <= phase < period, got {phase_slots}/{period_slots}"))
                } else {
                    Ok(())
                }
            }
            TrafficModel::UniformInPeriod { n_slots, .. } => {
                if *n_slots == 0 {
                    Err("uniform_in_period traffic needs n_slots >= 1".into())
                } else {
                    Ok(())
                }
            }
            TrafficModel::Jittered { period_slots, jitter_slots, .. } => {
                if *period_slots == 0 || !(0.0..=*period_slots as f64).contains(jitter_slots) {
                    Err("jittered traffic needs period >= 1 and 0 <= jitter <= period".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Arrival instant, in (fractional) symbols, of the packet of window `n`.
    pub fn arrival_instant<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Option<f64> {
        let sps = SYMBOLS_PER_SLOT as f64;
        match self {
            TrafficModel::None => None,
            TrafficModel::Deterministic { period_slots, phase_slots, .. } => {
                Some((n as f64 * *period_slots as f64 + *phase_slots as f64) * sps)
            }
            TrafficModel::UniformInPeriod { n_slots, .. } => {
                let slot = rng.gen_range(0..*n_slots);
                Some((n as f64 * *n_slots as f64 + slot as f64) * sps)
            }
            TrafficModel::Jittered { period_slots, phase_slots, jitter_slots, .. } => {
                let jitter = if *jitter_slots > 0.0 { rng.gen_range(0.0..*jitter_slots) } else { 0.0 };
                Some((n as f64 * *period_slots as f64 + *phase_slots as f64 + jitter) * sps)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Packet {
    pub id: u64,
    pub ue_id: u32,
    /// Exact arrival instant in symbols.
    pub arrival_instant: f64,
    /// First symbol boundary at or after the arrival instant.
    pub arrival_time: u64,
    pub size_bits: u32,
    /// Latency budget in symbols.
    pub deadline: u64,
    pub delivered_time: Option<u64>,
}

impl Packet {
    pub fn new(id: u64, ue_id: u32, arrival_instant: f64, size_bits: u32, deadline: u64) -> Self {
        Self {
            id,
            ue_id,
            arrival_instant,
            arrival_time: arrival_instant.ceil() as u64,
            size_bits,
            deadline,
            delivered_time: None,
        }
    }

    /// Latency in symbols if delivered.
    pub fn latency(&self) -> Option<f64> {
        self.delivered_time.map(|t| t as f64 - self.arrival_instant)
    }

    pub fn within_deadline(&self) -> bool {
        self.latency().is_some_and(|l| l <= self.deadline as f64)
    }
}
