use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::link::DetectionOutcome;
use crate::cg_core::{DciFormat, DciMessage, FeatureProfile};
use crate::time_grid::SYMBOLS_PER_SLOT;
use crate::ue_mac::GridRef;

fn one_slot() -> u32 {
    1
}

/// gNB processing delays (slots) and the common-NACK switch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackPolicy {
    #[serde(default = "one_slot")]
    pub feedback_delay_slots: u32,
    #[serde(default = "one_slot")]
    pub dfi_delay_slots: u32,
    #[serde(default = "one_slot")]
    pub nack_delay_slots: u32,
    #[serde(default)]
    pub common_nack: bool,
}

impl Default for FeedbackPolicy {
    fn default() -> Self {
        Self { feedback_delay_slots: 1, dfi_delay_slots: 1, nack_delay_slots: 1, common_nack: false }
    }
}

/// What the gNB learned about one received transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOutcome {
    pub ue_id: u32,
    pub harq_id: u32,
    pub detection: DetectionOutcome,
    pub decoded: bool,
    pub grid: GridRef,
    /// HARQ pool size of the identified UE; sizes the CG-DFI bitmap.
    pub harq_processes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FeedbackMessage {
    RetxDci { ue_id: u32, at: u64, dci: DciMessage },
    /// ACK bitmap over all HARQ processes of the UE; bits for processes not
    /// reported since `generated_at` stay 0.
    CgDfi { ue_id: u32, at: u64, generated_at: u64, ack_bitmap: Vec<bool> },
    CommonNack { at: u64, grid: GridRef },
}

impl FeedbackMessage {
    pub fn at(&self) -> u64 {
        match self {
            FeedbackMessage::RetxDci { at, .. } | FeedbackMessage::CgDfi { at, .. } | FeedbackMessage::CommonNack { at, .. } => *at,
        }
    }
}

/// Feedback generated at end-of-occasion time `now`.
pub fn emit_feedback(profile: FeatureProfile, outcomes: &[ProcessOutcome], policy: &FeedbackPolicy, now: u64) -> Vec<FeedbackMessage> {
    let slot = SYMBOLS_PER_SLOT as u64;
    let mut out = Vec::new();
    let mut dfi: BTreeMap<u32, Vec<bool>> = BTreeMap::new();
    for o in outcomes {
        match o.detection {
            DetectionOutcome::Identified(id) => {
                if profile.dfi() {
                    let map = dfi.entry(id).or_insert_with(|| vec![false; o.harq_processes.max(1) as usize]);
                    if let Some(bit) = map.get_mut(o.harq_id as usize) {
                        *bit |= o.decoded;
                    }
                } else if !o.decoded {
                    out.push(FeedbackMessage::RetxDci {
                        ue_id: id,
                        at: now + policy.feedback_delay_slots as u64 * slot,
                        dci: DciMessage::retx_grant(DciFormat::F0_1, o.harq_id),
                    });
                }
            }
            DetectionOutcome::UnknownDetection if policy.common_nack => {
                out.push(FeedbackMessage::CommonNack { at: now + policy.nack_delay_slots as u64 * slot, grid: o.grid });
            }
            _ => {}
        }
    }
    for (ue_id, ack_bitmap) in dfi {
        out.push(FeedbackMessage::CgDfi { ue_id, at: now + policy.dfi_delay_slots as u64 * slot, generated_at: now, ack_bitmap });
    }
    out
}
