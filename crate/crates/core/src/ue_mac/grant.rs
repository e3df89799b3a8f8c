use serde::Serialize;

use super::UeMacError;
use crate::cg_core::{allowed_start_indices, period_containing, rv_for_start, CgConfig, FeatureProfile, PhyPriority, TransmissionOccasion};
use crate::time_grid::{CarrierId, Segment, SYMBOLS_PER_SLOT};

/// Uplink control information attached to every NR-U CG PUSCH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CgUci {
    pub harq_id: u32,
    pub rv: u8,
    pub ndi: u8,
    pub cot_sharing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TxResource {
    Configured,
    Dynamic,
    Shared,
}

/// One PUSCH emitted by a UE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transmission {
    pub ue_id: u32,
    pub cg_id: u8,
    pub period_index: u64,
    pub occasion_index: u32,
    pub rv: u8,
    pub harq_id: u32,
    pub ndi: u8,
    pub segments: Vec<Segment>,
    pub carrier_id: CarrierId,
    pub resource: TxResource,
    pub cg_uci: Option<CgUci>,
}

impl Transmission {
    pub fn start(&self) -> u64 {
        self.segments.first().map_or(0, |s| s.span.abs_start())
    }

    pub fn end(&self) -> u64 {
        self.segments.iter().map(|s| s.span.abs_end()).max().unwrap_or(0)
    }
}

/// Outcome of grant selection for a new arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrantChoice {
    pub cg_id: u8,
    pub period_index: u64,
    pub start_index: u32,
    pub start_symbol: u64,
    /// The chosen occasion lies in a later period than the arrival.
    pub waited: bool,
}

/// Number of periods searched ahead before giving up on a grant.
const SEARCH_PERIODS: u64 = 4;

/// Picks the grant and occasion whose permitted start comes first at or
/// after `ready` (arrival plus processing margin). Ties go to the lower
/// `cg_id`. `occasions(cfg, period)` yields a period's layout and
/// `first_free(cg_id, period)` the lowest occasion index not already taken
/// by another HARQ process.
pub fn select_grant<O, F>(
    cgs: &[&CgConfig],
    profile: FeatureProfile,
    ready: u64,
    mut occasions: O,
    first_free: F,
) -> Option<GrantChoice>
where
    O: FnMut(&CgConfig, u64) -> Vec<TransmissionOccasion>,
    F: Fn(u8, u64) -> u32,
{
    let ready_slot = ready / SYMBOLS_PER_SLOT as u64;
    let mut best: Option<GrantChoice> = None;
    for cfg in cgs {
        let allowed = allowed_start_indices(cfg, profile);
        let arrival_period = period_containing(cfg, ready_slot);
        let first_period = arrival_period.unwrap_or(0);
        let last_index = match profile {
            FeatureProfile::NruR16 => cfg.occasions_per_period(profile),
            _ => cfg.repetitions,
        };
        'periods: for period in first_period..first_period + SEARCH_PERIODS {
            let tos = occasions(cfg, period);
            let free = first_free(cfg.cg_id, period);
            for &i in allowed.iter().filter(|&&i| i >= free) {
                let to = &tos[i as usize];
                let usable = to.nominal_start >= ready && tos[i as usize..last_index as usize].iter().any(|t| t.valid);
                if usable {
                    let choice = GrantChoice {
                        cg_id: cfg.cg_id,
                        period_index: period,
                        start_index: i,
                        start_symbol: to.nominal_start,
                        waited: arrival_period.is_some_and(|a| a != period),
                    };
                    let better = match best {
                        None => true,
                        Some(b) => (choice.start_symbol, choice.cg_id) < (b.start_symbol, b.cg_id),
                    };
                    if better {
                        best = Some(choice);
                    }
                    break 'periods;
                }
            }
        }
    }
    best
}

/// Repetitions planned for one transport block within one period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedRepetitions {
    pub transmissions: Vec<Transmission>,
    /// Occasions in range that TDD made unusable.
    pub skipped_invalid: u32,
    /// Occasions before the start index that the arrival missed.
    pub skipped_missed: u32,
}

pub struct RepetitionRequest<'a> {
    pub ue_id: u32,
    pub cfg: &'a CgConfig,
    pub profile: FeatureProfile,
    pub occasions: &'a [TransmissionOccasion],
    pub start: u32,
    pub harq_id: u32,
    pub ndi: u8,
}

/// Lays out the repetitions of one transport block from occasion `start`.
///
/// NR grants use occasions `start..K` with RVs from [`rv_for_start`]. NR-U
/// grants use up to K occasions from `start`, anchor the RV pattern at the
/// first one and carry CG-UCI.
pub fn transmit_repetitions(req: RepetitionRequest<'_>) -> Result<PlannedRepetitions, UeMacError> {
    let RepetitionRequest { ue_id, cfg, profile, occasions, start, harq_id, ndi } = req;
    let allowed = allowed_start_indices(cfg, profile);
    if !allowed.contains(&start) {
        return Err(UeMacError::IllegalStart { start, allowed });
    }
    let k = cfg.repetitions;
    let (end, skipped_missed) = match profile {
        FeatureProfile::NruR16 => ((start + k).min(cfg.occasions_per_period(profile)), 0),
        _ => (k, start),
    };
    let mut transmissions = Vec::new();
    let mut skipped_invalid = 0;
    for to in &occasions[start as usize..end as usize] {
        if !to.valid {
            skipped_invalid += 1;
            continue;
        }
        let rv = match profile {
            FeatureProfile::NruR16 => cfg.rv_pattern.rv_at(to.index_in_period - start),
            _ => rv_for_start(cfg, start, to.index_in_period),
        };
        let cg_uci = profile.cg_uci().then_some(CgUci { harq_id, rv, ndi, cot_sharing: false });
        transmissions.push(Transmission {
            ue_id,
            cg_id: cfg.cg_id,
            period_index: to.period_index,
            occasion_index: to.index_in_period,
            rv,
            harq_id,
            ndi,
            segments: to.segments.clone(),
            carrier_id: to.carrier_id,
            resource: TxResource::Configured,
            cg_uci,
        });
    }
    Ok(PlannedRepetitions { transmissions, skipped_invalid, skipped_missed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantKind {
    Dynamic,
    Configured { cg_id: u8 },
}

/// A grant competing for overlapping symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrantClaim {
    pub kind: GrantKind,
    pub priority: PhyPriority,
    pub start: u64,
    pub has_data: bool,
    /// NR-U autonomous retransmission (implicitly high priority).
    pub nru_retransmission: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapResolution {
    pub chosen: Vec<usize>,
    pub cancelled: Vec<usize>,
}

fn earliest(claims: &[GrantClaim], among: impl Iterator<Item = usize>) -> Option<usize> {
    among.min_by_key(|&i| (claims[i].start, i))
}

/// Resolves grants that overlap in time on one carrier. One transport block
/// survives; indices of the rest are returned as cancelled.
pub fn resolve_overlap(profile: FeatureProfile, claims: &[GrantClaim]) -> OverlapResolution {
    let all = 0..claims.len();
    let dynamic = |i: &usize| claims[*i].kind == GrantKind::Dynamic;
    let winner = match profile {
        FeatureProfile::NrR15 => earliest(claims, all.clone().filter(dynamic)).or_else(|| earliest(claims, all.clone())),
        FeatureProfile::NrR16 => {
            let top = claims.iter().map(|c| c.priority).max();
            let top_ix: Vec<usize> = all.clone().filter(|&i| Some(claims[i].priority) == top).collect();
            earliest(claims, top_ix.iter().copied().filter(dynamic)).or_else(|| earliest(claims, top_ix.into_iter()))
        }
        FeatureProfile::NruR16 => earliest(claims, all.clone().filter(|&i| claims[i].nru_retransmission))
            .or_else(|| earliest(claims, all.clone().filter(dynamic)))
            .or_else(|| earliest(claims, all.clone())),
    };
    match winner {
        None => OverlapResolution { chosen: vec![], cancelled: vec![] },
        Some(w) => OverlapResolution {
            chosen: vec![w],
            cancelled: all.filter(|&i| i != w).collect(),
        },
    }
}
