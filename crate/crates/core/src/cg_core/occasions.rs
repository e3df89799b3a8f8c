use std::ops::Range;

use serde::Serialize;

use super::config::{CgConfig, RepetitionType};
use super::profile::{FeatureProfile, StartRule};
use super::CgError;
use crate::time_grid::{self, CarrierId, Segment, TddPattern, SYMBOLS_PER_SLOT};

/// One transmission opportunity of a configured grant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransmissionOccasion {
    pub cg_id: u8,
    pub period_index: u64,
    pub index_in_period: u32,
    /// Period-anchored RV label.
    pub rv: u8,
    /// False when TDD removed every symbol of the occasion.
    pub valid: bool,
    /// Transmitted pieces; empty when `valid` is false.
    pub segments: Vec<Segment>,
    pub nominal_start: u64,
    pub nominal_end: u64,
    pub carrier_id: CarrierId,
}

impl TransmissionOccasion {
    pub fn start(&self) -> u64 {
        self.segments.first().map_or(self.nominal_start, |s| s.span.abs_start())
    }

    pub fn end(&self) -> u64 {
        self.segments.iter().map(|s| s.span.abs_end()).max().unwrap_or(self.nominal_end)
    }

    pub fn symbol_count(&self) -> u32 {
        self.segments.iter().map(|s| s.span.length).sum()
    }

    /// True if the TDD pattern removed part (not all) of the occasion.
    pub fn truncated(&self) -> bool {
        self.valid && u64::from(self.symbol_count()) < self.nominal_end - self.nominal_start
    }
}

pub fn period_start_slot(cfg: &CgConfig, period_index: u64) -> u64 {
    cfg.offset_slots as u64 + period_index * cfg.period_slots as u64
}

/// Index of the period whose span contains `slot`, if any period started yet.
pub fn period_containing(cfg: &CgConfig, slot: u64) -> Option<u64> {
    slot.checked_sub(cfg.offset_slots as u64).map(|d| d / cfg.period_slots as u64)
}

/// Nominal layout of one period before any TDD filtering.
fn nominal_segments(cfg: &CgConfig, profile: FeatureProfile, period_index: u64) -> Result<Vec<Segment>, CgError> {
    let s0 = period_start_slot(cfg, period_index);
    let uplink = TddPattern::all_uplink();
    layout(cfg, profile, s0, &uplink)
}

fn layout(cfg: &CgConfig, profile: FeatureProfile, s0: u64, tdd: &TddPattern) -> Result<Vec<Segment>, CgError> {
    let carrier = cfg.carrier_id;
    let segs = match (profile, cfg.repetition_type) {
        (FeatureProfile::NruR16, _) => {
            let mut out = Vec::new();
            for slot_i in 0..cfg.nru_slots {
                let per_slot = time_grid::segment_type_b(
                    carrier,
                    s0 + slot_i as u64,
                    cfg.sliv.start_symbol,
                    cfg.sliv.length,
                    cfg.nru_tos_per_slot,
                    tdd,
                    false,
                )?;
                out.extend(per_slot.into_iter().map(|s| Segment {
                    nominal_index: slot_i * cfg.nru_tos_per_slot + s.nominal_index,
                    ..s
                }));
            }
            out
        }
        (_, RepetitionType::A) => time_grid::enumerate_type_a(cfg.sliv.at(carrier, s0)?, cfg.repetitions, cfg.gap_slots, tdd)?,
        (_, RepetitionType::B) => time_grid::segment_type_b(
            carrier,
            s0,
            cfg.sliv.start_symbol,
            cfg.sliv.length,
            cfg.repetitions,
            tdd,
            profile.type_b_cross_slot(),
        )?,
    };
    Ok(segs)
}

fn nominal_bounds(cfg: &CgConfig, profile: FeatureProfile, s0: u64, index: u32) -> (u64, u64) {
    let sps = SYMBOLS_PER_SLOT as u64;
    let l = cfg.sliv.length as u64;
    let start = match (profile, cfg.repetition_type) {
        (FeatureProfile::NruR16, _) => {
            let slot = s0 + (index / cfg.nru_tos_per_slot) as u64;
            slot * sps + cfg.sliv.start_symbol as u64 + (index % cfg.nru_tos_per_slot) as u64 * l
        }
        (_, RepetitionType::A) => (s0 + index as u64 * (1 + cfg.gap_slots as u64)) * sps + cfg.sliv.start_symbol as u64,
        (_, RepetitionType::B) => s0 * sps + cfg.sliv.start_symbol as u64 + index as u64 * l,
    };
    let mut end = start + l;
    if cfg.repetition_type == RepetitionType::B && !profile.type_b_cross_slot() {
        end = end.min((start / sps + 1) * sps);
    }
    (start, end)
}

/// Occasions of one period, in index order, including invalid ones.
pub fn occasions_in_period(
    cfg: &CgConfig,
    profile: FeatureProfile,
    tdd: &TddPattern,
    period_index: u64,
    complement: Option<CarrierId>,
) -> Result<Vec<TransmissionOccasion>, CgError> {
    let s0 = period_start_slot(cfg, period_index);
    let segments = match complement {
        None => layout(cfg, profile, s0, tdd)?,
        Some(secondary) => time_grid::complementary_carrier_map(&nominal_segments(cfg, profile, period_index)?, tdd, secondary),
    };
    let count = cfg.occasions_per_period(profile);
    let period_end = (s0 + cfg.period_slots as u64) * SYMBOLS_PER_SLOT as u64;
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..count {
        let segs: Vec<Segment> = segments.iter().filter(|s| s.nominal_index == i).copied().collect();
        let (nominal_start, nominal_end) = nominal_bounds(cfg, profile, s0, i);
        if nominal_end > period_end {
            return Err(CgError::Layout(format!("occasion {i} of grant {} leaves its period", cfg.cg_id)));
        }
        let carrier_id = segs.first().map_or(cfg.carrier_id, |s| s.span.carrier_id);
        out.push(TransmissionOccasion {
            cg_id: cfg.cg_id,
            period_index,
            index_in_period: i,
            rv: cfg.rv_pattern.rv_at(i),
            valid: !segs.is_empty(),
            segments: segs,
            nominal_start,
            nominal_end,
            carrier_id,
        });
    }
    Ok(out)
}

/// Every occasion of every period starting inside `window` (slot range).
pub fn enumerate_occasions(
    cfg: &CgConfig,
    profile: FeatureProfile,
    tdd: &TddPattern,
    window: Range<u64>,
) -> Result<Vec<TransmissionOccasion>, CgError> {
    cfg.validate(profile)?;
    let mut out = Vec::new();
    let first = match window.start.checked_sub(cfg.offset_slots as u64) {
        Some(d) => d.div_ceil(cfg.period_slots as u64),
        None => 0,
    };
    let mut n = first;
    while period_start_slot(cfg, n) < window.end {
        out.extend(occasions_in_period(cfg, profile, tdd, n, None)?);
        n += 1;
    }
    Ok(out)
}

/// Occasion indices (0-based) at which a new transport block may start.
pub fn allowed_start_indices(cfg: &CgConfig, profile: FeatureProfile) -> Vec<u32> {
    let k = cfg.repetitions;
    if profile == FeatureProfile::NruR16 {
        return (0..cfg.occasions_per_period(profile)).collect();
    }
    if cfg.flexible_start && profile != FeatureProfile::NrR15 {
        return (0..k).collect();
    }
    match profile.start_rule() {
        StartRule::FirstOrRv0 if cfg.starting_from_rv0 && k < 8 => (0..k).filter(|&i| cfg.rv_pattern.rv_at(i) == 0).collect(),
        _ => vec![0],
    }
}

/// RV used on occasion `index` when the transport block started at `start`.
pub fn rv_for_start(cfg: &CgConfig, start: u32, index: u32) -> u8 {
    debug_assert!(index >= start);
    if cfg.flexible_start {
        cfg.rv_pattern.rv_at(index - start)
    } else {
        cfg.rv_pattern.rv_at(index)
    }
}

/// Occasions usable under the RV0-anchored rule, for an arrival at 1-based
/// occasion `b` with RV0 every `a` occasions. Clamped at zero.
pub fn occasions_available_legacy(k: u32, a: u32, b: u32) -> u32 {
    if b == 0 || b > k || a == 0 {
        return 0;
    }
    let skipped = (b - 1).div_ceil(a) * a;
    k.saturating_sub(skipped)
}

/// Occasions usable when the RV pattern is anchored at the arrival.
pub fn occasions_available_flexible(k: u32, b: u32) -> u32 {
    if b == 0 || b > k {
        return 0;
    }
    k - b + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg_core::config::Sliv;
    use crate::cg_core::RvPattern;

    fn slots(tos: &[TransmissionOccasion]) -> Vec<u64> {
        tos.iter().map(|t| t.start() / 14).collect()
    }

    #[test]
    fn slot_aggregation_two_periods() {
        let cfg = CgConfig::new(0, 4, 2, RvPattern::Rv0303);
        let tos = enumerate_occasions(&cfg, FeatureProfile::NrR15, &TddPattern::all_uplink(), 0..8).unwrap();
        assert_eq!(slots(&tos), vec![0, 1, 4, 5]);
        assert_eq!(tos.iter().map(|t| t.rv).collect::<Vec<_>>(), vec![0, 3, 0, 3]);
    }

    #[test]
    fn single_repetition_one_occasion_per_period() {
        for p in RvPattern::ALL {
            let cfg = CgConfig::new(0, 2, 1, p);
            let tos = enumerate_occasions(&cfg, FeatureProfile::NrR16, &TddPattern::all_uplink(), 0..10).unwrap();
            assert_eq!(tos.len(), 5);
        }
    }

    #[test]
    fn nru_occasion_product() {
        let mut cfg = CgConfig::new(0, 4, 2, RvPattern::Rv0000);
        cfg.sliv = Sliv { start_symbol: 0, length: 7 };
        cfg.nru_tos_per_slot = 2;
        cfg.nru_slots = 3;
        let tos = enumerate_occasions(&cfg, FeatureProfile::NruR16, &TddPattern::all_uplink(), 0..4).unwrap();
        assert_eq!(tos.len(), 6);
        let starts: Vec<u64> = tos.iter().map(|t| t.start()).collect();
        assert_eq!(starts, vec![0, 7, 14, 21, 28, 35]);
    }

    #[test]
    fn window_respects_offset() {
        let mut cfg = CgConfig::new(1, 4, 1, RvPattern::Rv0000);
        cfg.offset_slots = 1;
        let tos = enumerate_occasions(&cfg, FeatureProfile::NrR16, &TddPattern::all_uplink(), 2..12).unwrap();
        assert_eq!(slots(&tos), vec![5, 9]);
    }

    #[test]
    fn tdd_marks_invalid_occasions() {
        let tdd = TddPattern::from_slot_strings(&["UUUUUUUUUUUUUU", "DDDDDDDDDDDDDD"]).unwrap();
        let cfg = CgConfig::new(0, 4, 2, RvPattern::Rv0000);
        let tos = occasions_in_period(&cfg, FeatureProfile::NrR16, &tdd, 0, None).unwrap();
        assert!(tos[0].valid);
        assert!(!tos[1].valid);
        let tos = occasions_in_period(&cfg, FeatureProfile::NrR16, &tdd, 0, Some(1)).unwrap();
        assert!(tos.iter().all(|t| t.valid));
        assert_eq!(tos[1].carrier_id, 1);
    }

    #[test]
    fn start_rules() {
        let mut cfg = CgConfig::new(0, 16, 4, RvPattern::Rv0303);
        cfg.starting_from_rv0 = true;
        assert_eq!(allowed_start_indices(&cfg, FeatureProfile::NrR16), vec![0, 2]);
        cfg.repetitions = 8;
        assert_eq!(allowed_start_indices(&cfg, FeatureProfile::NrR16), vec![0]);
        for p in RvPattern::ALL {
            let cfg = CgConfig::new(0, 16, 4, p);
            assert_eq!(allowed_start_indices(&cfg, FeatureProfile::NrR15), vec![0]);
            assert_eq!(allowed_start_indices(&cfg, FeatureProfile::NrR16), vec![0]);
        }
        let mut cfg = CgConfig::new(0, 16, 4, RvPattern::Rv0231);
        cfg.flexible_start = true;
        assert_eq!(allowed_start_indices(&cfg, FeatureProfile::NrR16), vec![0, 1, 2, 3]);
    }

    #[test]
    fn rv_anchoring() {
        let mut cfg = CgConfig::new(0, 8, 4, RvPattern::Rv0231);
        cfg.flexible_start = true;
        assert_eq!(rv_for_start(&cfg, 2, 2), 0);
        assert_eq!(rv_for_start(&cfg, 2, 3), 2);
        for i in 0..4 {
            assert_eq!(rv_for_start(&cfg, 0, i), cfg.rv_pattern.rv_at(i));
        }
        let cfg = CgConfig::new(0, 8, 4, RvPattern::Rv0303);
        for b0 in 0..=3 {
            assert_eq!(rv_for_start(&cfg, b0, 3), 3);
        }
    }

    #[test]
    fn available_counts() {
        assert_eq!(occasions_available_legacy(8, 2, 2), 6);
        assert_eq!(occasions_available_legacy(8, 4, 2), 4);
        assert_eq!(occasions_available_legacy(5, 2, 1), 5);
        assert_eq!(occasions_available_legacy(4, 2, 5), 0);
        assert_eq!(occasions_available_legacy(6, 4, 5), 2);
        assert_eq!(occasions_available_legacy(6, 4, 6), 0);
        assert_eq!(occasions_available_flexible(8, 2), 7);
        assert_eq!(occasions_available_flexible(8, 1), 8);
        assert_eq!(occasions_available_flexible(8, 8), 1);
        assert_eq!(occasions_available_flexible(8, 9), 0);
    }

    #[test]
    fn flexible_dominates_legacy_exhaustively() {
        for k in 1..=12 {
            for a in [1, 2, 4] {
                for b in 1..=k {
                    let flex = occasions_available_flexible(k, b);
                    let legacy = occasions_available_legacy(k, a, b);
                    assert!(flex >= legacy);
                    assert_eq!(flex == legacy, (b - 1) % a == 0, "k={k} a={a} b={b}");
                }
            }
        }
    }
}
