use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::profile::{DciFormat, FeatureProfile, FeatureRow};
use super::CgError;
use crate::time_grid::{CarrierId, SymbolSpan, SYMBOLS_PER_SLOT};

/// Redundancy-version sequence applied across the occasions of a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RvPattern {
    Rv0000,
    Rv0303,
    Rv0231,
}

impl RvPattern {
    pub const ALL: [RvPattern; 3] = [RvPattern::Rv0000, RvPattern::Rv0303, RvPattern::Rv0231];

    pub fn sequence(self) -> [u8; 4] {
        match self {
            RvPattern::Rv0000 => [0, 0, 0, 0],
            RvPattern::Rv0303 => [0, 3, 0, 3],
            RvPattern::Rv0231 => [0, 2, 3, 1],
        }
    }

    pub fn rv_at(self, index: u32) -> u8 {
        self.sequence()[(index % 4) as usize]
    }

    /// Distance between consecutive RV0 positions.
    pub fn rv0_spacing(self) -> u32 {
        match self {
            RvPattern::Rv0000 => 1,
            RvPattern::Rv0303 => 2,
            RvPattern::Rv0231 => 4,
        }
    }

    /// The pattern whose RV0 spacing is `a`.
    pub fn with_rv0_spacing(a: u32) -> Option<Self> {
        RvPattern::ALL.into_iter().find(|p| p.rv0_spacing() == a)
    }

    pub fn is_self_decodable(rv: u8) -> bool {
        rv == 0 || rv == 3
    }
}

impl FromStr for RvPattern {
    type Err = CgError;
    fn from_str(s: &str) -> Result<Self, CgError> {
        match s {
            "0000" => Ok(RvPattern::Rv0000),
            "0303" => Ok(RvPattern::Rv0303),
            "0231" => Ok(RvPattern::Rv0231),
            other => Err(CgError::Field(format!("unknown RV pattern {other:?}"))),
        }
    }
}

impl fmt::Display for RvPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.sequence().iter().map(|d| char::from(b'0' + d)).collect();
        f.write_str(&s)
    }
}

impl Serialize for RvPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RvPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgType {
    #[default]
    Type1,
    Type2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RepetitionType {
    #[default]
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhyPriority {
    #[default]
    Low,
    High,
}

/// Start symbol and length inside a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sliv {
    pub start_symbol: u32,
    pub length: u32,
}

impl Sliv {
    pub const FULL_SLOT: Sliv = Sliv { start_symbol: 0, length: 14 };

    pub fn at(self, carrier_id: CarrierId, slot: u64) -> Result<SymbolSpan, CgError> {
        Ok(SymbolSpan::new(carrier_id, slot, self.start_symbol, self.length)?)
    }
}

pub const DEFAULT_RBG_SIZE: u32 = 4;
pub const INTERLACE_COUNT: u32 = 10;

/// Frequency allocation. Only used to find overlaps between grants.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fdra {
    /// RBG bitmap, written as a string of '0'/'1'.
    Type0 {
        bitmap: String,
        #[serde(default = "default_rbg_size")]
        rbg_size: u32,
    },
    /// Contiguous RBs.
    Type1 { start_rb: u32, num_rbs: u32 },
    /// One interlace out of ten over the configured bandwidth.
    Type2 { interlace: u32, bandwidth_rbs: u32 },
}

fn default_rbg_size() -> u32 {
    DEFAULT_RBG_SIZE
}

impl Default for Fdra {
    fn default() -> Self {
        Fdra::Type1 { start_rb: 0, num_rbs: 1 }
    }
}

impl Fdra {
    pub fn resource_blocks(&self) -> Result<BTreeSet<u32>, CgError> {
        match self {
            Fdra::Type0 { bitmap, rbg_size } => {
                if *rbg_size == 0 {
                    return Err(CgError::Field("rbg_size must be positive".into()));
                }
                let mut out = BTreeSet::new();
                for (g, c) in bitmap.chars().enumerate() {
                    match c {
                        '1' => out.extend(g as u32 * rbg_size..(g as u32 + 1) * rbg_size),
                        '0' => {}
                        _ => return Err(CgError::Field(format!("bad RBG bitmap {bitmap:?}"))),
                    }
                }
                Ok(out)
            }
            Fdra::Type1 { start_rb, num_rbs } => Ok((*start_rb..start_rb + num_rbs).collect()),
            Fdra::Type2 { interlace, bandwidth_rbs } => {
                if *interlace >= INTERLACE_COUNT {
                    return Err(CgError::Field(format!("interlace {interlace} out of range")));
                }
                Ok((0..*bandwidth_rbs).filter(|rb| rb % INTERLACE_COUNT == *interlace).collect())
            }
        }
    }
}

fn default_one() -> u32 {
    1
}

/// One configured grant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgConfig {
    pub cg_id: u8,
    #[serde(default)]
    pub cg_type: CgType,
    pub period_slots: u32,
    #[serde(default)]
    pub offset_slots: u32,
    pub sliv: Sliv,
    #[serde(default)]
    pub carrier_id: CarrierId,
    #[serde(default)]
    pub repetition_type: RepetitionType,
    pub repetitions: u32,
    pub rv_pattern: RvPattern,
    #[serde(default)]
    pub starting_from_rv0: bool,
    #[serde(default)]
    pub phy_priority: PhyPriority,
    /// Slots left empty between consecutive occasions.
    #[serde(default)]
    pub gap_slots: u32,
    /// Anchor the RV pattern at the first transmitted occasion.
    #[serde(default)]
    pub flexible_start: bool,
    #[serde(default)]
    pub fdra: Fdra,
    #[serde(default = "default_one")]
    pub nru_tos_per_slot: u32,
    #[serde(default = "default_one")]
    pub nru_slots: u32,
    /// Retransmission timer in occasions (NR-U only).
    #[serde(default)]
    pub cg_retx_timer: Option<u32>,
    /// Configured-grant timer in slots; defaults to two periods.
    #[serde(default)]
    pub cg_timer: Option<u32>,
    #[serde(default = "default_one")]
    pub harq_processes: u32,
    #[serde(default)]
    pub activation_dci_format: Option<DciFormat>,
}

impl CgConfig {
    /// Full-slot Type A grant with the given period and K.
    pub fn new(cg_id: u8, period_slots: u32, repetitions: u32, rv_pattern: RvPattern) -> Self {
        Self {
            cg_id,
            cg_type: CgType::Type1,
            period_slots,
            offset_slots: 0,
            sliv: Sliv::FULL_SLOT,
            carrier_id: 0,
            repetition_type: RepetitionType::A,
            repetitions,
            rv_pattern,
            starting_from_rv0: false,
            phy_priority: PhyPriority::Low,
            gap_slots: 0,
            flexible_start: false,
            fdra: Fdra::default(),
            nru_tos_per_slot: 1,
            nru_slots: 1,
            cg_retx_timer: None,
            cg_timer: None,
            harq_processes: 1,
            activation_dci_format: None,
        }
    }

    pub fn k(&self) -> u32 {
        self.repetitions
    }

    pub fn cg_timer_slots(&self) -> u32 {
        self.cg_timer.unwrap_or(2 * self.period_slots)
    }

    /// Number of occasions laid out in one period.
    pub fn occasions_per_period(&self, profile: FeatureProfile) -> u32 {
        match profile {
            FeatureProfile::NruR16 => self.nru_tos_per_slot * self.nru_slots,
            _ => self.repetitions,
        }
    }

    /// Checks the grant against the profile's feature matrix and its own
    /// layout constraints.
    pub fn validate(&self, profile: FeatureProfile) -> Result<(), CgError> {
        if usize::from(self.cg_id) >= 12 {
            return Err(CgError::Field(format!("cg_id {} outside 0..=11", self.cg_id)));
        }
        if self.period_slots == 0 {
            return Err(CgError::Field("period_slots must be at least 1".into()));
        }
        if self.offset_slots >= self.period_slots {
            return Err(CgError::Field(format!(
                "offset_slots {} must be smaller than period_slots {}",
                self.offset_slots, self.period_slots
            )));
        }
        if self.repetitions == 0 {
            return Err(CgError::Field("repetitions must be at least 1".into()));
        }
        if self.harq_processes == 0 || self.harq_processes > 16 {
            return Err(CgError::Field("harq_processes must be in 1..=16".into()));
        }
        self.sliv.at(self.carrier_id, 0)?;
        self.fdra.resource_blocks()?;

        if let Some(format) = self.activation_dci_format {
            if !profile.allows_dci_format(format) {
                return Err(CgError::gating(FeatureRow::DciFormat, format!("{format:?} not available under {profile}")));
            }
        }
        if self.repetition_type == RepetitionType::B && !profile.type_b_repetition() {
            return Err(CgError::gating(FeatureRow::Repetition, format!("Type B repetition not available under {profile}")));
        }
        if self.phy_priority == PhyPriority::High && !profile.phy_priority() {
            return Err(CgError::gating(FeatureRow::PhyPriority, format!("high PHY priority not available under {profile}")));
        }
        if self.cg_retx_timer.is_some() && !profile.autonomous_retransmission() {
            return Err(CgError::gating(
                FeatureRow::AutonomousRetransmission,
                format!("cg_retx_timer requires autonomous retransmission, not available under {profile}"),
            ));
        }
        if profile == FeatureProfile::NrR15 {
            if self.starting_from_rv0 {
                return Err(CgError::gating(FeatureRow::TransmissionBeginning, "startingFromRV0 is a Rel-16 parameter"));
            }
            if self.gap_slots != 0 || self.flexible_start {
                return Err(CgError::Field("repetition enhancements are not available under NR Rel-15".into()));
            }
        }
        if profile == FeatureProfile::NruR16 {
            if self.nru_tos_per_slot == 0 || self.nru_slots == 0 {
                return Err(CgError::Field("nru_tos_per_slot and nru_slots must be at least 1".into()));
            }
            if self.occasions_per_period(profile) < self.repetitions {
                return Err(CgError::Layout(format!(
                    "{} occasions per period cannot hold K = {}",
                    self.occasions_per_period(profile),
                    self.repetitions
                )));
            }
        } else if self.nru_tos_per_slot != 1 || self.nru_slots != 1 {
            return Err(CgError::gating(
                FeatureRow::HarqProcessesPerPeriod,
                "multi-occasion NR-U periods need the NR-U profile",
            ));
        }
        self.check_layout_fits(profile)
    }

    fn check_layout_fits(&self, profile: FeatureProfile) -> Result<(), CgError> {
        let sps = SYMBOLS_PER_SLOT;
        let period_symbols = self.period_slots as u64 * sps as u64;
        let k = self.repetitions as u64;
        match (profile, self.repetition_type) {
            (FeatureProfile::NruR16, _) => {
                if self.sliv.start_symbol + self.nru_tos_per_slot * self.sliv.length > sps {
                    return Err(CgError::Layout(format!(
                        "{} occasions of {} symbols from symbol {} do not fit in a slot",
                        self.nru_tos_per_slot, self.sliv.length, self.sliv.start_symbol
                    )));
                }
                if self.nru_slots > self.period_slots {
                    return Err(CgError::Layout("nru_slots exceed the period".into()));
                }
            }
            (_, RepetitionType::A) => {
                let last_slot = (k - 1) * (1 + self.gap_slots as u64);
                if last_slot >= self.period_slots as u64 {
                    return Err(CgError::Layout(format!(
                        "K = {} with a gap of {} slots spans {} slots, period is {}",
                        k,
                        self.gap_slots,
                        last_slot + 1,
                        self.period_slots
                    )));
                }
            }
            (_, RepetitionType::B) => {
                if self.gap_slots != 0 {
                    return Err(CgError::Layout("time gaps apply to Type A repetition only".into()));
                }
                let end = self.sliv.start_symbol as u64 + k * self.sliv.length as u64;
                if end > period_symbols {
                    return Err(CgError::Layout("Type B repetitions exceed the period".into()));
                }
                if !profile.type_b_cross_slot() && end > sps as u64 {
                    // Nominal repetitions would have to straddle or sit past a slot border.
                    let crosses = (0..k).any(|i| {
                        let from = self.sliv.start_symbol as u64 + i * self.sliv.length as u64;
                        let to = from + self.sliv.length as u64;
                        from / sps as u64 != (to - 1) / sps as u64
                    });
                    if crosses {
                        return Err(CgError::gating(
                            FeatureRow::Repetition,
                            format!("Type B repetition cannot cross the slot boundary under {profile}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Checks a UE's whole set of grants.
pub fn validate_cg_set(cgs: &[CgConfig], profile: FeatureProfile) -> Result<(), CgError> {
    if cgs.len() > profile.max_configurations() {
        return Err(CgError::gating(
            FeatureRow::MaxConfigurations,
            format!("{} configurations requested, {profile} allows {}", cgs.len(), profile.max_configurations()),
        ));
    }
    let mut seen = BTreeSet::new();
    for cg in cgs {
        if !seen.insert(cg.cg_id) {
            return Err(CgError::Field(format!("duplicate cg_id {}", cg.cg_id)));
        }
        cg.validate(profile)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rv_patterns() {
        assert_eq!(RvPattern::Rv0231.rv_at(5), 2);
        assert_eq!(RvPattern::Rv0303.rv0_spacing(), 2);
        assert_eq!(RvPattern::Rv0231.rv0_spacing(), 4);
        assert_eq!(RvPattern::with_rv0_spacing(1), Some(RvPattern::Rv0000));
        assert_eq!("0303".parse::<RvPattern>().unwrap(), RvPattern::Rv0303);
        assert!("0123".parse::<RvPattern>().is_err());
        assert_eq!(RvPattern::Rv0231.to_string(), "0231");
        for p in RvPattern::ALL {
            let s = p.sequence();
            let zeros: Vec<usize> = (0..4).filter(|&i| s[i] == 0).collect();
            assert_eq!(zeros[1..].iter().zip(&zeros).map(|(a, b)| a - b).next().unwrap_or(4) as u32, p.rv0_spacing());
        }
    }

    #[test]
    fn fdra_resolution() {
        let t0 = Fdra::Type0 { bitmap: "101".into(), rbg_size: 2 };
        assert_eq!(t0.resource_blocks().unwrap(), [0, 1, 4, 5].into_iter().collect());
        let t1 = Fdra::Type1 { start_rb: 3, num_rbs: 2 };
        assert_eq!(t1.resource_blocks().unwrap(), [3, 4].into_iter().collect());
        let t2 = Fdra::Type2 { interlace: 3, bandwidth_rbs: 25 };
        assert_eq!(t2.resource_blocks().unwrap(), [3, 13, 23].into_iter().collect());
        assert!(Fdra::Type2 { interlace: 10, bandwidth_rbs: 25 }.resource_blocks().is_err());
    }

    #[test]
    fn layout_must_fit_period() {
        let mut cg = CgConfig::new(0, 4, 4, RvPattern::Rv0000);
        assert!(cg.validate(FeatureProfile::NrR16).is_ok());
        cg.gap_slots = 1;
        assert!(matches!(cg.validate(FeatureProfile::NrR16), Err(CgError::Layout(_))));
        let mut cg = CgConfig::new(0, 16, 4, RvPattern::Rv0000);
        cg.gap_slots = 4;
        assert!(cg.validate(FeatureProfile::NrR16).is_ok());
    }

    #[test]
    fn r15_rejects_rel16_knobs() {
        let mut cg = CgConfig::new(0, 4, 2, RvPattern::Rv0303);
        cg.starting_from_rv0 = true;
        assert!(cg.validate(FeatureProfile::NrR15).is_err());
        let mut cg = CgConfig::new(0, 4, 2, RvPattern::Rv0303);
        cg.phy_priority = PhyPriority::High;
        assert_eq!(cg.validate(FeatureProfile::NrR15).unwrap_err().row(), Some(FeatureRow::PhyPriority));
        assert!(cg.validate(FeatureProfile::NrR16).is_ok());
    }

    #[test]
    fn nru_needs_enough_occasions() {
        let mut cg = CgConfig::new(0, 4, 4, RvPattern::Rv0000);
        cg.sliv = Sliv { start_symbol: 0, length: 7 };
        cg.nru_tos_per_slot = 2;
        cg.nru_slots = 1;
        assert!(cg.validate(FeatureProfile::NruR16).is_err());
        cg.nru_slots = 3;
        assert!(cg.validate(FeatureProfile::NruR16).is_ok());
    }

    #[test]
    fn set_size_gated() {
        let cgs: Vec<CgConfig> = (0..2).map(|i| CgConfig::new(i, 4, 1, RvPattern::Rv0000)).collect();
        assert_eq!(validate_cg_set(&cgs, FeatureProfile::NrR15).unwrap_err().row(), Some(FeatureRow::MaxConfigurations));
        assert!(validate_cg_set(&cgs, FeatureProfile::NrR16).is_ok());
        let many: Vec<CgConfig> = (0..13).map(|i| CgConfig::new(i % 12, 4, 1, RvPattern::Rv0000)).collect();
        assert!(validate_cg_set(&many, FeatureProfile::NrR16).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cg = CgConfig::new(2, 8, 4, RvPattern::Rv0231);
        let json = serde_json::to_string(&cg).unwrap();
        assert!(json.contains("\"0231\""));
        let back: CgConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cg);
        let unknown = json.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<CgConfig>(&unknown).is_err());
    }
}
