use std::fmt;

use serde::{Deserialize, Serialize};

/// Release / track a UE is configured for. Every profile-dependent behavior
/// in the crate is looked up through the methods below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureProfile {
    #[serde(rename = "nr_r15")]
    NrR15,
    #[serde(rename = "nr_r16")]
    NrR16,
    #[serde(rename = "nru_r16")]
    NruR16,
}

/// Activation / release DCI formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DciFormat {
    #[serde(rename = "0_0")]
    F0_0,
    #[serde(rename = "0_1")]
    F0_1,
    #[serde(rename = "0_2")]
    F0_2,
}

/// One row of the release feature matrix. Validation failures carry the row
/// so that error messages name the rule that was broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureRow {
    MaxConfigurations,
    DciFormat,
    GroupRelease,
    Repetition,
    PhyPriority,
    AckFeedback,
    AutonomousTransmission,
    CgUci,
    Dfi,
    TransmissionBeginning,
    HarqIdDetermination,
    RvPatternDetermination,
    AutonomousRetransmission,
    HarqProcessesPerPeriod,
}

impl FeatureRow {
    pub const ALL: [FeatureRow; 14] = [
        FeatureRow::MaxConfigurations,
        FeatureRow::DciFormat,
        FeatureRow::GroupRelease,
        FeatureRow::Repetition,
        FeatureRow::PhyPriority,
        FeatureRow::AckFeedback,
        FeatureRow::AutonomousTransmission,
        FeatureRow::CgUci,
        FeatureRow::Dfi,
        FeatureRow::TransmissionBeginning,
        FeatureRow::HarqIdDetermination,
        FeatureRow::RvPatternDetermination,
        FeatureRow::AutonomousRetransmission,
        FeatureRow::HarqProcessesPerPeriod,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FeatureRow::MaxConfigurations => "Maximum number of configurations",
            FeatureRow::DciFormat => "Activation/Release DCI",
            FeatureRow::GroupRelease => "Group Release",
            FeatureRow::Repetition => "Repetition",
            FeatureRow::PhyPriority => "PHY priority",
            FeatureRow::AckFeedback => "ACK feedback",
            FeatureRow::AutonomousTransmission => "Autonomous transmission",
            FeatureRow::CgUci => "CG-UCI",
            FeatureRow::Dfi => "DFI",
            FeatureRow::TransmissionBeginning => "Transmission beginning in a period",
            FeatureRow::HarqIdDetermination => "HARQ ID determination",
            FeatureRow::RvPatternDetermination => "RV pattern determination",
            FeatureRow::AutonomousRetransmission => "Autonomous retransmission on CG",
            FeatureRow::HarqProcessesPerPeriod => "Number of HARQ processes per CG period",
        }
    }
}

impl fmt::Display for FeatureRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartRule {
    FirstOccasion,
    FirstOrRv0,
    AnyOccasion,
}

impl FeatureProfile {
    pub fn max_configurations(self) -> usize {
        match self {
            FeatureProfile::NrR15 => 1,
            FeatureProfile::NrR16 | FeatureProfile::NruR16 => 12,
        }
    }

    pub fn allows_dci_format(self, format: DciFormat) -> bool {
        match format {
            DciFormat::F0_0 | DciFormat::F0_1 => true,
            DciFormat::F0_2 => self == FeatureProfile::NrR16,
        }
    }

    pub fn group_release(self) -> bool {
        self == FeatureProfile::NrR16
    }

    pub fn type_b_repetition(self) -> bool {
        self != FeatureProfile::NrR15
    }

    pub fn type_b_cross_slot(self) -> bool {
        self == FeatureProfile::NrR16
    }

    pub fn phy_priority(self) -> bool {
        self == FeatureProfile::NrR16
    }

    /// NR-U acknowledges explicitly through CG-DFI; NR assumes ACK when the
    /// configured-grant timer runs out.
    pub fn explicit_ack(self) -> bool {
        self == FeatureProfile::NruR16
    }

    pub fn autonomous_transmission(self) -> bool {
        self == FeatureProfile::NruR16
    }

    pub fn cg_uci(self) -> bool {
        self == FeatureProfile::NruR16
    }

    pub fn dfi(self) -> bool {
        self == FeatureProfile::NruR16
    }

    pub fn start_rule(self) -> StartRule {
        match self {
            FeatureProfile::NrR15 => StartRule::FirstOccasion,
            FeatureProfile::NrR16 => StartRule::FirstOrRv0,
            FeatureProfile::NruR16 => StartRule::AnyOccasion,
        }
    }

    pub fn ue_selects_harq_id(self) -> bool {
        self == FeatureProfile::NruR16
    }

    pub fn ue_selects_rv(self) -> bool {
        self == FeatureProfile::NruR16
    }

    pub fn autonomous_retransmission(self) -> bool {
        self == FeatureProfile::NruR16
    }

    pub fn multiple_harq_per_period(self) -> bool {
        self == FeatureProfile::NruR16
    }

    pub fn is_legacy_nr(self) -> bool {
        self != FeatureProfile::NruR16
    }
}

impl fmt::Display for FeatureProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureProfile::NrR15 => "NR Rel-15",
            FeatureProfile::NrR16 => "NR Rel-16",
            FeatureProfile::NruR16 => "NR-U Rel-16",
        })
    }
}
