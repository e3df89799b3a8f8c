use serde::Serialize;

use super::engine::run_replication;
use super::scenario::{DciEvent, ScenarioConfig, UeConfig};
use crate::cg_core::{CgConfig, CgType, DciFormat, DciMessage, FeatureProfile, FeatureRow, PhyPriority, RepetitionType, RvPattern, Sliv};
use crate::ue_mac::TrafficModel;

/// Result of one feature-matrix row: the permitted configuration loads and
/// runs, the forbidden one is rejected naming the row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowCheck {
    pub row: FeatureRow,
    pub allowed_accepted: bool,
    pub violation_rejected: bool,
    pub message: String,
}

impl RowCheck {
    pub fn pass(&self) -> bool {
        self.allowed_accepted && self.violation_rejected
    }
}

fn base(profile: FeatureProfile) -> ScenarioConfig {
    let mut cg = CgConfig::new(0, 4, 1, RvPattern::Rv0000);
    if profile == FeatureProfile::NruR16 {
        cg.nru_slots = 2;
    }
    let traffic = TrafficModel::Deterministic { period_slots: 4, phase_slots: 0, payload_bits: 32 };
    ScenarioConfig::new(profile, vec![UeConfig::new(0, vec![cg], traffic)], 40)
}

fn cg(s: &mut ScenarioConfig) -> &mut CgConfig {
    &mut s.ues[0].configured_grants[0]
}

fn second_grant(s: &mut ScenarioConfig) {
    let mut extra = s.ues[0].configured_grants[0].clone();
    extra.cg_id = 1;
    extra.offset_slots = 2;
    extra.sliv = Sliv { start_symbol: 0, length: 14 };
    s.ues[0].configured_grants.push(extra);
}

fn group_release(s: &mut ScenarioConfig) {
    second_grant(s);
    s.ues[0].dci_events.push(DciEvent { at_slot: 20, dci: DciMessage::release(DciFormat::F0_1), targets: vec![0, 1] });
}

/// (allowed, violating) scenario pair for a row.
pub fn row_scenarios(row: FeatureRow) -> (ScenarioConfig, ScenarioConfig) {
    use FeatureProfile::*;
    let mut ok = base(NrR16);
    let mut bad = base(NrR16);
    match row {
        FeatureRow::MaxConfigurations => {
            ok = base(NrR15);
            bad = base(NrR15);
            second_grant(&mut bad);
        }
        FeatureRow::DciFormat => {
            for s in [&mut ok, &mut bad] {
                cg(s).cg_type = CgType::Type2;
            }
            bad.profile = NrR15;
            ok.ues[0].dci_events.push(DciEvent { at_slot: 1, dci: DciMessage::activation(DciFormat::F0_2), targets: vec![] });
            bad.ues[0].dci_events.push(DciEvent { at_slot: 1, dci: DciMessage::activation(DciFormat::F0_2), targets: vec![] });
        }
        FeatureRow::GroupRelease => {
            group_release(&mut ok);
            bad = base(NruR16);
            group_release(&mut bad);
        }
        FeatureRow::Repetition => {
            ok = base(NrR15);
            bad = base(NrR15);
            let c = cg(&mut bad);
            c.repetition_type = RepetitionType::B;
            c.sliv = Sliv { start_symbol: 0, length: 7 };
        }
        FeatureRow::PhyPriority => {
            cg(&mut ok).phy_priority = PhyPriority::High;
            bad = base(NrR15);
            cg(&mut bad).phy_priority = PhyPriority::High;
        }
        FeatureRow::AckFeedback
        | FeatureRow::AutonomousTransmission
        | FeatureRow::CgUci
        | FeatureRow::Dfi
        | FeatureRow::HarqIdDetermination
        | FeatureRow::RvPatternDetermination => {
            ok = base(NruR16);
            for s in [&mut ok, &mut bad] {
                let f = &mut s.features;
                match row {
                    FeatureRow::AckFeedback => f.explicit_ack = true,
                    FeatureRow::AutonomousTransmission => f.autonomous_transmission = true,
                    FeatureRow::CgUci => f.cg_uci = true,
                    FeatureRow::Dfi => f.dfi = true,
                    FeatureRow::HarqIdDetermination => f.ue_selected_harq_id = true,
                    _ => f.ue_selected_rv = true,
                }
            }
        }
        FeatureRow::TransmissionBeginning => {
            cg(&mut ok).starting_from_rv0 = true;
            bad = base(NrR15);
            cg(&mut bad).starting_from_rv0 = true;
        }
        FeatureRow::AutonomousRetransmission => {
            ok = base(NruR16);
            cg(&mut ok).cg_retx_timer = Some(2);
            cg(&mut bad).cg_retx_timer = Some(2);
        }
        FeatureRow::HarqProcessesPerPeriod => {
            ok = base(NruR16);
            cg(&mut ok).harq_processes = 2;
            cg(&mut bad).nru_slots = 2;
        }
    }
    (ok, bad)
}

pub fn check_row(row: FeatureRow) -> RowCheck {
    let (ok, bad) = row_scenarios(row);
    let mut notes = Vec::new();
    let allowed_accepted = match ok.validate() {
        Ok(()) => {
            let r = run_replication(&ok, 0);
            r.ues.iter().all(|m| m.reps_scheduled == m.reps_emitted + m.reps_skipped())
        }
        Err(e) => {
            notes.push(format!("allowed configuration rejected: {e}"));
            false
        }
    };
    let violation_rejected = match bad.validate() {
        Ok(()) => {
            notes.push("violating configuration accepted".into());
            false
        }
        Err(e) => {
            let named = e.rows().contains(&row);
            if !named {
                notes.push(format!("rejected without naming the row: {e}"));
            }
            named
        }
    };
    RowCheck { row, allowed_accepted, violation_rejected, message: notes.join("; ") }
}

/// Every row of the feature matrix.
pub fn conformance_matrix() -> Vec<RowCheck> {
    FeatureRow::ALL.iter().map(|&r| check_row(r)).collect()
}

/// Runs a short scenario per profile and checks that CG-UCI rides on every
/// CG transmission under NR-U and on none otherwise.
pub fn cg_uci_presence() -> Vec<(FeatureProfile, bool)> {
    [FeatureProfile::NrR15, FeatureProfile::NrR16, FeatureProfile::NruR16]
        .into_iter()
        .map(|p| {
            let s = base(p);
            let r = run_replication(&s, 0);
            let m = &r.ues[0];
            let ok = m.reps_emitted > 0 && if p == FeatureProfile::NruR16 { m.cg_uci_tx == m.reps_emitted } else { m.cg_uci_tx == 0 };
            (p, ok)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_row_passes() {
        for check in conformance_matrix() {
            assert!(check.pass(), "{}: {}", check.row, check.message);
        }
    }

    #[test]
    fn cg_uci_only_under_nru() {
        for (p, ok) in cg_uci_presence() {
            assert!(ok, "{p}");
        }
    }
}
