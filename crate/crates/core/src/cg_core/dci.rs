use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::{CgConfig, CgType};
use super::profile::{DciFormat, FeatureProfile, FeatureRow};
use super::CgError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rnti {
    CsRnti,
    CRnti,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DciPurpose {
    Activate,
    Release,
    RetxGrant,
    CgDfi,
}

/// Uplink DCI reduced to the fields that matter for configured grants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DciMessage {
    pub scrambling: Rnti,
    #[serde(default)]
    pub ndi: u8,
    #[serde(default)]
    pub harq_field: u32,
    #[serde(default)]
    pub rv_field: u32,
    #[serde(default)]
    pub dfi_field: u32,
    pub format: DciFormat,
    #[serde(default)]
    pub tdra_row: u32,
    #[serde(default)]
    pub fdra_field: u32,
    #[serde(default)]
    pub priority_bit: u8,
    pub purpose: DciPurpose,
}

impl DciMessage {
    /// An activation DCI with every validation field zeroed.
    pub fn activation(format: DciFormat) -> Self {
        Self {
            scrambling: Rnti::CsRnti,
            ndi: 0,
            harq_field: 0,
            rv_field: 0,
            dfi_field: 0,
            format,
            tdra_row: 0,
            fdra_field: 0,
            priority_bit: 0,
            purpose: DciPurpose::Activate,
        }
    }

    pub fn release(format: DciFormat) -> Self {
        Self {
            purpose: DciPurpose::Release,
            ..Self::activation(format)
        }
    }

    /// Dynamic retransmission grant for HARQ process `harq_id`.
    pub fn retx_grant(format: DciFormat, harq_id: u32) -> Self {
        Self {
            ndi: 1,
            harq_field: harq_id,
            purpose: DciPurpose::RetxGrant,
            ..Self::activation(format)
        }
    }

    pub fn is_retransmission_grant(&self) -> bool {
        self.scrambling == Rnti::CsRnti && self.ndi == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivationCheck {
    pub valid: bool,
    pub target_cg: Option<u8>,
}

impl ActivationCheck {
    const INVALID: ActivationCheck = ActivationCheck { valid: false, target_cg: None };
}

/// Activation DCI validation. Invalid DCIs are not errors: the UE ignores them.
pub fn validate_activation(dci: &DciMessage, profile: FeatureProfile, multi_cg: bool) -> ActivationCheck {
    if dci.purpose != DciPurpose::Activate
        || dci.scrambling != Rnti::CsRnti
        || dci.ndi != 0
        || dci.rv_field != 0
        || dci.dfi_field != 0
        || !profile.allows_dci_format(dci.format)
    {
        return ActivationCheck::INVALID;
    }
    if multi_cg {
        // With several grants the HARQ field names the grant being activated.
        match u8::try_from(dci.harq_field) {
            Ok(id) if id < 12 => ActivationCheck { valid: true, target_cg: Some(id) },
            _ => ActivationCheck::INVALID,
        }
    } else if dci.harq_field == 0 {
        ActivationCheck { valid: true, target_cg: Some(0) }
    } else {
        ActivationCheck::INVALID
    }
}

/// Release DCI validation. Releasing several grants at once is a profile
/// violation outside NR Rel-16 and is reported as an error.
pub fn validate_release(dci: &DciMessage, profile: FeatureProfile, targets: &BTreeSet<u8>) -> Result<bool, CgError> {
    if targets.len() > 1 && !profile.group_release() {
        return Err(CgError::gating(
            FeatureRow::GroupRelease,
            format!("release of {} grants in one DCI not supported under {profile}", targets.len()),
        ));
    }
    Ok(!targets.is_empty()
        && dci.purpose == DciPurpose::Release
        && dci.scrambling == Rnti::CsRnti
        && profile.allows_dci_format(dci.format))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgActivity {
    ConfiguredInactive,
    Active,
    Released,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CgState {
    pub activity: CgActivity,
    /// MAC CE confirmation still owed to the gNB.
    pub pending_confirmation: bool,
}

/// Activation bookkeeping for the grants of one UE.
#[derive(Debug, Clone, Default)]
pub struct CgStateTable {
    states: BTreeMap<u8, CgState>,
}

impl CgStateTable {
    /// Type 1 grants become active on configuration, Type 2 grants wait for DCI.
    pub fn configure(cgs: &[CgConfig]) -> Self {
        let states = cgs
            .iter()
            .map(|cg| {
                let activity = match cg.cg_type {
                    CgType::Type1 => CgActivity::Active,
                    CgType::Type2 => CgActivity::ConfiguredInactive,
                };
                (cg.cg_id, CgState { activity, pending_confirmation: false })
            })
            .collect();
        Self { states }
    }

    pub fn state(&self, cg_id: u8) -> Option<CgState> {
        self.states.get(&cg_id).copied()
    }

    pub fn is_active(&self, cg_id: u8) -> bool {
        matches!(self.state(cg_id), Some(CgState { activity: CgActivity::Active, .. }))
    }

    pub fn active_ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.states.iter().filter(|(_, s)| s.activity == CgActivity::Active).map(|(id, _)| *id)
    }

    /// Applies an activation DCI; returns the grant it activated.
    pub fn apply_activation(&mut self, dci: &DciMessage, profile: FeatureProfile) -> Option<u8> {
        let multi = self.states.len() > 1;
        let check = validate_activation(dci, profile, multi);
        let target = if multi { check.target_cg? } else { *self.states.keys().next()? };
        if !check.valid {
            return None;
        }
        let st = self.states.get_mut(&target)?;
        st.activity = CgActivity::Active;
        st.pending_confirmation = true;
        Some(target)
    }

    /// Applies a release DCI to `targets`. Already released grants stay released.
    pub fn apply_release(&mut self, dci: &DciMessage, profile: FeatureProfile, targets: &BTreeSet<u8>) -> Result<Vec<u8>, CgError> {
        if !validate_release(dci, profile, targets)? {
            return Ok(Vec::new());
        }
        let mut released = Vec::new();
        for id in targets {
            if let Some(st) = self.states.get_mut(id) {
                if st.activity != CgActivity::Released {
                    st.activity = CgActivity::Released;
                    st.pending_confirmation = true;
                    released.push(*id);
                }
            }
        }
        Ok(released)
    }

    /// Sends the MAC CE confirmations, returning the grants confirmed.
    pub fn confirm(&mut self) -> Vec<u8> {
        self.states
            .iter_mut()
            .filter(|(_, s)| s.pending_confirmation)
            .map(|(id, s)| {
                s.pending_confirmation = false;
                *id
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg_core::RvPattern;

    #[test]
    fn activation_all_zero_is_valid() {
        let dci = DciMessage::activation(DciFormat::F0_0);
        assert_eq!(
            validate_activation(&dci, FeatureProfile::NrR16, false),
            ActivationCheck { valid: true, target_cg: Some(0) }
        );
    }

    #[test]
    fn activation_wrong_rnti() {
        let dci = DciMessage { scrambling: Rnti::CRnti, ..DciMessage::activation(DciFormat::F0_0) };
        assert!(!validate_activation(&dci, FeatureProfile::NrR16, false).valid);
    }

    #[test]
    fn activation_harq_field_targets_cg() {
        let dci = DciMessage { harq_field: 3, ..DciMessage::activation(DciFormat::F0_1) };
        assert_eq!(
            validate_activation(&dci, FeatureProfile::NrR16, true),
            ActivationCheck { valid: true, target_cg: Some(3) }
        );
        assert!(!validate_activation(&dci, FeatureProfile::NrR16, false).valid);
    }

    #[test]
    fn activation_nonzero_fields_invalid() {
        for dci in [
            DciMessage { ndi: 1, ..DciMessage::activation(DciFormat::F0_0) },
            DciMessage { rv_field: 2, ..DciMessage::activation(DciFormat::F0_0) },
            DciMessage { dfi_field: 1, ..DciMessage::activation(DciFormat::F0_0) },
        ] {
            assert!(!validate_activation(&dci, FeatureProfile::NrR16, false).valid);
        }
    }

    #[test]
    fn format_0_2_only_rel16_nr() {
        let dci = DciMessage::activation(DciFormat::F0_2);
        assert!(validate_activation(&dci, FeatureProfile::NrR16, false).valid);
        assert!(!validate_activation(&dci, FeatureProfile::NrR15, false).valid);
        assert!(!validate_activation(&dci, FeatureProfile::NruR16, false).valid);
    }

    #[test]
    fn group_release_gating() {
        let dci = DciMessage::release(DciFormat::F0_0);
        let group: BTreeSet<u8> = [1, 2, 3].into_iter().collect();
        assert_eq!(validate_release(&dci, FeatureProfile::NrR16, &group), Ok(true));
        let pair: BTreeSet<u8> = [1, 2].into_iter().collect();
        assert_eq!(validate_release(&dci, FeatureProfile::NrR15, &pair).unwrap_err().row(), Some(FeatureRow::GroupRelease));
        assert!(validate_release(&dci, FeatureProfile::NruR16, &pair).is_err());
        let single: BTreeSet<u8> = [0].into_iter().collect();
        for p in [FeatureProfile::NrR15, FeatureProfile::NrR16, FeatureProfile::NruR16] {
            assert_eq!(validate_release(&dci, p, &single), Ok(true));
        }
    }

    #[test]
    fn state_machine_idempotence() {
        let mut a = CgConfig::new(0, 4, 1, RvPattern::Rv0000);
        a.cg_type = CgType::Type2;
        let b = CgConfig::new(1, 4, 1, RvPattern::Rv0000);
        let mut t = CgStateTable::configure(&[a, b]);
        assert!(!t.is_active(0));
        assert!(t.is_active(1));

        let act = DciMessage::activation(DciFormat::F0_0);
        assert_eq!(t.apply_activation(&act, FeatureProfile::NrR16), Some(0));
        assert_eq!(t.apply_activation(&act, FeatureProfile::NrR16), Some(0));
        assert!(t.is_active(0));
        assert_eq!(t.confirm(), vec![0]);
        assert!(t.confirm().is_empty());

        let targets: BTreeSet<u8> = [0].into_iter().collect();
        let rel = DciMessage::release(DciFormat::F0_0);
        assert_eq!(t.apply_release(&rel, FeatureProfile::NrR16, &targets).unwrap(), vec![0]);
        assert!(t.apply_release(&rel, FeatureProfile::NrR16, &targets).unwrap().is_empty());
        assert_eq!(t.state(0).unwrap().activity, CgActivity::Released);
    }

    #[test]
    fn retx_grant_flag() {
        assert!(DciMessage::retx_grant(DciFormat::F0_1, 2).is_retransmission_grant());
        assert!(!DciMessage::activation(DciFormat::F0_1).is_retransmission_grant());
    }
}
