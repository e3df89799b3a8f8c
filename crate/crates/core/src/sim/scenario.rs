use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::SharedPoolConfig;
use crate::cg_core::{
    occasions_in_period, validate_activation, validate_cg_set, validate_release, CgConfig, DciMessage, DciPurpose, FeatureProfile,
    FeatureRow,
};
use crate::gnb_model::{FeedbackPolicy, LinkModel};
use crate::time_grid::{CarrierId, Numerology, TddPattern, SYMBOLS_PER_SLOT};
use crate::ue_mac::{LbtConfig, TrafficModel};

pub const SCHEMA_VERSION: u32 = 1;

pub const ALL_UPLINK_SLOT: &str = "UUUUUUUUUUUUUU";

fn one() -> u32 {
    1
}

fn default_carriers() -> Vec<CarrierConfig> {
    vec![CarrierConfig { carrier_id: 0, tdd: ALL_UPLINK_SLOT.into() }]
}

fn default_deadline() -> u32 {
    u32::MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierConfig {
    pub carrier_id: CarrierId,
    /// One 14-character U/D/F string per slot, comma separated.
    pub tdd: String,
}

/// Optional mechanisms layered on top of the profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Enhancements {
    #[serde(default)]
    pub time_gap: bool,
    #[serde(default)]
    pub flexible_start: bool,
    #[serde(default)]
    pub common_nack: bool,
    #[serde(default)]
    pub shared_pool: bool,
    #[serde(default)]
    pub complementary_tdd: bool,
}

/// Profile features a scenario asks for explicitly. Each one is checked
/// against the feature matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRequest {
    #[serde(default)]
    pub explicit_ack: bool,
    #[serde(default)]
    pub autonomous_transmission: bool,
    #[serde(default)]
    pub cg_uci: bool,
    #[serde(default)]
    pub dfi: bool,
    #[serde(default)]
    pub ue_selected_harq_id: bool,
    #[serde(default)]
    pub ue_selected_rv: bool,
}

fn one_slot() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnbConfig {
    #[serde(default = "one_slot")]
    pub feedback_delay_slots: u32,
    #[serde(default = "one_slot")]
    pub dfi_delay_slots: u32,
    #[serde(default = "one_slot")]
    pub nack_delay_slots: u32,
}

impl Default for GnbConfig {
    fn default() -> Self {
        Self { feedback_delay_slots: 1, dfi_delay_slots: 1, nack_delay_slots: 1 }
    }
}

/// What happens to a packet that cannot reach any occasion of the period it
/// arrived in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissPolicy {
    /// Wait for the next period.
    #[default]
    Postpone,
    /// Discard the packet.
    Drop,
}

/// A downlink control message delivered to a UE at a fixed slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DciEvent {
    pub at_slot: u64,
    pub dci: DciMessage,
    /// Grants a release applies to.
    #[serde(default)]
    pub targets: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub ue_id: u32,
    pub configured_grants: Vec<CgConfig>,
    pub traffic: TrafficModel,
    #[serde(default)]
    pub link: LinkModel,
    #[serde(default = "default_deadline")]
    pub deadline_slots: u32,
    #[serde(default)]
    pub lbt: Option<LbtConfig>,
    #[serde(default)]
    pub processing_margin_symbols: u32,
    #[serde(default)]
    pub miss_policy: MissPolicy,
    #[serde(default)]
    pub dci_events: Vec<DciEvent>,
}

impl UeConfig {
    /// UE with default link, no deadline, no LBT and no DCI events.
    pub fn new(ue_id: u32, configured_grants: Vec<CgConfig>, traffic: TrafficModel) -> Self {
        Self {
            ue_id,
            configured_grants,
            traffic,
            link: LinkModel::default(),
            deadline_slots: default_deadline(),
            lbt: None,
            processing_margin_symbols: 0,
            miss_policy: MissPolicy::default(),
            dci_events: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub profile: FeatureProfile,
    #[serde(default)]
    pub numerology: Numerology,
    #[serde(default = "default_carriers")]
    pub carriers: Vec<CarrierConfig>,
    #[serde(default)]
    pub enhancements: Enhancements,
    #[serde(default)]
    pub shared_pool: Option<SharedPoolConfig>,
    #[serde(default)]
    pub gnb: GnbConfig,
    #[serde(default)]
    pub features: FeatureRequest,
    pub ues: Vec<UeConfig>,
    pub duration_slots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: u32,
    /// Record a per-event trace and per-packet records in the report.
    #[serde(default)]
    pub trace: bool,
}

/// One validation finding, with the feature-matrix row when a profile rule
/// is behind it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub row: Option<FeatureRow>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(row) => write!(f, "{}: [{}] {}", self.path, row, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
}

impl ScenarioError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            ScenarioError::Invalid(v) => v,
            _ => &[],
        }
    }

    /// Feature-matrix rows named by the findings.
    pub fn rows(&self) -> BTreeSet<FeatureRow> {
        self.issues().iter().filter_map(|i| i.row).collect()
    }
}

/// Carrier id to parsed TDD pattern.
pub type CarrierMap = BTreeMap<CarrierId, TddPattern>;

impl ScenarioConfig {
    /// Scenario on the default all-uplink carrier with every option off.
    pub fn new(profile: FeatureProfile, ues: Vec<UeConfig>, duration_slots: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            profile,
            numerology: Numerology::default(),
            carriers: default_carriers(),
            enhancements: Enhancements::default(),
            shared_pool: None,
            gnb: GnbConfig::default(),
            features: FeatureRequest::default(),
            ues,
            duration_slots,
            seed: 0,
            replications: 1,
            trace: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn duration_symbols(&self) -> u64 {
        self.duration_slots * SYMBOLS_PER_SLOT as u64
    }

    pub fn feedback_policy(&self) -> FeedbackPolicy {
        FeedbackPolicy {
            feedback_delay_slots: self.gnb.feedback_delay_slots,
            dfi_delay_slots: self.gnb.dfi_delay_slots,
            nack_delay_slots: self.gnb.nack_delay_slots,
            common_nack: self.enhancements.common_nack,
        }
    }

    /// Parsed TDD patterns. Only valid after [`ScenarioConfig::validate`].
    pub fn carrier_map(&self) -> CarrierMap {
        self.carriers.iter().filter_map(|c| c.tdd.parse().ok().map(|t| (c.carrier_id, t))).collect()
    }

    /// Secondary carrier used by complementary TDD for grants on `primary`.
    pub fn complement_of(&self, primary: CarrierId) -> Option<CarrierId> {
        if !self.enhancements.complementary_tdd {
            return None;
        }
        self.carriers.iter().map(|c| c.carrier_id).find(|&c| c != primary)
    }

    /// Shared pool in effect, if the enhancement is on.
    pub fn active_pool(&self) -> Option<SharedPoolConfig> {
        self.shared_pool.filter(|_| self.enhancements.shared_pool)
    }

    /// Runs every load-time check and collects all findings.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut issues = Vec::new();
        let mut push = |path: String, row: Option<FeatureRow>, message: String| issues.push(Issue { path, row, message });
        let profile = self.profile;

        if self.schema_version != SCHEMA_VERSION {
            push("schema_version".into(), None, format!("expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if self.duration_slots == 0 {
            push("duration_slots".into(), None, "must be at least 1".into());
        }
        if self.replications == 0 {
            push("replications".into(), None, "must be at least 1".into());
        }

        let mut carriers = BTreeSet::new();
        for (i, c) in self.carriers.iter().enumerate() {
            if !carriers.insert(c.carrier_id) {
                push(format!("carriers[{i}]"), None, format!("duplicate carrier id {}", c.carrier_id));
            }
            if let Err(e) = c.tdd.parse::<TddPattern>() {
                push(format!("carriers[{i}].tdd"), None, e.to_string());
            }
        }
        if self.enhancements.complementary_tdd && self.carriers.len() < 2 {
            push("enhancements.complementary_tdd".into(), None, "needs a second carrier".into());
        }

        match (self.enhancements.shared_pool, &self.shared_pool) {
            (true, None) => push("shared_pool".into(), None, "shared_pool enhancement on but no pool configured".into()),
            (_, Some(pool)) => {
                if let Err(e) = pool.validate() {
                    push("shared_pool".into(), None, e.to_string());
                } else if self.enhancements.shared_pool && (pool.n_ues as usize) < self.ues.len() {
                    push("shared_pool.n_ues".into(), None, format!("population {} smaller than {} simulated UEs", pool.n_ues, self.ues.len()));
                }
            }
            _ => {}
        }

        let f = self.features;
        let requests = [
            (f.explicit_ack, profile.explicit_ack(), FeatureRow::AckFeedback, "explicit ACK feedback"),
            (f.autonomous_transmission, profile.autonomous_transmission(), FeatureRow::AutonomousTransmission, "autonomous transmission"),
            (f.cg_uci, profile.cg_uci(), FeatureRow::CgUci, "CG-UCI"),
            (f.dfi, profile.dfi(), FeatureRow::Dfi, "CG-DFI"),
            (f.ue_selected_harq_id, profile.ue_selects_harq_id(), FeatureRow::HarqIdDetermination, "UE-selected HARQ id"),
            (f.ue_selected_rv, profile.ue_selects_rv(), FeatureRow::RvPatternDetermination, "UE-selected RV"),
        ];
        for (asked, available, row, name) in requests {
            if asked && !available {
                push("features".into(), Some(row), format!("{name} not available under {profile}"));
            }
        }

        let mut ue_ids = BTreeSet::new();
        for (u, ue) in self.ues.iter().enumerate() {
            let at = |field: &str| format!("ues[{u}].{field}");
            if !ue_ids.insert(ue.ue_id) {
                push(at("ue_id"), None, format!("duplicate UE id {}", ue.ue_id));
            }
            if let Err(e) = ue.traffic.validate() {
                push(at("traffic"), None, e);
            }
            if let Err(e) = ue.link.validate() {
                push(at("link"), None, e.to_string());
            }
            if let Some(lbt) = &ue.lbt {
                if profile != FeatureProfile::NruR16 {
                    push(at("lbt"), None, format!("channel access procedures only apply under {}", FeatureProfile::NruR16));
                }
                if let Err(e) = lbt.validate() {
                    push(at("lbt"), None, e);
                }
            }
            if let Err(e) = validate_cg_set(&ue.configured_grants, profile) {
                push(at("configured_grants"), e.row(), e.to_string());
            }
            for (g, cg) in ue.configured_grants.iter().enumerate() {
                let path = format!("ues[{u}].configured_grants[{g}]");
                if let Err(e) = cg.validate(profile) {
                    push(path.clone(), e.row(), e.to_string());
                }
                if !carriers.contains(&cg.carrier_id) {
                    push(path.clone(), None, format!("unknown carrier {}", cg.carrier_id));
                }
                if cg.gap_slots > 0 && !self.enhancements.time_gap {
                    push(path.clone(), None, "gap_slots needs the time_gap enhancement".into());
                }
                if cg.flexible_start && !self.enhancements.flexible_start {
                    push(path.clone(), None, "flexible_start needs the flexible_start enhancement".into());
                }
            }
            let multi = ue.configured_grants.len() > 1;
            for (d, ev) in ue.dci_events.iter().enumerate() {
                let path = format!("ues[{u}].dci_events[{d}]");
                if !profile.allows_dci_format(ev.dci.format) {
                    push(path.clone(), Some(FeatureRow::DciFormat), format!("DCI format {:?} not available under {profile}", ev.dci.format));
                    continue;
                }
                match ev.dci.purpose {
                    DciPurpose::Activate => {
                        if !validate_activation(&ev.dci, profile, multi).valid {
                            push(path, None, "activation DCI fails validation".into());
                        }
                    }
                    DciPurpose::Release => {
                        let targets: BTreeSet<u8> = ev.targets.iter().copied().collect();
                        if let Err(e) = validate_release(&ev.dci, profile, &targets) {
                            push(path, e.row(), e.to_string());
                        }
                    }
                    _ => push(path, None, "only activation and release DCIs can be scripted".into()),
                }
            }
        }

        if issues.is_empty() {
            for (path, msg) in self.dedicated_overlaps() {
                issues.push(Issue { path, row: None, message: msg });
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(issues))
        }
    }

    /// Dedicated grants of different UEs sharing resource blocks and symbols
    /// on one carrier, checked over one common period of all grants.
    fn dedicated_overlaps(&self) -> Vec<(String, String)> {
        let tdd = self.carrier_map();
        let mut span_of: Vec<(usize, usize, u64, u64, CarrierId, BTreeSet<u32>)> = Vec::new();
        let horizon = self
            .ues
            .iter()
            .flat_map(|u| u.configured_grants.iter())
            .map(|c| (c.period_slots + c.offset_slots) as u64)
            .fold(1u64, |acc, p| (acc * p / gcd(acc, p)).min(4096));
        for (u, ue) in self.ues.iter().enumerate() {
            for (g, cg) in ue.configured_grants.iter().enumerate() {
                let Some(pattern) = tdd.get(&cg.carrier_id) else { continue };
                let rbs = cg.fdra.resource_blocks().unwrap_or_default();
                let mut n = 0;
                while crate::cg_core::period_start_slot(cg, n) < horizon {
                    if let Ok(tos) = occasions_in_period(cg, self.profile, pattern, n, self.complement_of(cg.carrier_id)) {
                        for to in tos {
                            for s in &to.segments {
                                span_of.push((u, g, s.span.abs_start(), s.span.abs_end(), s.span.carrier_id, rbs.clone()));
                            }
                        }
                    }
                    n += 1;
                }
            }
        }
        span_of.sort_by_key(|s| (s.4, s.2));
        let mut out = Vec::new();
        for i in 0..span_of.len() {
            for j in i + 1..span_of.len() {
                let (a, b) = (&span_of[i], &span_of[j]);
                if b.4 != a.4 || b.2 >= a.3 {
                    break;
                }
                if a.0 != b.0 && !a.5.is_disjoint(&b.5) {
                    out.push((
                        format!("ues[{}].configured_grants[{}]", a.0, a.1),
                        format!("dedicated resources overlap ues[{}].configured_grants[{}] at symbol {}", b.0, b.1, b.2),
                    ));
                    return out;
                }
            }
        }
        out
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schema_version": 1,
        "profile": "nr_r16",
        "ues": [{
            "ue_id": 0,
            "configured_grants": [{"cg_id": 0, "period_slots": 4, "sliv": {"start_symbol": 0, "length": 14},
                                   "repetitions": 2, "rv_pattern": "0303"}],
            "traffic": {"kind": "uniform_in_period", "n_slots": 4, "payload_bits": 64}
        }],
        "duration_slots": 100
    }"#;

    fn base() -> ScenarioConfig {
        ScenarioConfig::from_json(BASE).unwrap()
    }

    #[test]
    fn parses_with_defaults() {
        let s = base();
        assert_eq!(s.replications, 1);
        assert_eq!(s.carriers.len(), 1);
        assert_eq!(s.ues[0].miss_policy, MissPolicy::Postpone);
        assert_eq!(s.duration_symbols(), 1400);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = BASE.replace("\"duration_slots\": 100", "\"duration_slots\": 100, \"bogus\": 1");
        assert!(matches!(ScenarioConfig::from_json(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn wrong_schema_version() {
        let text = BASE.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(ScenarioConfig::from_json(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn gating_errors_name_rows() {
        let mut s = base();
        s.profile = FeatureProfile::NrR15;
        s.features.cg_uci = true;
        let mut second = s.ues[0].configured_grants[0].clone();
        second.cg_id = 1;
        s.ues[0].configured_grants.push(second);
        let err = s.validate().unwrap_err();
        let rows = err.rows();
        assert!(rows.contains(&FeatureRow::CgUci));
        assert!(rows.contains(&FeatureRow::MaxConfigurations));
        assert!(err.to_string().contains("ues[0].configured_grants"));
    }

    #[test]
    fn enhancements_must_be_enabled() {
        let mut s = base();
        s.ues[0].configured_grants[0].flexible_start = true;
        assert!(s.validate().is_err());
        s.enhancements.flexible_start = true;
        assert!(s.validate().is_ok());
    }

    #[test]
    fn dedicated_overlap_rejected() {
        let mut s = base();
        let mut other = s.ues[0].clone();
        other.ue_id = 1;
        s.ues.push(other.clone());
        assert!(s.validate().unwrap_err().to_string().contains("overlap"));
        s.ues[1].configured_grants[0].fdra = crate::cg_core::Fdra::Type1 { start_rb: 10, num_rbs: 2 };
        assert!(s.validate().is_ok());
    }
}
