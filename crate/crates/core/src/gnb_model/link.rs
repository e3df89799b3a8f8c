use std::collections::BTreeSet;
use std::f64::consts::LOG2_E;

use rand::Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;

use super::GnbError;
use crate::cg_core::RvPattern;

fn one() -> f64 {
    1.0
}

fn default_dmrs() -> u32 {
    1
}

fn default_subcarriers() -> u32 {
    12
}

fn default_payload() -> u32 {
    256
}

/// Per-attempt decoding error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlerModel {
    /// Every self-decodable repetition fails independently with `epsilon`.
    Bernoulli { epsilon: f64 },
    /// Normal approximation of the finite-blocklength error over the
    /// resource elements accumulated across all received segments.
    FiniteBlocklength {
        #[serde(default = "default_payload")]
        payload_bits: u32,
        #[serde(default = "default_dmrs")]
        dmrs_overhead: u32,
        #[serde(default = "default_subcarriers")]
        subcarriers_per_rb: u32,
    },
}

impl Default for BlerModel {
    fn default() -> Self {
        BlerModel::Bernoulli { epsilon: 0.0 }
    }
}

/// Reception quality of one UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    #[serde(default)]
    pub gamma_db: f64,
    #[serde(default = "one")]
    pub p_e: f64,
    #[serde(default = "one")]
    pub p_d: f64,
    #[serde(default)]
    pub p_md: f64,
    #[serde(default = "one")]
    pub p_cn: f64,
    /// Transmission probability; only the closed forms read it.
    #[serde(default = "one")]
    pub p_t: f64,
    #[serde(default)]
    pub bler: BlerModel,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self { gamma_db: 0.0, p_e: 1.0, p_d: 1.0, p_md: 0.0, p_cn: 1.0, p_t: 1.0, bler: BlerModel::default() }
    }
}

impl LinkModel {
    pub fn gamma(&self) -> f64 {
        db_to_linear(self.gamma_db)
    }

    pub fn validate(&self) -> Result<(), GnbError> {
        for (name, p) in [("p_e", self.p_e), ("p_d", self.p_d), ("p_md", self.p_md), ("p_cn", self.p_cn), ("p_t", self.p_t)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GnbError::Link(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.p_d + self.p_md > 1.0 + 1e-12 {
            return Err(GnbError::Link(format!("p_d + p_md = {} exceeds 1", self.p_d + self.p_md)));
        }
        match self.bler {
            BlerModel::Bernoulli { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(GnbError::Link(format!("epsilon = {epsilon} outside [0, 1]")))
            }
            BlerModel::FiniteBlocklength { subcarriers_per_rb: 0, .. } => Err(GnbError::Link("subcarriers_per_rb must be positive".into())),
            _ => Ok(()),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// One received piece of a repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReceivedSegment {
    /// Nominal repetition the segment belongs to.
    pub repetition: u32,
    pub symbols: u32,
    pub rbs: u32,
    pub rv: u8,
}

/// Information-carrying resource elements across `segments`.
pub fn resource_elements(segments: &[ReceivedSegment], dmrs_overhead: u32, subcarriers_per_rb: u32) -> u64 {
    segments
        .iter()
        .map(|s| s.symbols.saturating_sub(dmrs_overhead) as u64 * subcarriers_per_rb as u64 * s.rbs as u64)
        .sum()
}

/// Normal-approximation error for `payload_bits` over `n` channel uses.
pub fn fbl_error(gamma: f64, n: u64, payload_bits: u32) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let n = n as f64;
    let c = (1.0 + gamma).log2();
    let v = gamma * (gamma + 2.0) / (2.0 * (gamma + 1.0).powi(2)) * LOG2_E * LOG2_E;
    if v == 0.0 {
        return if c > payload_bits as f64 / n { 0.0 } else { 1.0 };
    }
    let x = (c - payload_bits as f64 / n) / (v / n).sqrt();
    q_function(x).clamp(0.0, 1.0)
}

/// Decoding error probability after combining `segments`.
pub fn bler(model: &BlerModel, gamma: f64, segments: &[ReceivedSegment]) -> f64 {
    let decodable: BTreeSet<u32> =
        segments.iter().filter(|s| RvPattern::is_self_decodable(s.rv)).map(|s| s.repetition).collect();
    if decodable.is_empty() {
        return 1.0;
    }
    match *model {
        BlerModel::Bernoulli { epsilon } => epsilon.powi(decodable.len() as i32),
        BlerModel::FiniteBlocklength { payload_bits, dmrs_overhead, subcarriers_per_rb } => {
            fbl_error(gamma, resource_elements(segments, dmrs_overhead, subcarriers_per_rb), payload_bits)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionOutcome {
    NotDetected,
    Identified(u32),
    /// Energy detected and attributed to the wrong UE.
    Misdetected(u32),
    UnknownDetection,
}

/// Draws the detection outcome of a transmission from `ue_id`. A
/// misdetection names another UE out of `population`.
pub fn detect<R: Rng + ?Sized>(ue_id: u32, population: u32, link: &LinkModel, rng: &mut R) -> DetectionOutcome {
    let u: f64 = rng.gen();
    let miss = 1.0 - link.p_e;
    let identified = link.p_e * link.p_d;
    let misdetected = link.p_e * link.p_md;
    if u < miss {
        DetectionOutcome::NotDetected
    } else if u < miss + identified {
        DetectionOutcome::Identified(ue_id)
    } else if u < miss + identified + misdetected {
        let wrong = if population > 1 { (ue_id + rng.gen_range(1..population)) % population } else { ue_id.wrapping_add(1) };
        DetectionOutcome::Misdetected(wrong)
    } else {
        DetectionOutcome::UnknownDetection
    }
}
