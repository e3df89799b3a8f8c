//! UE-side MAC: traffic, grant selection, repetitions, HARQ timers, channel
//! access and shared-pool fallback.

mod fallback;
mod grant;
mod harq;
mod lbt;
mod traffic;

use thiserror::Error;

use crate::cg_core::CgError;

pub use fallback::{handle_common_nack, shared_pool_fallback, Fallback, GridRef, SharedOccasion};
pub use grant::{
    resolve_overlap, select_grant, transmit_repetitions, CgUci, GrantChoice, GrantClaim, GrantKind, OverlapResolution,
    PlannedRepetitions, RepetitionRequest, Transmission, TxResource,
};
pub use harq::{free_process, nr_harq_id, HarqProcess, HarqState, NrAction, NruAction};
pub use lbt::{lbt_gate, FfpGate, LbtConfig, LbtMode, LbtOutcome};
pub use traffic::{Packet, TrafficModel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UeMacError {
    #[error("start occasion {start} not permitted (allowed {allowed:?})")]
    IllegalStart { start: u32, allowed: Vec<u32> },
    #[error("no active configured grant")]
    NoActiveGrant,
    #[error(transparent)]
    Cg(#[from] CgError),
}
