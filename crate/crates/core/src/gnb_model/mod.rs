//! gNB receiver: collisions, detection, decoding error, RV recovery and
//! feedback generation.

mod feedback;
mod link;
mod reception;

use thiserror::Error;

pub use feedback::{emit_feedback, FeedbackMessage, FeedbackPolicy, ProcessOutcome};
pub use link::{
    bler, db_to_linear, detect, fbl_error, q_function, resource_elements, BlerModel, DetectionOutcome, LinkModel, ReceivedSegment,
};
pub use reception::{blind_rv_recovery, resolve_collisions, SoftBuffer, SoftEntry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GnbError {
    #[error("link model: {0}")]
    Link(String),
    #[error("dedicated resources overlap at {0}")]
    DedicatedOverlap(String),
}
