//! Configured-grant parameters, feature gating, activation/release handling
//! and the occasion layout of each period.

mod config;
mod dci;
mod occasions;
mod profile;

use thiserror::Error;

use crate::time_grid::GridError;

pub use config::{validate_cg_set, CgConfig, CgType, Fdra, PhyPriority, RepetitionType, RvPattern, Sliv};
pub use dci::{validate_activation, validate_release, ActivationCheck, CgActivity, CgState, CgStateTable, DciMessage, DciPurpose, Rnti};
pub use occasions::{
    allowed_start_indices, enumerate_occasions, occasions_available_flexible, occasions_available_legacy, occasions_in_period,
    period_containing, period_start_slot, rv_for_start, TransmissionOccasion,
};
pub use profile::{DciFormat, FeatureProfile, FeatureRow, StartRule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CgError {
    #[error("{row}: {detail}")]
    Gating { row: FeatureRow, detail: String },
    #[error("layout: {0}")]
    Layout(String),
    #[error("{0}")]
    Field(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl CgError {
    pub fn gating(row: FeatureRow, detail: impl Into<String>) -> Self {
        CgError::Gating { row, detail: detail.into() }
    }

    /// The feature-matrix row behind a gating error.
    pub fn row(&self) -> Option<FeatureRow> {
        match self {
            CgError::Gating { row, .. } => Some(*row),
            _ => None,
        }
    }
}
