//! Simulation and analysis of NR uplink configured-grant scheduling.
//!
//! Modules follow the signal path: [`time_grid`] lays out symbols and
//! repetitions, [`cg_core`] holds grant configuration and occasion layout,
//! [`ue_mac`] drives the UE side, [`gnb_model`] models reception and feedback,
//! [`analytics`] has the closed-form reliability expressions and
//! [`sim`] ties everything into a seeded discrete-event engine.

pub mod analytics;
pub mod cg_core;
pub mod gnb_model;
pub mod sim;
pub mod time_grid;
pub mod ue_mac;
