//! Aggregated, privacy-floored documentation of image datasets.
//!
//! The pipeline ingests sparse per-image signals (from external models or the
//! native [`extractors`]), derives class, count and spread attributes, and
//! reports only aggregates: distributions, co-occurrence, nPMI correlation
//! and nutrition-label summaries.

pub mod signal_model;
pub mod extractors;
pub mod derivation;
pub mod aggregation;
pub mod report;
pub mod synth;
pub mod patches;
pub mod api;
