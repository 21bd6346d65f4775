//! Iceberg-order detection and size prediction for market-by-order logs.
//!
//! The crate splits into a streaming ingest layer ([`ingest`]), two
//! detectors ([`native`] for exchange-managed icebergs visible through
//! order-id reuse, [`synthetic`] for refill chains stitched across distinct
//! order ids), a weighted Kaplan-Meier size model ([`survival`]), predictors
//! ([`predict`]), evaluation against ground truth ([`evaluate`]), a
//! deterministic log generator ([`simgen`]), and descriptive statistics
//! ([`stats`]).

pub mod evaluate;
pub mod ingest;
pub mod native;
pub mod pipeline;
pub mod predict;
pub mod simgen;
pub mod stats;
pub mod survival;
pub mod synthetic;
