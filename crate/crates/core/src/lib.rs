//! Hourly BitCoin price-formation analysis: source ingestion, regressor
//! construction, unit-root and ARCH diagnostics, AR(1)-X / GARCH(p,q)-X
//! quasi-maximum likelihood, simulation oracles and coefficient-table reporting.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod engine;
pub mod ingest;
pub mod panel;
pub mod regression;
pub mod report;
pub mod series;
pub mod simulation;
pub mod special;
