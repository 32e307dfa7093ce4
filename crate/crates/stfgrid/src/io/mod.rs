//! File formats and reports: MATPOWER case ingestion, the node-breaker
//! schema, and JSON solution reports.

pub mod matpower;
pub mod nodebreaker;
pub mod report;
