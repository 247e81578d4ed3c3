//! Scenario files, study pipelines and result emission for the `gibc` CLI.

pub mod config;
pub mod report;
pub mod study;
