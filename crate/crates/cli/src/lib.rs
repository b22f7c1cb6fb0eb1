//! Batch front-end: scenario files, presets, and reports.

pub mod config;
pub mod report;
