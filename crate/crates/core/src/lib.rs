//! Field-test scenario management for drone missions.
//!
//! The crate covers the whole life of a field test:
//!
//! - [`dsl`] parses `.fits` scenario files and imports spreadsheet templates.
//! - [`compiler`] lints scenarios, inlines sub-processes and expands step
//!   multiplicities into an executable [`TaskGraph`](model::TaskGraph).
//! - [`engine`] runs a task graph as an event-sourced mission with
//!   role-specific task views, duration alarms, data collection and issues.
//! - [`analysis`] correlates collected data with external telemetry and
//!   builds mission reports.

pub mod analysis;
pub mod compiler;
pub mod diagnostic;
pub mod dsl;
pub mod engine;
pub mod error;
pub mod library;
pub mod model;
pub mod package;
pub mod sim;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod text;
