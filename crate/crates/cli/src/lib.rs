//! Scenario files, orchestration and result emission for the reflected
//! BSDE laboratory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod expr;
pub mod report;

pub use commands::{run, Command, Options};
pub use config::{Backend, ScenarioFile};
pub use report::Report;
