//! Scenario configuration, parallel Monte Carlo orchestration and reporting
//! for `adaptinf`.
//!
//! A scenario (see [`config`]) fixes the model, design, stopping rule,
//! methods, replication counts, level and master seed. The runners turn it
//! into [`table::ResultTable`]s whose CSV form depends only on the scenario,
//! never on the number of workers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod estimation;
pub mod inversion;
pub mod limit;
pub mod report;
pub mod runner;
pub mod sequences;
pub mod table;

pub use config::{load_config, parse_config, ConfigError, Scenario};
pub use table::{Cell, ResultTable};
