//! Simulation and inference for adaptively collected experimental data.
//!
//! The crate simulates adaptive experiments (bandit designs with optional
//! clipping, batching and data-dependent stopping), computes the usual
//! estimators and their adaptively weighted variants, and provides three
//! routes to valid inference: weighting to restore asymptotic normality,
//! time-uniform confidence sequences, and Monte Carlo test inversion. It also
//! samples the limit laws against which finite-sample behaviour is checked.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confseq;
pub mod design;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod invert;
pub mod limit_exp;
pub mod mc;
pub mod mclt;
pub mod model;
pub mod rng;
pub mod special;
pub mod stopping;
pub mod thompson;
pub mod trajectory;

pub use design::{clip, Design, ThompsonPrior};
pub use error::{Error, Result};
pub use experiment::{run_experiment, run_experiment_into};
pub use model::OutcomeModel;
pub use rng::{derive_stream, RngStream};
pub use stopping::{CsTarget, StoppingRule};
pub use trajectory::{Step, Trajectory, TrajectoryRecord};
