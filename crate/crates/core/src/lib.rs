//! State estimation with a Kalman fixed-lag interval smoother that borrows
//! strength from an external observation stream of unknown quality.
//!
//! * [`matmodel`]: model, belief statistics and windowed block matrices.
//! * [`sdu`]: inversion-free sequential Bayes update.
//! * [`smoother`]: plain fixed-lag interval smoother and baselines.
//! * [`transfer`]: the transfer smoother.
//! * [`simgen`]: deterministic simulation of truth and observations.
//! * [`metrics`]: squared-error scoring.
//! * [`cli`]: scenario files and Monte Carlo experiments.
//! * [`verify`]: self-check suites against independent references.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod matmodel;
pub mod metrics;
pub mod sdu;
pub mod simgen;
pub mod smoother;
pub mod transfer;
pub mod verify;

pub use error::{Error, Result};
pub use matmodel::{GaussianStats, StateSpaceModel, WishartStats};
pub use smoother::{BaselineKind, FlisState};
pub use transfer::{TflisState, TflisStepOutput, TransferOptions};
