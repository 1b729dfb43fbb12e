//! Desk-scale benchmark comparing a gradient-boosted tree ensemble with a
//! variational quantum regressor on weekly heat-illness counts.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`dataset`]: county-week feature rows and their CSV schemas
//! - [`synth`]: the generative latent-intensity model for synthetic panels
//! - [`preprocess`]: standardization, correlation filter and PCA
//! - [`qsim`]: a small exact statevector simulator
//! - [`qmodel`]: the re-uploading variational circuit regressor
//! - [`classical`]: gradient boosting over least-squares trees
//! - [`eval`]: metrics and report files
//! - [`config`] and [`experiment`]: the sectioned config file and the
//!   end-to-end stages driven by the command-line tool

pub mod classical;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod preprocess;
pub mod qmodel;
pub mod qsim;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
