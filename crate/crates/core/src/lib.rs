//! Psychometric validation engine for binary multiple-choice tests.
//!
//! The crate covers scoring of raw response sheets, classical test theory,
//! tetrachoric correlations with factorability diagnostics, confirmatory
//! factor analysis by diagonally weighted least squares, 1PL/2PL item
//! response models fitted by marginal maximum likelihood, and CFA-guided
//! test shortening. [`pipeline`] ties the stages together.

pub mod cfa;
pub mod ctt;
pub mod dataset;
pub mod error;
pub mod irt;
pub mod latentcorr;
pub mod par;
pub mod pipeline;
pub mod quadrature;
pub mod shorten;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use par::Execution;
