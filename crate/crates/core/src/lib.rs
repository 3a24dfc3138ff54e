//! Two-stage emotion-cause pair extraction for multi-party dialogs.
//!
//! Stage one labels every utterance with an emotion ([`emotion`]); stage two
//! contextualizes utterance embeddings with a BiLSTM and decides, for every
//! emotional utterance, which utterances of its history caused it
//! ([`cause`]). [`metrics`] scores the resulting pairs the way the shared
//! task does and [`analysis`] produces the diagnostic tables and plots.

pub mod analysis;
pub mod cause;
pub mod checkpoint;
pub mod corpus;
pub mod embed;
pub mod emotion;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nn;

pub use error::{Error, ErrorKind, Result};
