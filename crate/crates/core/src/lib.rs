//! Workbench for HLS performance modeling with in-context learning.
//!
//! The pipeline: generate loop-nest kernels ([`synthgen`]), label pragma
//! designs with an analytic cost model ([`oracle`]), train a surrogate GNN
//! ensemble and spawn weak labels from it ([`surrogate`]), then pretrain a
//! graph-encoded transformer neural process ([`gtnp`]) on the hybrid data
//! and evaluate it few-shot and for offline design selection ([`train`]).
//! [`workbench`] ties the stages to on-disk artifacts and the CLI.

pub mod error;
pub mod gtnp;
pub mod io;
pub mod kernel;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod surrogate;
pub mod synthgen;
pub mod train;
pub mod workbench;

pub use error::{Error, Result};
