//! Files, configuration, reports and the command line around
//! [`driver_wm_core`].
//!
//! * [`corpus_io`]: the `DWM1` corpus blob and its manifest
//! * [`checkpoint_io`]: `DWMC` named-tensor checkpoints
//! * [`topology_io`]: skeleton topology text files
//! * [`config`]: the flat run configuration
//! * [`report`]: metrics, deviation, causality and training reports
//! * [`lanes`]: threaded per-clip execution
//! * [`cli`]: the `driver-wm` commands

mod binary;
pub mod checkpoint_io;
pub mod cli;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod kv;
pub mod lanes;
pub mod report;
pub mod topology_io;

pub use driver_wm_core;
pub use error::{Error, FormatError, Result};
