//! Files, external generators and the `bbgc` command line on top of `bbgc-core`.
//!
//! * [`store`]: the binary sample store and its batch framing.
//! * [`source`]: synthetic, subprocess and HTTP generators.
//! * [`report`], [`calibration`], [`evaluate`]: JSON artifacts.
//! * [`pipeline`]: the commands as library calls; [`cli`] parses arguments for them.

pub mod calibration;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod export;
pub mod pipeline;
pub mod report;
pub mod source;
pub mod store;

pub use error::{Error, Result};
pub use exec::RayonExecutor;
