//! Online fair classification with a panel of auditors.

pub mod auditing;
pub mod environment;
pub mod error;
pub mod ftpl;
pub mod harness;
pub mod hypothesis;
pub mod learners;
pub mod losses;
pub mod lp;
pub mod rng;

pub use error::{Error, Result};
