//! Fair lotteries over the optimal solutions of agent-indexed integer programs.

pub mod backend;
pub mod bench;
pub mod colgen;
pub mod enumeration;
pub mod error;
pub mod instances;
pub mod model;
pub mod partition;
pub mod report;
pub mod rsd;

pub use error::{FairError, Result};
