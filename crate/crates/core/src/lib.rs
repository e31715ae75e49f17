pub mod agent;
pub mod config;
pub mod demo;
pub mod env;
pub mod error;
pub mod imitation;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod replay;
pub mod report;
pub mod trainer;

pub use error::{Error, Result};
