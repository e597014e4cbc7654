pub mod agents;
pub mod data;
pub mod envs;
pub mod error;
pub mod eval;
pub mod flow;
pub mod learners;
pub mod nn;
pub mod oracle;

pub use error::{Error, Result};
