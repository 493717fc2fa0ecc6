pub mod belief;
pub mod config;
pub mod environment;
pub mod error;
pub mod eval;
pub mod normal;
pub mod oracle;
pub mod qlearn;
pub mod quadrature;
pub mod searchers;
pub mod seed;
pub mod task;
pub mod validation;

pub use error::{Error, Result};
