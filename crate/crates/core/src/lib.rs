pub mod autodiff;
pub mod commands;
pub mod config;
pub mod data;
pub mod domain;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod nn;
pub mod policy;
pub mod reward;
pub mod ssm;
pub mod trainer;

pub use error::{Error, Result};
