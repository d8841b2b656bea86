pub mod adversary;
pub mod campaign;
pub mod cli;
pub mod config;
pub mod error;
pub mod gluing;
pub mod linalg;
pub mod orbit;
pub mod pseudomethod;
pub mod record;
pub mod sampler;
pub mod shadowing;
pub mod space;
pub mod system;

pub use error::{Error, Result};
