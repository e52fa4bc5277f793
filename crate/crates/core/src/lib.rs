pub mod error;
pub mod experiment;
pub mod ledger;
pub mod precision;
pub mod protocol;
pub mod qmath;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
