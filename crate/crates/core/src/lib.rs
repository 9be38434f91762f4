pub mod dictionary;
pub mod error;
pub mod nsvb;
pub mod numerics;
pub mod mpc;
pub mod plant;
pub mod predict;
pub mod synthetic;

pub use error::{Error, Result};
