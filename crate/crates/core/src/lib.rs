pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod numerics;
pub mod probes;
pub mod resnet;
pub mod training;

pub use error::{Error, Result};
