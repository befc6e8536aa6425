pub mod data;
pub mod design;
pub mod error;
pub mod functional;
pub mod glm;
pub mod io;
pub mod pilot;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod sum;
pub mod tmle;
pub mod validate;
pub mod worlds;

pub use error::{Error, Result};
