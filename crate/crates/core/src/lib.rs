pub mod error;
pub mod modarith;
pub mod ring;
pub mod rns;
pub mod ckks;
pub mod costmodel;
pub mod helt;
pub mod permnet;
pub mod dpsim;
pub mod config;

pub use error::{Error, Result};
