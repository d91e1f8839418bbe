pub mod encoder;
pub mod error;
pub mod experiment;
mod io_util;
pub mod moments;
pub mod nn;
pub mod pooling;
pub mod probe;
pub mod scoring;
pub mod synthdata;

pub use error::{Error, Result};
