pub mod cli;
pub mod corpus;
pub mod disambiguator;
pub mod encoder;
pub mod ensemble;
pub mod error;
pub mod pairgen;
pub mod synthetic;

pub use error::{Error, Result};
