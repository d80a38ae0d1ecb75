//! Estimating how far machine-generated text is from undetectable: scalar
//! detector transforms over black-box language-model surrogates, the
//! empirical τ score over threshold classifiers, and the tooling to build
//! corpora and aggregate results into tables.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod io;
pub mod providers;
pub mod report;
pub mod risk;
pub mod seed;
pub mod synth;
pub mod transforms;

pub use error::{Error, Result};
