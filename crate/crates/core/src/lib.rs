pub mod classifier;
pub mod corpus;
pub mod denoise;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub(crate) mod jsonl;
pub mod noise;
pub mod robust_train;
pub mod synth;
pub mod rng;

pub use error::{Error, Result};
