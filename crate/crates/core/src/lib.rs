pub mod audio;
pub mod canonical;
pub mod error;
pub mod evaluation;
pub mod formats;
pub mod model;
pub mod numcore;
pub mod rng;
pub mod synth;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
