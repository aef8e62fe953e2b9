//! Predicting gesture properties from speech prosody and text.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod net;
pub mod prosody;
pub mod textfeat;
pub mod training;
pub mod util;

pub use error::{Error, Result};
