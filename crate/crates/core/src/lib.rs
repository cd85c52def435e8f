//! Retrieval-augmented image captioning with object and relation prompts and a
//! selective state-space mapping network.

pub mod decoder;
pub mod error;
pub mod evaluation;
pub mod orem;
pub mod pipeline;
pub mod ssm;
pub mod store;
pub mod synthetic;
pub mod tensor;
pub mod text;
pub mod training;

pub use error::{Error, ErrorKind, Result};
