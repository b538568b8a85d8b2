//! Std side of aquarisk: dataset parsing, model documents, the artifact
//! manifest and the pipeline commands behind the `aquarisk` binary.

pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod manifest;
pub mod model_doc;
pub mod pipeline;

pub use error::{AppError, Result};
