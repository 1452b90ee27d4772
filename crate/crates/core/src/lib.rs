//! Angular large-margin losses (cosine and cotangent families), a small
//! embedding trainer with hand-written backpropagation, verification and
//! retrieval metrics, and the non-neural plumbing of a face-authentication
//! pipeline.

pub mod angular;
pub mod error;
pub mod exec;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod train;

pub use angular::{AngularBatch, CotPath, LogBase, LossConfig};
pub use error::{Error, Result};
pub use exec::Execution;
