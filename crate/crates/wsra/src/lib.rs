//! Weakly supervised temporal grounding over precomputed video and text
//! features: attention-based foreground/background separation, two
//! cross-modal scoring heads, pair-weighted ranking losses, in-batch
//! hard-negative mining, and proposal-based span inference.

pub mod attention;
pub mod config;
pub mod data;
pub mod error;
pub mod grounding;
pub mod losses;
pub mod metrics;
pub mod numgrad;
pub mod sampling;
pub mod scoring;
pub mod trainer;

pub use error::{Result, WsraError};
