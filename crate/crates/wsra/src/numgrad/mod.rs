//! Minimal dense reverse-mode differentiation core with an Adam optimizer.
//!
//! Everything runs on 64-bit floats; one [`Graph`] per training step.

mod adam;
pub mod checkpoint;
mod graph;
mod tensor;

pub use adam::AdamState;
pub use graph::{Graph, NodeId};
pub use tensor::{Param, Tensor};

/// Plain (non-graph) cosine similarity; errors on near-zero norms.
pub fn cosine_values(a: &[f64], b: &[f64]) -> crate::error::Result<f64> {
    if a.len() != b.len() {
        return Err(crate::error::WsraError::Shape {
            op: "cosine_values".into(),
            details: format!("lengths {} vs {}", a.len(), b.len()),
        });
    }
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return Err(crate::error::WsraError::DegenerateVector { op: "cosine_values".into() });
    }
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(d / (na * nb))
}
