//! Evaluation metrics for temporal grounding: IoU, recall at rank K,
//! mean top-1 IoU, and the exact-match recall used with the fixed
//! six-segment proposal scheme.

use std::fmt;

use crate::error::{Result, WsraError};
use crate::grounding::{GroundingResult, TemporalSpan};

/// Intersection over union of two half-open spans in the same mode.
pub fn temporal_iou(a: &TemporalSpan, b: &TemporalSpan) -> Result<f64> {
    if a.mode != b.mode {
        return Err(WsraError::Eval("cannot compare spans in different modes".into()));
    }
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = (a.end.max(b.end) - a.start.min(b.start)).max(0.0);
    if union == 0.0 {
        return Ok(0.0);
    }
    Ok(inter / union)
}

/// Fraction of queries whose top-K predictions contain a span with
/// IoU >= threshold against the ground truth.
pub fn recall_at_k(
    results: &[(GroundingResult, TemporalSpan)],
    k: usize,
    threshold: f64,
) -> Result<f64> {
    if results.is_empty() {
        return Err(WsraError::Eval("recall over an empty result set".into()));
    }
    if k == 0 {
        return Err(WsraError::Eval("recall needs k >= 1".into()));
    }
    let mut hits = 0usize;
    for (r, truth) in results {
        let hit = r
            .ranked
            .iter()
            .take(k)
            .map(|p| temporal_iou(&p.span, truth))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .any(|iou| iou >= threshold);
        if hit {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// Mean IoU of each query's rank-1 prediction against ground truth.
pub fn mean_iou(results: &[(GroundingResult, TemporalSpan)]) -> Result<f64> {
    if results.is_empty() {
        return Err(WsraError::Eval("mean IoU over an empty result set".into()));
    }
    let mut total = 0.0;
    for (r, truth) in results {
        let top = r
            .ranked
            .first()
            .ok_or_else(|| WsraError::Eval(format!("query {} has no predictions", r.query_id)))?;
        total += temporal_iou(&top.span, truth)?;
    }
    Ok(total / results.len() as f64)
}

/// Fraction of queries whose top-K predictions contain the exact
/// ground-truth span (for enumerable proposal sets where equality is
/// meaningful). Boundaries match within 1e-9.
pub fn didemo_exact_recall(
    results: &[(GroundingResult, TemporalSpan)],
    k: usize,
) -> Result<f64> {
    if results.is_empty() {
        return Err(WsraError::Eval("exact recall over an empty result set".into()));
    }
    if k == 0 {
        return Err(WsraError::Eval("exact recall needs k >= 1".into()));
    }
    let mut hits = 0usize;
    for (r, truth) in results {
        let hit = r.ranked.iter().take(k).any(|p| {
            p.span.mode == truth.mode
                && (p.span.start - truth.start).abs() < 1e-9
                && (p.span.end - truth.end).abs() < 1e-9
        });
        if hit {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// A small bundle of grounding metrics over one evaluation split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub num_queries: usize,
    /// (k, iou_threshold, recall) rows in the order they were computed.
    pub recalls: Vec<(usize, f64, f64)>,
    pub mean_iou: f64,
}

impl EvalReport {
    pub fn compute(
        results: &[(GroundingResult, TemporalSpan)],
        settings: &[(usize, f64)],
    ) -> Result<Self> {
        let mut recalls = Vec::with_capacity(settings.len());
        for &(k, thr) in settings {
            recalls.push((k, thr, recall_at_k(results, k, thr)?));
        }
        Ok(EvalReport { num_queries: results.len(), recalls, mean_iou: mean_iou(results)? })
    }

    /// Stable machine-readable key=value lines.
    pub fn machine_format(&self) -> String {
        let mut out = format!("queries={}\n", self.num_queries);
        for (k, thr, r) in &self.recalls {
            out.push_str(&format!("recall_at_{}_iou_{:.2}={:.6}\n", k, thr, r));
        }
        out.push_str(&format!("mean_iou={:.6}\n", self.mean_iou));
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "queries evaluated: {}", self.num_queries)?;
        for (k, thr, r) in &self.recalls {
            writeln!(f, "  R@{} IoU>={:.2}  {:6.2}%", k, thr, 100.0 * r)?;
        }
        write!(f, "  mean IoU      {:6.2}%", 100.0 * self.mean_iou)
    }
}
