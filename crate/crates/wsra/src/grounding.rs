//! Temporal proposals and inference: enumerate candidate spans, pool
//! their features, score them against a query, and rank.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::FeatureMatrix;
use crate::error::{Result, WsraError};
use crate::scoring::ScoringParams;

const SPAN_EPS: f64 = 1e-9;

/// Half-open interval; either over snippet indices or over seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalSpan {
    pub start: f64,
    pub end: f64,
    pub mode: SpanMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanMode {
    Snippet,
    Time,
}

impl TemporalSpan {
    pub fn new(start: f64, end: f64, mode: SpanMode) -> Result<Self> {
        if !(start < end) || start < 0.0 {
            return Err(WsraError::Grounding(format!(
                "invalid span [{}, {}): need 0 <= start < end",
                start, end
            )));
        }
        Ok(TemporalSpan { start, end, mode })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// A candidate span with its mean-pooled feature and score.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub span: TemporalSpan,
    pub feature: Vec<f64>,
    pub score: f64,
}

/// Ranked proposals for one query; scores non-increasing, ties resolved
/// by earlier start then earlier end.
#[derive(Debug, Clone)]
pub struct GroundingResult {
    pub query_id: String,
    pub ranked: Vec<Proposal>,
}

/// All contiguous snippet spans over `num_segments` segments: n(n+1)/2.
pub fn enumerate_segment_proposals(num_segments: usize) -> Vec<TemporalSpan> {
    let mut out = Vec::with_capacity(num_segments * (num_segments + 1) / 2);
    for a in 0..num_segments {
        for b in a + 1..=num_segments {
            out.push(TemporalSpan { start: a as f64, end: b as f64, mode: SpanMode::Snippet });
        }
    }
    out
}

/// Sliding windows at each fraction of the video duration, stride
/// (1 - overlap) * window, plus a final window clamped to the video end
/// when the last full stride overshoots. Exact duplicates are dropped.
pub fn enumerate_sliding_proposals(
    duration: f64,
    fractions: &[f64],
    overlap: f64,
) -> Result<Vec<TemporalSpan>> {
    if duration <= 0.0 {
        return Err(WsraError::Grounding(format!("non-positive duration {}", duration)));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(WsraError::Grounding(format!("overlap {} must be in [0, 1)", overlap)));
    }
    let mut out: Vec<TemporalSpan> = Vec::new();
    let mut push_unique = |span: TemporalSpan| {
        let dup = out
            .iter()
            .any(|s| (s.start - span.start).abs() < SPAN_EPS && (s.end - span.end).abs() < SPAN_EPS);
        if !dup {
            out.push(span);
        }
    };
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(WsraError::Grounding(format!("window fraction {} must be in (0, 1]", f)));
        }
        let len = f * duration;
        let stride = (1.0 - overlap) * len;
        if stride <= 0.0 {
            return Err(WsraError::Grounding(format!(
                "non-positive stride for fraction {} at overlap {}",
                f, overlap
            )));
        }
        let mut k = 0usize;
        let mut last_end = 0.0;
        loop {
            let start = k as f64 * stride;
            if start + len > duration + SPAN_EPS {
                break;
            }
            push_unique(TemporalSpan { start, end: start + len, mode: SpanMode::Time });
            last_end = start + len;
            k += 1;
        }
        if last_end < duration - SPAN_EPS {
            push_unique(TemporalSpan { start: duration - len, end: duration, mode: SpanMode::Time });
        }
    }
    Ok(out)
}

/// Snippet indices whose midpoint falls inside the span.
fn covered_snippets(
    num_snippets: usize,
    span: &TemporalSpan,
    snippet_duration: f64,
) -> Vec<usize> {
    (0..num_snippets)
        .filter(|&i| {
            let mid = match span.mode {
                SpanMode::Snippet => i as f64 + 0.5,
                SpanMode::Time => (i as f64 + 0.5) * snippet_duration,
            };
            mid >= span.start && mid < span.end
        })
        .collect()
}

/// Mean of the snippet rows whose midpoints lie inside the span.
pub fn pool_proposal_feature(
    video: &FeatureMatrix,
    span: &TemporalSpan,
    snippet_duration: f64,
) -> Result<Vec<f64>> {
    let covered = covered_snippets(video.num_snippets(), span, snippet_duration);
    if covered.is_empty() {
        return Err(WsraError::Grounding(format!(
            "span [{}, {}) overlaps no snippet midpoint",
            span.start, span.end
        )));
    }
    let mut out = vec![0.0; video.dim()];
    for &i in &covered {
        for (o, v) in out.iter_mut().zip(video.row(i)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= covered.len() as f64);
    Ok(out)
}

/// Per-proposal features for the six-segment scheme: each of the 21
/// contiguous-segment proposals gets concat(global mean of all 21 pooled
/// features, its own pooled feature), dimension 2d.
pub fn didemo_feature_augment(video: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    if video.num_snippets() != 6 {
        return Err(WsraError::Grounding(format!(
            "six-segment augmentation needs 6 segments, got {}",
            video.num_snippets()
        )));
    }
    let proposals = enumerate_segment_proposals(6);
    let pooled: Vec<Vec<f64>> = proposals
        .iter()
        .map(|span| pool_proposal_feature(video, span, 1.0))
        .collect::<Result<_>>()?;
    let d = video.dim();
    let mut global = vec![0.0; d];
    for p in &pooled {
        for (g, v) in global.iter_mut().zip(p) {
            *g += v;
        }
    }
    global.iter_mut().for_each(|v| *v /= pooled.len() as f64);

    Ok(pooled
        .into_iter()
        .map(|local| {
            let mut f = global.clone();
            f.extend(local);
            f
        })
        .collect())
}

/// Score proposals with one head and return the top_k, sorted by
/// descending score with ties going to the earlier (then shorter) span.
///
/// `proposal_features` overrides mean pooling when the caller has
/// pre-built features (the six-segment augmentation path).
#[allow(clippy::too_many_arguments)]
pub fn ground(
    params: &ScoringParams,
    query_id: &str,
    query: &[f64],
    video: &FeatureMatrix,
    snippet_duration: f64,
    proposals: &[TemporalSpan],
    proposal_features: Option<&[Vec<f64>]>,
    top_k: usize,
) -> Result<GroundingResult> {
    if proposals.is_empty() {
        return Err(WsraError::Grounding("no proposals to rank".into()));
    }
    if let Some(pf) = proposal_features {
        if pf.len() != proposals.len() {
            return Err(WsraError::Grounding(format!(
                "{} proposal features for {} proposals",
                pf.len(),
                proposals.len()
            )));
        }
    }
    let mut scored = Vec::with_capacity(proposals.len());
    for (i, span) in proposals.iter().enumerate() {
        let feature = match proposal_features {
            Some(pf) => pf[i].clone(),
            None => pool_proposal_feature(video, span, snippet_duration)?,
        };
        let score = params.score_values(&feature, query)?;
        scored.push(Proposal { span: *span, feature, score });
    }
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.span.start.partial_cmp(&b.span.start).unwrap())
            .then(a.span.end.partial_cmp(&b.span.end).unwrap())
    });
    scored.truncate(top_k);
    Ok(GroundingResult { query_id: query_id.to_string(), ranked: scored })
}

/// Prediction file: one line per ranked span,
/// `<query_id> <rank> <start> <end> <score>` with 6-decimal scores.
pub fn write_predictions(path: &Path, results: &[GroundingResult]) -> Result<()> {
    let mut out = String::new();
    for r in results {
        for (rank, p) in r.ranked.iter().enumerate() {
            out.push_str(&format!(
                "{} {} {} {} {:.6}\n",
                r.query_id,
                rank + 1,
                p.span.start,
                p.span.end,
                p.score
            ));
        }
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Read a prediction file back, grouped per query in rank order.
pub fn read_predictions(path: &Path, mode: SpanMode) -> Result<Vec<GroundingResult>> {
    let text = fs::read_to_string(path)?;
    let mut results: Vec<GroundingResult> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(WsraError::Grounding(format!("bad prediction line '{}'", line)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| WsraError::Grounding(format!("bad number '{}': {}", s, e)))
        };
        let span = TemporalSpan::new(parse(parts[2])?, parse(parts[3])?, mode)?;
        let proposal = Proposal { span, feature: Vec::new(), score: parse(parts[4])? };
        match results.last_mut() {
            Some(r) if r.query_id == parts[0] => r.ranked.push(proposal),
            _ => results.push(GroundingResult { query_id: parts[0].to_string(), ranked: vec![proposal] }),
        }
    }
    Ok(results)
}
