//! The three pair-weighting loss terms and their weighted combination.
//!
//! Each term is a single log(1 + sum exp(tau * hinge)) over its pairs;
//! the snippet term is one such log per video, summed over the batch.

use crate::attention::{batch_weights, snippet_weights, video_attention};
use crate::error::{Result, WsraError};
use crate::numgrad::{Graph, NodeId};
use crate::sampling::Batch;
use crate::scoring::{score, WsraModel};

/// Hyper-parameters of the combined objective.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    /// Weight of the video-level term.
    pub alpha_w: f64,
    /// Weight of the snippet-level term.
    pub beta_w: f64,
    /// Weight of the batch-level term.
    pub delta_w: f64,
    pub margin: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha_w: 0.1, beta_w: 1.0, delta_w: 0.1, margin: 0.4, tau: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_w < 0.0 || self.beta_w < 0.0 || self.delta_w < 0.0 {
            return Err(WsraError::Config("loss weights must be non-negative".into()));
        }
        if self.margin <= 0.0 {
            return Err(WsraError::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.tau <= 0.0 {
            return Err(WsraError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Which beta attaches to which score in the snippet hinge. The formula
/// and its surrounding derivation disagree; both readings are available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaPairing {
    /// beta_pos * s_n - beta_neg * s_p (the default).
    #[default]
    Printed,
    /// beta_neg * s_n - beta_pos * s_p.
    Swapped,
}

impl std::str::FromStr for BetaPairing {
    type Err = WsraError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(BetaPairing::Printed),
            "swapped" => Ok(BetaPairing::Swapped),
            other => Err(WsraError::Config(format!("unknown beta pairing '{}'", other))),
        }
    }
}

/// Scalar loss components of one step, with the total graph node kept
/// for backward.
pub struct LossBreakdown {
    pub video: f64,
    pub snippet: f64,
    pub batch: f64,
    pub total: f64,
    pub total_node: NodeId,
}

/// Video-level loss over (s_p, s_n) score pairs, one per batch item.
pub fn video_loss(g: &mut Graph, pairs: &[(NodeId, NodeId)], margin: f64, tau: f64) -> Result<NodeId> {
    if pairs.is_empty() {
        return Err(WsraError::Train("video loss over an empty batch".into()));
    }
    let mut exponents = Vec::with_capacity(pairs.len());
    for &(s_p, s_n) in pairs {
        let gap = g.sub(s_n, s_p)?;
        let hinge = g.add_const(gap, margin);
        exponents.push(g.scalar_mul(hinge, tau));
    }
    let z = g.stack(&exponents)?;
    g.log1p_sum_exp(z)
}

/// Per-snippet inputs to the snippet-level loss of one video.
pub struct SnippetTerm {
    /// phi_snippet(v_t, positive query).
    pub s_p: NodeId,
    /// phi_snippet(v_t, negative query).
    pub s_n: NodeId,
    /// beta weight of the positive query at this snippet.
    pub beta_pos: NodeId,
    /// beta weight of the negative query at this snippet.
    pub beta_neg: NodeId,
}

/// Snippet-level loss for one video: log(1 + sum_t exp(tau * hinge_t)).
pub fn snippet_loss(
    g: &mut Graph,
    terms: &[SnippetTerm],
    margin: f64,
    tau: f64,
    pairing: BetaPairing,
) -> Result<NodeId> {
    if terms.is_empty() {
        return Err(WsraError::Train("snippet loss over a video with no snippets".into()));
    }
    let mut exponents = Vec::with_capacity(terms.len());
    for term in terms {
        let (w_n, w_p) = match pairing {
            BetaPairing::Printed => (term.beta_pos, term.beta_neg),
            BetaPairing::Swapped => (term.beta_neg, term.beta_pos),
        };
        let lhs = g.mul(w_n, term.s_n)?;
        let rhs = g.mul(w_p, term.s_p)?;
        let gap = g.sub(lhs, rhs)?;
        let hinge = g.add_const(gap, margin);
        exponents.push(g.scalar_mul(hinge, tau));
    }
    let z = g.stack(&exponents)?;
    g.log1p_sum_exp(z)
}

/// Batch-level loss over cosine score pairs, each hinge scaled by its
/// constant gamma weight inside the exponent.
pub fn batch_loss(
    g: &mut Graph,
    pairs: &[(NodeId, NodeId)],
    gamma: &[f64],
    margin: f64,
    tau: f64,
) -> Result<NodeId> {
    if pairs.is_empty() {
        return Err(WsraError::Train("batch loss over an empty batch".into()));
    }
    if pairs.len() != gamma.len() {
        return Err(WsraError::Train(format!(
            "batch loss got {} pairs but {} gamma weights",
            pairs.len(),
            gamma.len()
        )));
    }
    let mut exponents = Vec::with_capacity(pairs.len());
    for (&(s_p, s_n), &gm) in pairs.iter().zip(gamma) {
        let gap = g.sub(s_n, s_p)?;
        let hinge = g.add_const(gap, margin);
        exponents.push(g.scalar_mul(hinge, tau * gm));
    }
    let z = g.stack(&exponents)?;
    g.log1p_sum_exp(z)
}

/// Assemble the full objective for one batch. Components with zero weight
/// are skipped; snippet and batch terms also require at least two items.
pub fn total_loss(
    g: &mut Graph,
    model: &WsraModel,
    batch: &Batch,
    weights: &LossWeights,
    pairing: BetaPairing,
) -> Result<LossBreakdown> {
    weights.validate()?;
    if batch.is_empty() {
        return Err(WsraError::Train("total loss over an empty batch".into()));
    }
    let n = batch.len();
    let query_nodes: Vec<NodeId> =
        batch.items.iter().map(|it| g.constant_vector(&it.query.embedding)).collect();

    // video attention is shared by the video and batch terms
    let need_video = weights.alpha_w > 0.0;
    let need_batch = weights.delta_w > 0.0 && n >= 2;
    let need_snippet = weights.beta_w > 0.0 && n >= 2;

    let attentions = if need_video || need_batch {
        let mut atts = Vec::with_capacity(n);
        for (item, &q) in batch.items.iter().zip(&query_nodes) {
            atts.push(video_attention(g, &model.phi_video, &item.features, q)?);
        }
        Some(atts)
    } else {
        None
    };

    let mut video_node = None;
    if need_video {
        let atts = attentions.as_ref().unwrap();
        let mut pairs = Vec::with_capacity(n);
        for (att, &q) in atts.iter().zip(&query_nodes) {
            let s_p = score(g, &model.phi_video, att.v_f, q)?;
            let s_n = score(g, &model.phi_video, att.v_b, q)?;
            pairs.push((s_p, s_n));
        }
        video_node = Some(video_loss(g, &pairs, weights.margin, weights.tau)?);
    }

    let mut snippet_node = None;
    if need_snippet {
        let mut per_video = Vec::with_capacity(n);
        for (j, item) in batch.items.iter().enumerate() {
            let neg = item.neg_index;
            if batch.items[neg].query.id == item.query.id {
                return Err(WsraError::Train(format!(
                    "positive and negative query share id '{}'",
                    item.query.id
                )));
            }
            let beta_rows = snippet_weights(g, &model.phi_snippet, &item.features, &query_nodes)?;
            let mut terms = Vec::with_capacity(item.features.num_snippets());
            for (t, &beta_row) in beta_rows.iter().enumerate() {
                let v = g.constant_vector(item.features.row(t));
                let s_p = score(g, &model.phi_snippet, v, query_nodes[j])?;
                let v2 = g.constant_vector(item.features.row(t));
                let s_n = score(g, &model.phi_snippet, v2, query_nodes[neg])?;
                let beta_pos = g.index(beta_row, j)?;
                let beta_neg = g.index(beta_row, neg)?;
                terms.push(SnippetTerm { s_p, s_n, beta_pos, beta_neg });
            }
            per_video.push(snippet_loss(g, &terms, weights.margin, weights.tau, pairing)?);
        }
        let mut acc = per_video[0];
        for &l in &per_video[1..] {
            acc = g.add(acc, l)?;
        }
        snippet_node = Some(acc);
    }

    let mut batch_node = None;
    if need_batch {
        let atts = attentions.as_ref().unwrap();
        let queries: Vec<&[f64]> = batch.items.iter().map(|it| it.query.embedding.as_slice()).collect();
        let pseudo: Vec<usize> = batch.items.iter().map(|it| it.pseudo_positive).collect();
        let gamma = batch_weights(&queries, &pseudo)?;
        let mut pairs = Vec::with_capacity(n);
        for (i, item) in batch.items.iter().enumerate() {
            let partner = atts[item.pseudo_positive].v_f;
            let s_p = g.cosine(atts[i].v_f, partner)?;
            let s_n = g.cosine(atts[i].v_b, partner)?;
            pairs.push((s_p, s_n));
        }
        batch_node = Some(batch_loss(g, &pairs, &gamma, weights.margin, weights.tau)?);
    }

    let mut total_node = g.constant_scalar(0.0);
    let mut video_val = 0.0;
    let mut snippet_val = 0.0;
    let mut batch_val = 0.0;
    if let Some(v) = video_node {
        video_val = g.value(v);
        let term = g.scalar_mul(v, weights.alpha_w);
        total_node = g.add(total_node, term)?;
    }
    if let Some(s) = snippet_node {
        snippet_val = g.value(s);
        let term = g.scalar_mul(s, weights.beta_w);
        total_node = g.add(total_node, term)?;
    }
    if let Some(b) = batch_node {
        batch_val = g.value(b);
        let term = g.scalar_mul(b, weights.delta_w);
        total_node = g.add(total_node, term)?;
    }

    Ok(LossBreakdown {
        video: video_val,
        snippet: snippet_val,
        batch: batch_val,
        total: g.value(total_node),
        total_node,
    })
}
