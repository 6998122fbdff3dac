//! Referring-attention weights: per-snippet alpha with fore/background
//! synthesis, per-snippet-over-queries beta, and batch-level gamma.

use crate::data::FeatureMatrix;
use crate::error::{Result, WsraError};
use crate::numgrad::{cosine_values, Graph, NodeId};
use crate::scoring::{score, score_matrix, ScoringParams};

/// Attention over one video given one query, plus the synthesized features.
#[derive(Debug, Clone, Copy)]
pub struct VideoAttention {
    /// T-vector of snippet weights; sums to 1.
    pub alpha: NodeId,
    /// Foreground feature: sum_t alpha_t v_t.
    pub v_f: NodeId,
    /// Background feature: (1/(T-1)) sum_t (1 - alpha_t) v_t.
    pub v_b: NodeId,
}

/// Softmax attention over phi_video snippet scores and the fore/background
/// pooled features. Requires at least two snippets.
pub fn video_attention(
    g: &mut Graph,
    phi_video: &ScoringParams,
    video: &FeatureMatrix,
    query: NodeId,
) -> Result<VideoAttention> {
    let t = video.num_snippets();
    if t < 2 {
        return Err(WsraError::Shape {
            op: "video_attention".into(),
            details: "background undefined for single-snippet video".into(),
        });
    }
    let scores = score_matrix(g, phi_video, video, query)?;
    let alpha = g.softmax(scores)?;

    let mut v_f: Option<NodeId> = None;
    let mut v_b: Option<NodeId> = None;
    let back_scale = 1.0 / (t as f64 - 1.0);
    for i in 0..t {
        let row = g.constant_vector(video.row(i));
        let a_i = g.index(alpha, i)?;
        let fore_term = g.scale_vec(a_i, row)?;
        v_f = Some(match v_f {
            Some(acc) => g.add(acc, fore_term)?,
            None => fore_term,
        });
        let neg_a = g.scalar_mul(a_i, -1.0);
        let one_minus = g.add_const(neg_a, 1.0);
        let w_i = g.scalar_mul(one_minus, back_scale);
        let back_term = g.scale_vec(w_i, row)?;
        v_b = Some(match v_b {
            Some(acc) => g.add(acc, back_term)?,
            None => back_term,
        });
    }
    Ok(VideoAttention { alpha, v_f: v_f.unwrap(), v_b: v_b.unwrap() })
}

/// Per-snippet softmax over the batch's N queries under phi_snippet.
/// Returns one N-vector node per snippet. Requires N >= 2.
pub fn snippet_weights(
    g: &mut Graph,
    phi_snippet: &ScoringParams,
    video: &FeatureMatrix,
    queries: &[NodeId],
) -> Result<Vec<NodeId>> {
    if queries.len() < 2 {
        return Err(WsraError::Sampling(format!(
            "snippet weights need at least 2 queries, got {}",
            queries.len()
        )));
    }
    let mut rows = Vec::with_capacity(video.num_snippets());
    for i in 0..video.num_snippets() {
        let mut scores = Vec::with_capacity(queries.len());
        for &q in queries {
            let v = g.constant_vector(video.row(i));
            scores.push(score(g, phi_snippet, v, q)?);
        }
        let stacked = g.stack(&scores)?;
        rows.push(g.softmax(stacked)?);
    }
    Ok(rows)
}

/// Batch-level weights from text-text cosine: gamma_i =
/// exp(cos(t_i, t_pseudo(i))) / sum_j exp(cos(t_i, t_j)).
///
/// Text embeddings are frozen inputs, so gamma is a plain constant.
pub fn batch_weights(queries: &[&[f64]], pseudo_positive: &[usize]) -> Result<Vec<f64>> {
    let n = queries.len();
    if n < 2 {
        return Err(WsraError::Sampling(format!("batch weights need at least 2 items, got {}", n)));
    }
    if pseudo_positive.len() != n {
        return Err(WsraError::Sampling("pseudo-positive index list length mismatch".into()));
    }
    let mut gamma = Vec::with_capacity(n);
    for i in 0..n {
        let p = pseudo_positive[i];
        if p == i {
            return Err(WsraError::Sampling(format!("item {} is its own pseudo-positive", i)));
        }
        let num = cosine_values(queries[i], queries[p])?.exp();
        let mut den = 0.0;
        for j in 0..n {
            den += cosine_values(queries[i], queries[j])?.exp();
        }
        gamma.push(num / den);
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ScoringParams;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, t: usize, d: usize) -> FeatureMatrix {
        let values: Vec<f64> = (0..t * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureMatrix::new(t, d, values).unwrap()
    }

    #[test]
    fn zero_head_gives_uniform_alpha_and_mean_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let video = random_matrix(&mut rng, 5, 3);
        let phi = ScoringParams::zeros(5);
        let mut g = Graph::new();
        let q = g.constant_vector(&[0.2, -0.3]);
        let att = video_attention(&mut g, &phi, &video, q).unwrap();
        let mean = video.column_means();
        for &a in g.values(att.alpha) {
            assert!((a - 0.2).abs() < 1e-12);
        }
        for (x, m) in g.values(att.v_f).iter().zip(&mean) {
            assert!((x - m).abs() < 1e-12);
        }
        for (x, m) in g.values(att.v_b).iter().zip(&mean) {
            assert!((x - m).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_snippet_captures_foreground() {
        // one snippet pre-activation at +10, rest at -10
        let d = 3;
        let t = 4;
        let mut rows = vec![0.0; t * d];
        for i in 0..t {
            rows[i * d] = if i == 2 { 10.0 } else { -10.0 };
            rows[i * d + 1] = i as f64;
        }
        let video = FeatureMatrix::new(t, d, rows).unwrap();
        // head that reads coordinate 0 of the visual part
        let phi = ScoringParams::zeros(d + 1);
        phi.w.borrow_mut().values[0] = 1.0;
        let mut g = Graph::new();
        let q = g.constant_vector(&[0.0]);
        let att = video_attention(&mut g, &phi, &video, q).unwrap();
        let alpha = g.values(att.alpha).to_vec();
        // scores are sigmoids, so the softmax gap is capped: the best
        // possible single-snippet weight for T=4 is e / (e + 3)
        let cap = std::f64::consts::E / (std::f64::consts::E + 3.0);
        assert!(alpha.iter().enumerate().all(|(i, &a)| i == 2 || a < alpha[2]));
        assert!((alpha[2] - cap).abs() < 1e-3);
        // v_f is exactly the alpha-weighted row blend
        for (d, x) in g.values(att.v_f).iter().enumerate() {
            let want: f64 = (0..t).map(|i| alpha[i] * video.row(i)[d]).sum();
            assert!((x - want).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_sums_to_one_across_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let t = rng.gen_range(2..9);
            let video = random_matrix(&mut rng, t, 4);
            let phi = ScoringParams::init(6, &mut rng);
            let mut g = Graph::new();
            let q = g.constant_vector(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let att = video_attention(&mut g, &phi, &video, q).unwrap();
            let sum: f64 = g.values(att.alpha).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_snippet_video_is_rejected() {
        let video = FeatureMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let phi = ScoringParams::zeros(4);
        let mut g = Graph::new();
        let q = g.constant_vector(&[0.0, 0.0]);
        let err = video_attention(&mut g, &phi, &video, q).unwrap_err().to_string();
        assert!(err.contains("background undefined"));
    }

    #[test]
    fn identical_queries_give_uniform_beta_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let video = random_matrix(&mut rng, 3, 2);
        let phi = ScoringParams::init(4, &mut rng);
        let mut g = Graph::new();
        let q = g.constant_vector(&[0.5, -0.5]);
        let queries = vec![q, q, q, q];
        let beta = snippet_weights(&mut g, &phi, &video, &queries).unwrap();
        for row in beta {
            for &b in g.values(row) {
                assert!((b - 0.25).abs() < 1e-12);
            }
            let sum: f64 = g.values(row).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn beta_matches_loop_and_normalize_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let video = random_matrix(&mut rng, 3, 3);
        let phi = ScoringParams::init(5, &mut rng);
        let query_vals: Vec<Vec<f64>> =
            (0..5).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut g = Graph::new();
        let queries: Vec<_> = query_vals.iter().map(|q| g.constant_vector(q)).collect();
        let beta = snippet_weights(&mut g, &phi, &video, &queries).unwrap();
        for (t, row) in beta.iter().enumerate() {
            let raw: Vec<f64> = query_vals
                .iter()
                .map(|q| phi.score_values(video.row(t), q).unwrap().exp())
                .collect();
            let z: f64 = raw.iter().sum();
            for (got, want) in g.values(*row).iter().zip(raw.iter().map(|r| r / z)) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_directions_give_uniform_gamma() {
        let base = vec![1.0, 2.0, 3.0];
        let scaled: Vec<Vec<f64>> =
            (1..=4).map(|k| base.iter().map(|x| x * k as f64).collect()).collect();
        let refs: Vec<&[f64]> = scaled.iter().map(|v| v.as_slice()).collect();
        let gamma = batch_weights(&refs, &[1, 0, 0, 0]).unwrap();
        for &gm in &gamma {
            assert!((gm - 0.25).abs() < 1e-12);
            assert!(gm > 0.0 && gm < 1.0);
        }
    }

    #[test]
    fn gamma_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let qs: Vec<Vec<f64>> =
            (0..6).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = qs.iter().map(|v| v.as_slice()).collect();
        let pp = [3, 2, 5, 0, 1, 4];
        let gamma = batch_weights(&refs, &pp).unwrap();
        for i in 0..6 {
            let num = cosine_values(&qs[i], &qs[pp[i]]).unwrap().exp();
            let den: f64 = (0..6).map(|j| cosine_values(&qs[i], &qs[j]).unwrap().exp()).sum();
            assert!((gamma[i] - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn self_referential_pseudo_positive_errors() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        assert!(batch_weights(&[&a, &b], &[0, 0]).is_err());
    }
}
