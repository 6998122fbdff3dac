//! Shared helpers for the integration suites: central finite differences
//! against analytic gradients, and randomized batch construction.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use wsra::data::{FeatureMatrix, TrainQuery};
use wsra::numgrad::Param;
use wsra::sampling::{Batch, BatchItem};

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-3;
pub const FD_ABS_FLOOR: f64 = 1e-6;

/// Central finite difference of `eval` w.r.t. component `i` of `p`,
/// restoring the original value afterwards.
pub fn central_diff(p: &Param, i: usize, mut eval: impl FnMut() -> f64) -> f64 {
    let orig = p.borrow().values[i];
    p.borrow_mut().values[i] = orig + FD_STEP;
    let plus = eval();
    p.borrow_mut().values[i] = orig - FD_STEP;
    let minus = eval();
    p.borrow_mut().values[i] = orig;
    (plus - minus) / (2.0 * FD_STEP)
}

/// Relative comparison with an absolute floor for near-zero gradients.
pub fn gradients_match(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= FD_ABS_FLOOR || diff <= FD_REL_TOL * analytic.abs().max(numeric.abs())
}

pub fn assert_gradients_match(analytic: f64, numeric: f64, what: &str) {
    assert!(
        gradients_match(analytic, numeric),
        "{}: analytic {} vs finite-difference {}",
        what,
        analytic,
        numeric
    );
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, t: usize, d: usize) -> FeatureMatrix {
    FeatureMatrix::new(t, d, random_vec(rng, t * d)).unwrap()
}

/// A fully populated random batch: item i's hard negative and
/// pseudo-positive is item (i + 1) mod n, each item its own video.
pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, t: usize, d_v: usize, d_t: usize) -> Batch {
    let items = (0..n)
        .map(|i| BatchItem {
            video_id: format!("v{}", i),
            features: random_matrix(rng, t, d_v),
            query: TrainQuery {
                id: format!("q{}", i),
                video_id: format!("v{}", i),
                embedding: random_vec(rng, d_t),
            },
            neg_index: (i + 1) % n,
            pseudo_positive: (i + 1) % n,
        })
        .collect();
    Batch { items }
}

use rand::SeedableRng;
use wsra::attention::{batch_weights, snippet_weights, video_attention};
use wsra::losses::{
    batch_loss, snippet_loss, total_loss, video_loss, BetaPairing, LossWeights, SnippetTerm,
};
use wsra::numgrad::Graph;
use wsra::scoring::{score, ScoringParams, WsraModel};

fn collect_param_grads(params: &[Param]) -> Vec<Vec<f64>> {
    params
        .iter()
        .map(|p| {
            let t = p.borrow();
            t.grad.clone().unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect()
}

fn check_all_params(
    params: &[Param],
    analytic: &[Vec<f64>],
    mut eval: impl FnMut() -> f64,
    what: &str,
) -> Result<(), String> {
    for (k, p) in params.iter().enumerate() {
        let numel = p.borrow().numel();
        for i in 0..numel {
            let numeric = central_diff(p, i, &mut eval);
            if !gradients_match(analytic[k][i], numeric) {
                return Err(format!(
                    "{} param {} component {}: analytic {} vs finite-difference {}",
                    what, k, i, analytic[k][i], numeric
                ));
            }
        }
    }
    Ok(())
}

/// Gradient check of the video-level loss through the video head.
pub fn check_video_loss_gradients(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d_v, d_t, n) = (8, 8, 4);
    let phi = ScoringParams::init(d_v + d_t, &mut rng);
    let fores: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d_v)).collect();
    let backs: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d_v)).collect();
    let queries: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d_t)).collect();

    let eval = |phi: &ScoringParams| -> f64 {
        let mut g = Graph::new();
        let pairs: Vec<_> = (0..n)
            .map(|i| {
                let q = g.constant_vector(&queries[i]);
                let vf = g.constant_vector(&fores[i]);
                let vb = g.constant_vector(&backs[i]);
                let s_p = score(&mut g, phi, vf, q).unwrap();
                let s_n = score(&mut g, phi, vb, q).unwrap();
                (s_p, s_n)
            })
            .collect();
        let loss = video_loss(&mut g, &pairs, 0.4, 1.0).unwrap();
        g.value(loss)
    };

    let mut g = Graph::new();
    let pairs: Vec<_> = (0..n)
        .map(|i| {
            let q = g.constant_vector(&queries[i]);
            let vf = g.constant_vector(&fores[i]);
            let vb = g.constant_vector(&backs[i]);
            let s_p = score(&mut g, &phi, vf, q).unwrap();
            let s_n = score(&mut g, &phi, vb, q).unwrap();
            (s_p, s_n)
        })
        .collect();
    let loss = video_loss(&mut g, &pairs, 0.4, 1.0).unwrap();
    g.backward(loss).unwrap();
    let params = phi.params();
    let analytic = collect_param_grads(&params);
    check_all_params(&params, &analytic, || eval(&phi), "video_loss")
}

/// Gradient check of one video's snippet-level loss through the snippet head.
pub fn check_snippet_loss_gradients(seed: u64, pairing: BetaPairing) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d_v, d_t, n, t) = (8, 8, 4, 5);
    let phi = ScoringParams::init(d_v + d_t, &mut rng);
    let video = random_matrix(&mut rng, t, d_v);
    let queries: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d_t)).collect();
    let (pos, neg) = (0usize, 1usize);

    let eval = |phi: &ScoringParams| -> f64 {
        let mut g = Graph::new();
        let query_nodes: Vec<_> = queries.iter().map(|q| g.constant_vector(q)).collect();
        let beta = snippet_weights(&mut g, phi, &video, &query_nodes).unwrap();
        let terms: Vec<SnippetTerm> = (0..t)
            .map(|s| {
                let v = g.constant_vector(video.row(s));
                let s_p = score(&mut g, phi, v, query_nodes[pos]).unwrap();
                let v2 = g.constant_vector(video.row(s));
                let s_n = score(&mut g, phi, v2, query_nodes[neg]).unwrap();
                SnippetTerm {
                    s_p,
                    s_n,
                    beta_pos: g.index(beta[s], pos).unwrap(),
                    beta_neg: g.index(beta[s], neg).unwrap(),
                }
            })
            .collect();
        let loss = snippet_loss(&mut g, &terms, 0.4, 1.0, pairing).unwrap();
        g.value(loss)
    };

    // analytic pass: same construction, then backward
    let mut g = Graph::new();
    let query_nodes: Vec<_> = queries.iter().map(|q| g.constant_vector(q)).collect();
    let beta = snippet_weights(&mut g, &phi, &video, &query_nodes).unwrap();
    let terms: Vec<SnippetTerm> = (0..t)
        .map(|s| {
            let v = g.constant_vector(video.row(s));
            let s_p = score(&mut g, &phi, v, query_nodes[pos]).unwrap();
            let v2 = g.constant_vector(video.row(s));
            let s_n = score(&mut g, &phi, v2, query_nodes[neg]).unwrap();
            SnippetTerm {
                s_p,
                s_n,
                beta_pos: g.index(beta[s], pos).unwrap(),
                beta_neg: g.index(beta[s], neg).unwrap(),
            }
        })
        .collect();
    let loss = snippet_loss(&mut g, &terms, 0.4, 1.0, pairing).unwrap();
    g.backward(loss).unwrap();
    let params = phi.params();
    let analytic = collect_param_grads(&params);
    check_all_params(&params, &analytic, || eval(&phi), "snippet_loss")
}

/// Gradient check of the batch-level loss through attention and cosine.
pub fn check_batch_loss_gradients(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d_v, d_t, n, t) = (8, 8, 4, 5);
    let phi = ScoringParams::init(d_v + d_t, &mut rng);
    let videos: Vec<FeatureMatrix> = (0..n).map(|_| random_matrix(&mut rng, t, d_v)).collect();
    let queries: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d_t)).collect();
    let pseudo: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let query_refs: Vec<&[f64]> = queries.iter().map(|q| q.as_slice()).collect();
    let gamma = batch_weights(&query_refs, &pseudo).unwrap();

    let eval = |phi: &ScoringParams| -> f64 {
        let mut g = Graph::new();
        let atts: Vec<_> = (0..n)
            .map(|i| {
                let q = g.constant_vector(&queries[i]);
                video_attention(&mut g, phi, &videos[i], q).unwrap()
            })
            .collect();
        let pairs: Vec<_> = (0..n)
            .map(|i| {
                let partner = atts[pseudo[i]].v_f;
                let s_p = g.cosine(atts[i].v_f, partner).unwrap();
                let s_n = g.cosine(atts[i].v_b, partner).unwrap();
                (s_p, s_n)
            })
            .collect();
        let loss = batch_loss(&mut g, &pairs, &gamma, 0.4, 1.0).unwrap();
        g.value(loss)
    };

    let mut g = Graph::new();
    let atts: Vec<_> = (0..n)
        .map(|i| {
            let q = g.constant_vector(&queries[i]);
            video_attention(&mut g, &phi, &videos[i], q).unwrap()
        })
        .collect();
    let pairs: Vec<_> = (0..n)
        .map(|i| {
            let partner = atts[pseudo[i]].v_f;
            let s_p = g.cosine(atts[i].v_f, partner).unwrap();
            let s_n = g.cosine(atts[i].v_b, partner).unwrap();
            (s_p, s_n)
        })
        .collect();
    let loss = batch_loss(&mut g, &pairs, &gamma, 0.4, 1.0).unwrap();
    g.backward(loss).unwrap();
    let params = phi.params();
    let analytic = collect_param_grads(&params);
    check_all_params(&params, &analytic, || eval(&phi), "batch_loss")
}

/// Gradient check of the weighted composite over all parameters of both
/// heads for one random batch (N=4, T=5, d=8).
pub fn check_total_loss_gradients(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d_v, d_t) = (8, 8);
    let model = WsraModel::init(d_v, d_t, 0.4, 1.0, &mut rng).unwrap();
    let batch = random_batch(&mut rng, 4, 5, d_v, d_t);
    let weights = LossWeights::default();

    let eval = |model: &WsraModel| -> f64 {
        let mut g = Graph::new();
        total_loss(&mut g, model, &batch, &weights, BetaPairing::Printed).unwrap().total
    };

    let mut g = Graph::new();
    let lb = total_loss(&mut g, &model, &batch, &weights, BetaPairing::Printed).unwrap();
    g.backward(lb.total_node).unwrap();
    let params = model.params();
    let analytic = collect_param_grads(&params);
    check_all_params(&params, &analytic, || eval(&model), "total_loss")
}

/// Sigmoid-affine score recomputed directly from the parameter values.
pub fn score_oracle(phi: &ScoringParams, v: &[f64], t: &[f64]) -> f64 {
    let w = phi.w.borrow();
    let b = phi.b.borrow();
    let mut z = b.values[0];
    for (wi, xi) in w.values.iter().zip(v.iter().chain(t.iter())) {
        z += wi * xi;
    }
    1.0 / (1.0 + (-z).exp())
}

fn softmax_oracle(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn hinge_sum_oracle(gaps_scaled: &[f64]) -> f64 {
    (1.0 + gaps_scaled.iter().map(|z| z.exp()).sum::<f64>()).ln()
}

pub const ORACLE_TOL: f64 = 1e-12;

fn close(a: f64, b: f64, what: &str) -> Result<(), String> {
    if (a - b).abs() > ORACLE_TOL {
        return Err(format!("{}: graph {} vs oracle {} (diff {})", what, a, b, (a - b).abs()));
    }
    Ok(())
}

/// One randomized case comparing every attention weight and loss value
/// produced through the graph against direct closed-form recomputation.
pub fn check_formula_oracle_case(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let d_v = rng.gen_range(2..6);
    let d_t = rng.gen_range(2..6);
    let t = rng.gen_range(2..6);
    let n = rng.gen_range(2..5);
    let margin = rng.gen_range(0.1..0.8);
    let tau = rng.gen_range(0.5..2.0);

    let phi_v = ScoringParams::init(d_v + d_t, rng);
    let phi_s = ScoringParams::init(d_v + d_t, rng);
    let videos: Vec<FeatureMatrix> = (0..n).map(|_| random_matrix(rng, t, d_v)).collect();
    let queries: Vec<Vec<f64>> = (0..n).map(|_| random_vec(rng, d_t)).collect();
    let pseudo: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();

    let mut g = Graph::new();
    let query_nodes: Vec<_> = queries.iter().map(|q| g.constant_vector(q)).collect();

    // alpha and the pooled features, item by item
    let mut vf_oracle = Vec::with_capacity(n);
    let mut vb_oracle = Vec::with_capacity(n);
    let mut atts = Vec::with_capacity(n);
    for i in 0..n {
        let att = video_attention(&mut g, &phi_v, &videos[i], query_nodes[i])
            .map_err(|e| e.to_string())?;
        let scores: Vec<f64> =
            (0..t).map(|s| score_oracle(&phi_v, videos[i].row(s), &queries[i])).collect();
        let alpha = softmax_oracle(&scores);
        for (s, &a) in alpha.iter().enumerate() {
            close(g.values(att.alpha)[s], a, "alpha")?;
        }
        let mut vf = vec![0.0; d_v];
        let mut vb = vec![0.0; d_v];
        for s in 0..t {
            for (k, &x) in videos[i].row(s).iter().enumerate() {
                vf[k] += alpha[s] * x;
                vb[k] += (1.0 - alpha[s]) / (t as f64 - 1.0) * x;
            }
        }
        for k in 0..d_v {
            close(g.values(att.v_f)[k], vf[k], "v_f")?;
            close(g.values(att.v_b)[k], vb[k], "v_b")?;
        }
        vf_oracle.push(vf);
        vb_oracle.push(vb);
        atts.push(att);
    }

    // video loss against its closed form
    let mut pairs = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n);
    for i in 0..n {
        let s_p = score(&mut g, &phi_v, atts[i].v_f, query_nodes[i]).map_err(|e| e.to_string())?;
        let s_n = score(&mut g, &phi_v, atts[i].v_b, query_nodes[i]).map_err(|e| e.to_string())?;
        gaps.push(tau * (g.value(s_n) - g.value(s_p) + margin));
        pairs.push((s_p, s_n));
    }
    let lv = video_loss(&mut g, &pairs, margin, tau).map_err(|e| e.to_string())?;
    close(g.value(lv), hinge_sum_oracle(&gaps), "video_loss")?;

    // beta for one video, then the snippet loss of that video
    let beta = snippet_weights(&mut g, &phi_s, &videos[0], &query_nodes)
        .map_err(|e| e.to_string())?;
    let beta_oracle: Vec<Vec<f64>> = (0..t)
        .map(|s| {
            let scores: Vec<f64> =
                queries.iter().map(|q| score_oracle(&phi_s, videos[0].row(s), q)).collect();
            softmax_oracle(&scores)
        })
        .collect();
    for s in 0..t {
        for j in 0..n {
            close(g.values(beta[s])[j], beta_oracle[s][j], "beta")?;
        }
    }
    let (pos, neg) = (0usize, 1usize);
    let mut terms = Vec::with_capacity(t);
    let mut gaps = Vec::with_capacity(t);
    for s in 0..t {
        let v = g.constant_vector(videos[0].row(s));
        let s_p = score(&mut g, &phi_s, v, query_nodes[pos]).map_err(|e| e.to_string())?;
        let v2 = g.constant_vector(videos[0].row(s));
        let s_n = score(&mut g, &phi_s, v2, query_nodes[neg]).map_err(|e| e.to_string())?;
        gaps.push(tau * (beta_oracle[s][pos] * g.value(s_n) - beta_oracle[s][neg] * g.value(s_p) + margin));
        terms.push(SnippetTerm {
            s_p,
            s_n,
            beta_pos: g.index(beta[s], pos).map_err(|e| e.to_string())?,
            beta_neg: g.index(beta[s], neg).map_err(|e| e.to_string())?,
        });
    }
    let ls = snippet_loss(&mut g, &terms, margin, tau, BetaPairing::Printed)
        .map_err(|e| e.to_string())?;
    close(g.value(ls), hinge_sum_oracle(&gaps), "snippet_loss")?;

    // gamma and the batch loss
    let query_refs: Vec<&[f64]> = queries.iter().map(|q| q.as_slice()).collect();
    let gamma = batch_weights(&query_refs, &pseudo).map_err(|e| e.to_string())?;
    for i in 0..n {
        let num = cosine_oracle(&queries[i], &queries[pseudo[i]]).exp();
        let den: f64 = (0..n).map(|j| cosine_oracle(&queries[i], &queries[j]).exp()).sum();
        close(gamma[i], num / den, "gamma")?;
    }
    let mut pairs = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n);
    for i in 0..n {
        let partner = atts[pseudo[i]].v_f;
        let s_p = g.cosine(atts[i].v_f, partner).map_err(|e| e.to_string())?;
        let s_n = g.cosine(atts[i].v_b, partner).map_err(|e| e.to_string())?;
        gaps.push(tau * gamma[i] * (g.value(s_n) - g.value(s_p) + margin));
        pairs.push((s_p, s_n));
    }
    let lb = batch_loss(&mut g, &pairs, &gamma, margin, tau).map_err(|e| e.to_string())?;
    close(g.value(lb), hinge_sum_oracle(&gaps), "batch_loss")?;
    Ok(())
}

/// Independently re-derived sliding-window spans: every multiple of the
/// stride that fits, plus a clamped tail, deduplicated.
pub fn sliding_window_oracle(duration: f64, fractions: &[f64], overlap: f64) -> Vec<(f64, f64)> {
    let eps = 1e-9;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let push = |s: f64, e: f64, out: &mut Vec<(f64, f64)>| {
        if !out.iter().any(|&(a, b)| (a - s).abs() < eps && (b - e).abs() < eps) {
            out.push((s, e));
        }
    };
    for &f in fractions {
        let len = f * duration;
        let stride = (1.0 - overlap) * len;
        let mut k = 0usize;
        let mut reached_end = false;
        loop {
            let start = k as f64 * stride;
            if start + len > duration + eps {
                break;
            }
            push(start, start + len, &mut out);
            if start + len >= duration - eps {
                reached_end = true;
            }
            k += 1;
        }
        if !reached_end {
            push(duration - len, duration, &mut out);
        }
    }
    out
}
