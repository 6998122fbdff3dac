//! Cross-modal scoring head: sigmoid of an affine map over the
//! concatenated visual/textual feature pair. The model holds two
//! independently parameterized heads.

use rand::Rng;

use crate::data::FeatureMatrix;
use crate::error::{Result, WsraError};
use crate::numgrad::{Graph, NodeId, Param, Tensor};

/// Weights and bias of one scoring head.
#[derive(Debug, Clone)]
pub struct ScoringParams {
    /// Shape [1, d_in] where d_in = visual dim + text dim.
    pub w: Param,
    /// Shape [1].
    pub b: Param,
    pub d_in: usize,
}

impl ScoringParams {
    /// Uniform(-1/sqrt(d_in), 1/sqrt(d_in)) weights and zero bias, so
    /// initial scores stay near 0.5 and initial attention near uniform.
    pub fn init<R: Rng>(d_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let w: Vec<f64> = (0..d_in).map(|_| rng.gen_range(-bound..bound)).collect();
        ScoringParams {
            w: Tensor::new(vec![1, d_in], w).unwrap().trainable().into_param(),
            b: Tensor::scalar(0.0).trainable().into_param(),
            d_in,
        }
    }

    pub fn zeros(d_in: usize) -> Self {
        ScoringParams {
            w: Tensor::zeros(vec![1, d_in]).trainable().into_param(),
            b: Tensor::scalar(0.0).trainable().into_param(),
            d_in,
        }
    }

    pub fn params(&self) -> Vec<Param> {
        vec![self.w.clone(), self.b.clone()]
    }

    /// Plain forward pass outside any graph; bit-identical to the graph path.
    pub fn score_values(&self, v: &[f64], t: &[f64]) -> Result<f64> {
        if v.len() + t.len() != self.d_in {
            return Err(WsraError::Shape {
                op: "score".into(),
                details: format!("visual {} + text {} != head input {}", v.len(), t.len(), self.d_in),
            });
        }
        let w = self.w.borrow();
        let mut acc = 0.0;
        for (i, x) in v.iter().enumerate() {
            acc += w.values[i] * x;
        }
        for (j, x) in t.iter().enumerate() {
            acc += w.values[v.len() + j] * x;
        }
        acc += self.b.borrow().values[0];
        Ok(if acc >= 0.0 { 1.0 / (1.0 + (-acc).exp()) } else { let e = acc.exp(); e / (1.0 + e) })
    }
}

/// Graph-level score: sigmoid(affine(concat(v, t))).
pub fn score(g: &mut Graph, params: &ScoringParams, v: NodeId, t: NodeId) -> Result<NodeId> {
    let cat = g.concat(v, t)?;
    let w = g.leaf(&params.w);
    let b = g.leaf(&params.b);
    let pre = g.affine(cat, w, b)?;
    Ok(g.sigmoid(pre))
}

/// Score every snippet of a video against one query; returns a T-vector node.
pub fn score_matrix(
    g: &mut Graph,
    params: &ScoringParams,
    video: &FeatureMatrix,
    t: NodeId,
) -> Result<NodeId> {
    if video.num_snippets() == 0 {
        return Err(WsraError::Shape { op: "score_matrix".into(), details: "empty feature matrix".into() });
    }
    let mut rows = Vec::with_capacity(video.num_snippets());
    for i in 0..video.num_snippets() {
        let v = g.constant_vector(video.row(i));
        rows.push(score(g, params, v, t)?);
    }
    g.stack(&rows)
}

/// Model container: two independent scoring heads plus the shared
/// margin/temperature hyper-parameters.
#[derive(Debug, Clone)]
pub struct WsraModel {
    pub phi_video: ScoringParams,
    pub phi_snippet: ScoringParams,
    pub d_visual: usize,
    pub d_text: usize,
    pub margin: f64,
    pub tau: f64,
}

impl WsraModel {
    pub fn init<R: Rng>(d_visual: usize, d_text: usize, margin: f64, tau: f64, rng: &mut R) -> Result<Self> {
        if margin <= 0.0 || tau <= 0.0 {
            return Err(WsraError::Config(format!("margin {} and tau {} must be positive", margin, tau)));
        }
        let d_in = d_visual + d_text;
        Ok(WsraModel {
            phi_video: ScoringParams::init(d_in, rng),
            phi_snippet: ScoringParams::init(d_in, rng),
            d_visual,
            d_text,
            margin,
            tau,
        })
    }

    pub fn params(&self) -> Vec<Param> {
        let mut p = self.phi_video.params();
        p.extend(self.phi_snippet.params());
        p
    }
}
