//! Dataset types, manifest I/O, deterministic splits, and the synthetic
//! planted-alignment generator used for desk-scale verification.

mod manifest;
mod synth;

pub use manifest::{load_manifest, write_manifest};
pub use synth::{synthesize, write_synthetic_dataset, SyntheticSpec, SyntheticTruth};

use crate::error::{Result, WsraError};
use crate::grounding::TemporalSpan;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-video snippet features: `num_snippets` rows by `dim` columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    num_snippets: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(num_snippets: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if num_snippets * dim != values.len() {
            return Err(WsraError::Shape {
                op: "FeatureMatrix::new".into(),
                details: format!("{}x{} vs {} values", num_snippets, dim, values.len()),
            });
        }
        Ok(FeatureMatrix { num_snippets, dim, values })
    }

    pub fn num_snippets(&self) -> usize {
        self.num_snippets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column means over all rows.
    pub fn column_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for i in 0..self.num_snippets {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= self.num_snippets as f64);
        out
    }
}

/// One textual query as a frozen embedding plus identity metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub id: String,
    pub video_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VideoRecord {
    pub id: String,
    pub snippet_duration: f64,
    pub features: FeatureMatrix,
}

/// Full query record; the ground-truth span is evaluation-only.
#[derive(Debug, Clone)]
pub struct QueryRecord {
    pub id: String,
    pub video_id: String,
    pub embedding: Vec<f64>,
    pub span: Option<TemporalSpan>,
}

/// Training-side view of a query: by construction there is no span field,
/// so the training path cannot dereference ground truth.
#[derive(Debug, Clone)]
pub struct TrainQuery {
    pub id: String,
    pub video_id: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub d_visual: usize,
    pub d_text: usize,
    pub videos: Vec<VideoRecord>,
    pub queries: Vec<QueryRecord>,
}

impl DatasetManifest {
    pub fn video(&self, id: &str) -> Result<&VideoRecord> {
        self.videos
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| WsraError::Manifest(format!("unknown video id '{}'", id)))
    }

    pub fn query(&self, id: &str) -> Result<&QueryRecord> {
        self.queries
            .iter()
            .find(|q| q.id == id)
            .ok_or_else(|| WsraError::Manifest(format!("unknown query id '{}'", id)))
    }

    /// Validate the manifest invariants.
    pub fn validate(&self) -> Result<()> {
        if self.videos.is_empty() {
            return Err(WsraError::Manifest("manifest has no videos".into()));
        }
        for v in &self.videos {
            if v.features.num_snippets() < 2 {
                return Err(WsraError::Manifest(format!(
                    "video '{}' has {} snippets; at least 2 required",
                    v.id,
                    v.features.num_snippets()
                )));
            }
            if v.features.dim() != self.d_visual {
                return Err(WsraError::Manifest(format!(
                    "video '{}' has feature dim {}, manifest says {}",
                    v.id,
                    v.features.dim(),
                    self.d_visual
                )));
            }
            if v.snippet_duration <= 0.0 {
                return Err(WsraError::Manifest(format!(
                    "video '{}' has non-positive snippet duration",
                    v.id
                )));
            }
        }
        for q in &self.queries {
            let video = self.video(&q.video_id).map_err(|_| {
                WsraError::Manifest(format!("query '{}' references unknown video '{}'", q.id, q.video_id))
            })?;
            if q.embedding.len() != self.d_text {
                return Err(WsraError::Manifest(format!(
                    "query '{}' has embedding dim {}, manifest says {}",
                    q.id,
                    q.embedding.len(),
                    self.d_text
                )));
            }
            if let Some(span) = &q.span {
                let duration = video.features.num_snippets() as f64 * video.snippet_duration;
                if span.start < 0.0 || span.end > duration + 1e-9 {
                    return Err(WsraError::Manifest(format!(
                        "query '{}' span [{}, {}) outside video duration {}",
                        q.id, span.start, span.end, duration
                    )));
                }
            }
        }
        Ok(())
    }

    /// (video, query) training pairs with the span field stripped by type.
    pub fn train_pairs(&self) -> Vec<(&VideoRecord, TrainQuery)> {
        self.queries
            .iter()
            .filter_map(|q| {
                self.videos.iter().find(|v| v.id == q.video_id).map(|v| {
                    (
                        v,
                        TrainQuery {
                            id: q.id.clone(),
                            video_id: q.video_id.clone(),
                            embedding: q.embedding.clone(),
                        },
                    )
                })
            })
            .collect()
    }
}

/// Split a manifest into disjoint train/val/test parts by video id.
pub fn split(
    manifest: &DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest)> {
    let total = fractions.0 + fractions.1 + fractions.2;
    if (total - 1.0).abs() > 1e-9 {
        return Err(WsraError::Config(format!("split fractions sum to {}, expected 1", total)));
    }
    let mut ids: Vec<&str> = manifest.videos.iter().map(|v| v.id.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    let n_train = (fractions.0 * n as f64).round() as usize;
    let n_val = (fractions.1 * n as f64).round() as usize;
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);

    let subset = |chosen: &[&str]| -> DatasetManifest {
        let videos: Vec<VideoRecord> = manifest
            .videos
            .iter()
            .filter(|v| chosen.contains(&v.id.as_str()))
            .cloned()
            .collect();
        let queries: Vec<QueryRecord> = manifest
            .queries
            .iter()
            .filter(|q| chosen.contains(&q.video_id.as_str()))
            .cloned()
            .collect();
        DatasetManifest { d_visual: manifest.d_visual, d_text: manifest.d_text, videos, queries }
    };

    let train = subset(&ids[..n_train]);
    let val = subset(&ids[n_train..n_train + n_val]);
    let test = subset(&ids[n_train + n_val..]);
    Ok((train, val, test))
}
