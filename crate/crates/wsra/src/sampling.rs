//! Training-batch assembly: cosine ranking of in-batch queries,
//! top/last-K filtering of the negative pool, and pseudo-positive mining.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{FeatureMatrix, TrainQuery, VideoRecord};
use crate::error::{Result, WsraError};
use crate::numgrad::cosine_values;

#[derive(Debug, Clone, Copy)]
pub struct SamplingConfig {
    pub k_top: usize,
    pub k_last: usize,
    pub batch_size: usize,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(WsraError::Sampling(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.k_top + self.k_last >= self.batch_size - 1 {
            return Err(WsraError::Sampling(format!(
                "k_top + k_last must leave a negative in a batch of {}: k_top={}, k_last={}",
                self.batch_size, self.k_top, self.k_last
            )));
        }
        Ok(())
    }
}

/// One training item plus its in-batch sampling artifacts. Indices refer
/// to positions within the owning [`Batch`].
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub video_id: String,
    pub features: FeatureMatrix,
    pub query: TrainQuery,
    /// Batch position of the sampled hard-negative query.
    pub neg_index: usize,
    /// Batch position of the mined pseudo-positive item (different video).
    pub pseudo_positive: usize,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Sort pool indices by descending cosine similarity to the anchor;
/// ties break by ascending original index.
pub fn rank_queries(anchor: &[f64], pool: &[&[f64]]) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(WsraError::Sampling("cannot rank an empty query pool".into()));
    }
    let mut sims = Vec::with_capacity(pool.len());
    for (i, q) in pool.iter().enumerate() {
        sims.push((i, cosine_values(anchor, q)?));
    }
    sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(sims.into_iter().map(|(i, _)| i).collect())
}

/// Pick the pseudo-positive (top ranked) and a uniform hard negative from
/// the band remaining after removing the top and last K entries.
pub fn select_negatives<R: Rng>(
    ranked: &[usize],
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<(usize, usize)> {
    if ranked.len() <= cfg.k_top + cfg.k_last {
        return Err(WsraError::Sampling(format!(
            "pool of {} leaves no hard negatives with k_top={}, k_last={}",
            ranked.len(),
            cfg.k_top,
            cfg.k_last
        )));
    }
    let band = &ranked[cfg.k_top..ranked.len() - cfg.k_last];
    let neg = band[rng.gen_range(0..band.len())];
    Ok((neg, ranked[0]))
}

/// Populate negatives and pseudo-positives for a fixed set of batch items.
/// The pseudo-positive is the highest-ranked pool entry with a different
/// video id, so the batch loss never pairs a video with itself.
fn populate_batch<R: Rng>(
    chosen: &[(&VideoRecord, TrainQuery)],
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Batch> {
    let n = chosen.len();
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let anchor = &chosen[i].1;
        // pool positions are batch positions excluding i
        let pool_positions: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let pool: Vec<&[f64]> =
            pool_positions.iter().map(|&j| chosen[j].1.embedding.as_slice()).collect();
        let ranked = rank_queries(&anchor.embedding, &pool)?;
        let (neg_pool, top_pool) = select_negatives(&ranked, cfg, rng)?;
        let neg_index = pool_positions[neg_pool];
        let mut pseudo_positive = pool_positions[top_pool];
        if chosen[pseudo_positive].0.id == chosen[i].0.id {
            pseudo_positive = ranked
                .iter()
                .map(|&r| pool_positions[r])
                .find(|&j| chosen[j].0.id != chosen[i].0.id)
                .ok_or_else(|| {
                    WsraError::Sampling(format!(
                        "no cross-video pseudo-positive available for video '{}'",
                        chosen[i].0.id
                    ))
                })?;
        }
        debug_assert_ne!(chosen[neg_index].1.id, anchor.id);
        items.push(BatchItem {
            video_id: chosen[i].0.id.clone(),
            features: chosen[i].0.features.clone(),
            query: anchor.clone(),
            neg_index,
            pseudo_positive,
        });
    }
    Ok(Batch { items })
}

/// Draw one batch of N items without replacement and populate its
/// sampling artifacts.
pub fn assemble_batch<R: Rng>(
    pairs: &[(&VideoRecord, TrainQuery)],
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Batch> {
    cfg.validate()?;
    if pairs.len() < cfg.batch_size {
        return Err(WsraError::Sampling(format!(
            "dataset has {} (video, query) pairs, batch needs {}",
            pairs.len(),
            cfg.batch_size
        )));
    }
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(rng);
    let chosen: Vec<(&VideoRecord, TrainQuery)> = idx[..cfg.batch_size]
        .iter()
        .map(|&i| (pairs[i].0, pairs[i].1.clone()))
        .collect();
    populate_batch(&chosen, cfg, rng)
}

/// One epoch: shuffle all pairs and chunk into floor(len / N) full batches.
pub fn assemble_epoch<R: Rng>(
    pairs: &[(&VideoRecord, TrainQuery)],
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Vec<Batch>> {
    cfg.validate()?;
    if pairs.len() < cfg.batch_size {
        return Err(WsraError::Sampling(format!(
            "dataset has {} (video, query) pairs, batch needs {}",
            pairs.len(),
            cfg.batch_size
        )));
    }
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(rng);
    let mut batches = Vec::new();
    for chunk in idx.chunks_exact(cfg.batch_size) {
        let chosen: Vec<(&VideoRecord, TrainQuery)> =
            chunk.iter().map(|&i| (pairs[i].0, pairs[i].1.clone())).collect();
        batches.push(populate_batch(&chosen, cfg, rng)?);
    }
    Ok(batches)
}
