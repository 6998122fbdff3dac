//! Synthetic planted-alignment generator: each video hides a
//! snippet-aligned span whose features are a fixed linear image of the
//! query's concept prototype, with Gaussian noise on top. The generator
//! emits the hidden spans separately so training data never carries them.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{
    split, write_manifest, DatasetManifest, QueryRecord, VideoRecord, FeatureMatrix,
};
use crate::error::{Result, WsraError};
use crate::grounding::{SpanMode, TemporalSpan};

/// Generator configuration; every field has a sensible default.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_videos: usize,
    pub snippets_per_video: usize,
    pub d_visual: usize,
    pub d_text: usize,
    pub num_concepts: usize,
    pub noise_sigma: f64,
    pub snippet_duration: f64,
    /// Planted span length bounds, in whole snippets.
    pub span_min_snippets: usize,
    pub span_max_snippets: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_videos: 200,
            snippets_per_video: 8,
            d_visual: 32,
            d_text: 16,
            num_concepts: 8,
            noise_sigma: 0.05,
            snippet_duration: 1.0,
            span_min_snippets: 2,
            span_max_snippets: 4,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_videos == 0 {
            return Err(WsraError::Config("num_videos must be positive".into()));
        }
        if self.snippets_per_video < 2 {
            return Err(WsraError::Config("snippets_per_video must be at least 2".into()));
        }
        if self.d_visual == 0 || self.d_text == 0 {
            return Err(WsraError::Config("feature dimensions must be positive".into()));
        }
        if self.num_concepts < 2 {
            return Err(WsraError::Config("need at least 2 concepts".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(WsraError::Config("noise_sigma must be non-negative".into()));
        }
        if self.snippet_duration <= 0.0 {
            return Err(WsraError::Config("snippet_duration must be positive".into()));
        }
        if self.span_min_snippets == 0
            || self.span_min_snippets > self.span_max_snippets
            || self.span_max_snippets >= self.snippets_per_video
        {
            return Err(WsraError::Config(format!(
                "span bounds [{}, {}] must satisfy 1 <= min <= max < {}",
                self.span_min_snippets, self.span_max_snippets, self.snippets_per_video
            )));
        }
        Ok(())
    }

    /// Parse `key=value` lines; unknown keys are rejected, missing keys
    /// keep their defaults. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SyntheticSpec::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                WsraError::Config(format!("line {}: expected key=value, got '{}'", lineno + 1, line))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| {
                WsraError::Config(format!("line {}: bad value for {}: {}", lineno + 1, key, e))
            };
            match key {
                "num_videos" => spec.num_videos = value.parse().map_err(|e| bad(&e))?,
                "snippets_per_video" => spec.snippets_per_video = value.parse().map_err(|e| bad(&e))?,
                "d_visual" => spec.d_visual = value.parse().map_err(|e| bad(&e))?,
                "d_text" => spec.d_text = value.parse().map_err(|e| bad(&e))?,
                "num_concepts" => spec.num_concepts = value.parse().map_err(|e| bad(&e))?,
                "noise_sigma" => spec.noise_sigma = value.parse().map_err(|e| bad(&e))?,
                "snippet_duration" => spec.snippet_duration = value.parse().map_err(|e| bad(&e))?,
                "span_min_snippets" => spec.span_min_snippets = value.parse().map_err(|e| bad(&e))?,
                "span_max_snippets" => spec.span_max_snippets = value.parse().map_err(|e| bad(&e))?,
                "seed" => spec.seed = value.parse().map_err(|e| bad(&e))?,
                other => {
                    return Err(WsraError::Config(format!(
                        "line {}: unknown key '{}'",
                        lineno + 1,
                        other
                    )))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Hidden ground truth: one (query id, video id, span) row per query,
/// spans in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub entries: Vec<(String, String, TemporalSpan)>,
}

impl SyntheticTruth {
    pub fn span_for(&self, query_id: &str) -> Option<&TemporalSpan> {
        self.entries.iter().find(|(q, _, _)| q == query_id).map(|(_, _, s)| s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (q, v, s) in &self.entries {
            out.push_str(&format!("{} {} {} {}\n", q, v, s.start, s.end));
        }
        fs::File::create(path)?.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(WsraError::Manifest(format!("bad truth line '{}'", line)));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|e| WsraError::Manifest(format!("bad number '{}': {}", s, e)))
            };
            let span = TemporalSpan::new(parse(parts[2])?, parse(parts[3])?, SpanMode::Time)?;
            entries.push((parts[0].to_string(), parts[1].to_string(), span));
        }
        Ok(SyntheticTruth { entries })
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, normal: &Normal<f64>, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Generate a manifest (queries carry their planted spans) and the same
/// truth as a standalone table.
pub fn synthesize(spec: &SyntheticSpec) -> Result<(DatasetManifest, SyntheticTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();

    // Unit-norm concept prototypes in text space, plus an equal pool of
    // distractor prototypes that only ever appear as background content:
    // queries describe things that happen, backgrounds hold everything
    // else, so no query concept doubles as another video's background.
    let prototypes: Vec<Vec<f64>> =
        (0..spec.num_concepts).map(|_| unit_gaussian(&mut rng, &normal, spec.d_text)).collect();
    let distractors: Vec<Vec<f64>> =
        (0..spec.num_concepts).map(|_| unit_gaussian(&mut rng, &normal, spec.d_text)).collect();

    // Fixed linear map from text space to visual space, scaled so image
    // vectors have roughly unit norm.
    let scale = 1.0 / (spec.d_text as f64).sqrt();
    let map: Vec<f64> =
        (0..spec.d_visual * spec.d_text).map(|_| normal.sample(&mut rng) * scale).collect();
    let project = |p: &[f64]| -> Vec<f64> {
        (0..spec.d_visual)
            .map(|i| {
                map[i * spec.d_text..(i + 1) * spec.d_text]
                    .iter()
                    .zip(p)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    };

    let sample_noise = |rng: &mut ChaCha8Rng, dim: usize| -> Vec<f64> {
        if spec.noise_sigma == 0.0 {
            vec![0.0; dim]
        } else {
            (0..dim).map(|_| noise.sample(rng)).collect()
        }
    };

    let t = spec.snippets_per_video;
    let mut videos = Vec::with_capacity(spec.num_videos);
    let mut queries = Vec::with_capacity(spec.num_videos);
    let mut entries = Vec::with_capacity(spec.num_videos);
    for vi in 0..spec.num_videos {
        let concept = rng.gen_range(0..spec.num_concepts);
        let len = rng.gen_range(spec.span_min_snippets..=spec.span_max_snippets);
        let start = rng.gen_range(0..=t - len);

        let fore = project(&prototypes[concept]);
        // one distractor concept per video keeps backgrounds mostly
        // uncorrelated across videos that share a query concept
        let back = project(&distractors[rng.gen_range(0..spec.num_concepts)]);
        let mut values = Vec::with_capacity(t * spec.d_visual);
        for s in 0..t {
            let base = if s >= start && s < start + len { &fore } else { &back };
            let eps = sample_noise(&mut rng, spec.d_visual);
            values.extend(base.iter().zip(&eps).map(|(b, e)| b + e));
        }

        let video_id = format!("v{}", vi);
        let query_id = format!("q{}", vi);
        let eps = sample_noise(&mut rng, spec.d_text);
        let embedding: Vec<f64> =
            prototypes[concept].iter().zip(&eps).map(|(p, e)| p + e).collect();
        let span = TemporalSpan::new(
            start as f64 * spec.snippet_duration,
            (start + len) as f64 * spec.snippet_duration,
            SpanMode::Time,
        )?;

        videos.push(VideoRecord {
            id: video_id.clone(),
            snippet_duration: spec.snippet_duration,
            features: FeatureMatrix::new(t, spec.d_visual, values)?,
        });
        queries.push(QueryRecord {
            id: query_id.clone(),
            video_id: video_id.clone(),
            embedding,
            span: Some(span),
        });
        entries.push((query_id, video_id, span));
    }

    let manifest =
        DatasetManifest { d_visual: spec.d_visual, d_text: spec.d_text, videos, queries };
    manifest.validate()?;
    Ok((manifest, SyntheticTruth { entries }))
}

/// Generate, split by video, and write the dataset under `out_dir`:
///
/// ```text
/// out_dir/train/train.manifest      spans stripped
/// out_dir/eval/val.manifest         spans included
/// out_dir/eval/test.manifest        spans included
/// out_dir/eval/truth.txt            full span table
/// ```
///
/// The hidden-span table lives only outside the train directory.
pub fn write_synthetic_dataset(
    spec: &SyntheticSpec,
    fractions: (f64, f64, f64),
    out_dir: &Path,
) -> Result<SyntheticTruth> {
    let (manifest, truth) = synthesize(spec)?;
    let (mut train, val, test) = split(&manifest, fractions, spec.seed)?;
    for q in &mut train.queries {
        q.span = None;
    }

    let train_dir = out_dir.join("train");
    let eval_dir = out_dir.join("eval");
    fs::create_dir_all(&train_dir)?;
    fs::create_dir_all(&eval_dir)?;
    write_manifest(&train, &train_dir, "train")?;
    write_manifest(&val, &eval_dir, "val")?;
    write_manifest(&test, &eval_dir, "test")?;
    truth.write(&eval_dir.join("truth.txt"))?;
    Ok(truth)
}
