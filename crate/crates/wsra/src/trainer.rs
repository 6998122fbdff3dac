//! Training loop, resumable run state, evaluation, and the loss-term
//! ablation harness.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{InferenceHead, ProposalMode, RunConfig};
use crate::data::DatasetManifest;
use crate::error::{Result, WsraError};
use crate::grounding::{
    enumerate_segment_proposals, enumerate_sliding_proposals, ground, GroundingResult,
    SpanMode, TemporalSpan,
};
use crate::losses::total_loss;
use crate::metrics::EvalReport;
use crate::numgrad::checkpoint::{self, CheckpointFile};
use crate::numgrad::{AdamState, Graph, Tensor};
use crate::sampling::assemble_epoch;
use crate::scoring::{ScoringParams, WsraModel};

/// Decorrelates the data-order stream from the weight-init stream.
const DATA_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Everything that must survive a stop/resume cycle.
pub struct TrainState {
    pub cfg: RunConfig,
    pub model: WsraModel,
    pub adam: AdamState,
    pub data_rng: ChaCha8Rng,
    pub epochs_done: usize,
    pub best_val: f64,
}

pub struct TrainArgs<'a> {
    pub cfg: RunConfig,
    pub train: &'a DatasetManifest,
    pub val: Option<&'a DatasetManifest>,
    pub out_dir: &'a Path,
    pub resume: Option<PathBuf>,
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub steps_run: usize,
    pub final_total_loss: f64,
    /// Mean total loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
    /// Validation R@1 at IoU 0.7 after each epoch, when a val split is given.
    pub val_history: Vec<f64>,
    pub best_val: f64,
    pub best_checkpoint: Option<PathBuf>,
    pub last_checkpoint: PathBuf,
}

fn fresh_state(cfg: &RunConfig, train: &DatasetManifest) -> Result<TrainState> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model =
        WsraModel::init(train.d_visual, train.d_text, cfg.margin, cfg.tau, &mut init_rng)?;
    let mut adam =
        AdamState::new(&model.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
    adam.epsilon = cfg.adam_epsilon;
    Ok(TrainState {
        cfg: cfg.clone(),
        model,
        adam,
        data_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_SEED_SALT),
        epochs_done: 0,
        best_val: f64::NEG_INFINITY,
    })
}

const MODEL_TENSORS: [&str; 4] = ["phi_video.w", "phi_video.b", "phi_snippet.w", "phi_snippet.b"];

/// Save the full run state (weights, optimizer moments, configuration,
/// and data-order RNG position) for bit-exact resumption.
pub fn save_state(path: &Path, state: &TrainState) -> Result<()> {
    let mut ckpt = CheckpointFile::default();
    for (k, v) in state.cfg.to_kv() {
        ckpt.push_meta(&format!("cfg.{}", k), v);
    }
    ckpt.push_meta("d_visual", state.model.d_visual);
    ckpt.push_meta("d_text", state.model.d_text);
    ckpt.push_meta("epochs_done", state.epochs_done);
    ckpt.push_meta("best_val", state.best_val);
    ckpt.push_meta("adam_steps", state.adam.step_count);
    ckpt.push_meta("rng_seed", hex::encode(state.data_rng.get_seed()));
    ckpt.push_meta("rng_word_pos", state.data_rng.get_word_pos());

    let params = state.model.params();
    for (name, p) in MODEL_TENSORS.iter().zip(&params) {
        let t = p.borrow();
        ckpt.push_tensor(name, t.shape.clone(), t.values.clone());
    }
    for (i, (m, v)) in
        state.adam.first_moment.iter().zip(&state.adam.second_moment).enumerate()
    {
        ckpt.push_tensor(&format!("adam.m.{}", i), vec![m.len()], m.clone());
        ckpt.push_tensor(&format!("adam.v.{}", i), vec![v.len()], v.clone());
    }
    checkpoint::save(path, &ckpt)
}

fn head_from_ckpt(ckpt: &CheckpointFile, prefix: &str, d_in: usize) -> Result<ScoringParams> {
    let w = ckpt.tensor(&format!("{}.w", prefix))?;
    let b = ckpt.tensor(&format!("{}.b", prefix))?;
    if w.shape != vec![1, d_in] {
        return Err(WsraError::Checkpoint(format!(
            "{}.w has shape {:?}, expected [1, {}]",
            prefix, w.shape, d_in
        )));
    }
    Ok(ScoringParams {
        w: Tensor::new(w.shape.clone(), w.values.clone())?.trainable().into_param(),
        b: Tensor::new(b.shape.clone(), b.values.clone())?.trainable().into_param(),
        d_in,
    })
}

fn meta_parse<T: std::str::FromStr>(ckpt: &CheckpointFile, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    ckpt.require_meta(key)?
        .parse()
        .map_err(|e| WsraError::Checkpoint(format!("bad meta '{}': {}", key, e)))
}

pub fn load_state(path: &Path) -> Result<TrainState> {
    let ckpt = checkpoint::load(path)?;
    let mut cfg = RunConfig::default();
    for (k, v) in &ckpt.meta {
        if let Some(key) = k.strip_prefix("cfg.") {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    let d_visual: usize = meta_parse(&ckpt, "d_visual")?;
    let d_text: usize = meta_parse(&ckpt, "d_text")?;
    let d_in = d_visual + d_text;

    let model = WsraModel {
        phi_video: head_from_ckpt(&ckpt, "phi_video", d_in)?,
        phi_snippet: head_from_ckpt(&ckpt, "phi_snippet", d_in)?,
        d_visual,
        d_text,
        margin: cfg.margin,
        tau: cfg.tau,
    };

    let params = model.params();
    let mut adam = AdamState::new(&params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
    adam.epsilon = cfg.adam_epsilon;
    adam.step_count = meta_parse(&ckpt, "adam_steps")?;
    for i in 0..params.len() {
        let m = ckpt.tensor(&format!("adam.m.{}", i))?;
        let v = ckpt.tensor(&format!("adam.v.{}", i))?;
        if m.values.len() != adam.first_moment[i].len() {
            return Err(WsraError::Checkpoint(format!(
                "adam moment {} has {} values, parameter has {}",
                i,
                m.values.len(),
                adam.first_moment[i].len()
            )));
        }
        adam.first_moment[i] = m.values.clone();
        adam.second_moment[i] = v.values.clone();
    }

    let seed_hex = ckpt.require_meta("rng_seed")?;
    let seed_bytes = hex::decode(seed_hex)
        .map_err(|e| WsraError::Checkpoint(format!("bad rng seed: {}", e)))?;
    let seed: [u8; 32] = seed_bytes
        .try_into()
        .map_err(|_| WsraError::Checkpoint("rng seed is not 32 bytes".into()))?;
    let mut data_rng = ChaCha8Rng::from_seed(seed);
    let word_pos: u128 = meta_parse(&ckpt, "rng_word_pos")?;
    data_rng.set_word_pos(word_pos);

    Ok(TrainState {
        cfg,
        model,
        adam,
        data_rng,
        epochs_done: meta_parse(&ckpt, "epochs_done")?,
        best_val: meta_parse(&ckpt, "best_val")?,
    })
}

/// Candidate spans for one video, always expressed in seconds.
pub fn proposals_for(
    cfg: &RunConfig,
    num_snippets: usize,
    snippet_duration: f64,
) -> Result<Vec<TemporalSpan>> {
    match cfg.proposal_mode {
        ProposalMode::Segment => Ok(enumerate_segment_proposals(num_snippets)
            .into_iter()
            .map(|s| TemporalSpan {
                start: s.start * snippet_duration,
                end: s.end * snippet_duration,
                mode: SpanMode::Time,
            })
            .collect()),
        ProposalMode::Sliding => enumerate_sliding_proposals(
            num_snippets as f64 * snippet_duration,
            &cfg.window_fractions,
            cfg.window_overlap,
        ),
    }
}

fn inference_params<'a>(model: &'a WsraModel, cfg: &RunConfig) -> &'a ScoringParams {
    match cfg.inference_head {
        InferenceHead::Video => &model.phi_video,
        InferenceHead::Snippet => &model.phi_snippet,
    }
}

/// Ground every query in the manifest against its own video.
pub fn ground_all(
    model: &WsraModel,
    cfg: &RunConfig,
    manifest: &DatasetManifest,
) -> Result<Vec<GroundingResult>> {
    let params = inference_params(model, cfg);
    let mut out = Vec::with_capacity(manifest.queries.len());
    for q in &manifest.queries {
        let video = manifest.video(&q.video_id)?;
        let proposals =
            proposals_for(cfg, video.features.num_snippets(), video.snippet_duration)?;
        out.push(ground(
            params,
            &q.id,
            &q.embedding,
            &video.features,
            video.snippet_duration,
            &proposals,
            None,
            cfg.top_k,
        )?);
    }
    Ok(out)
}

/// Ground and score every annotated query; errors if the manifest has no
/// ground-truth spans at all.
pub fn evaluate(
    model: &WsraModel,
    cfg: &RunConfig,
    manifest: &DatasetManifest,
) -> Result<(EvalReport, Vec<(GroundingResult, TemporalSpan)>)> {
    let params = inference_params(model, cfg);
    let mut results = Vec::new();
    for q in &manifest.queries {
        let span = match &q.span {
            Some(s) => *s,
            None => continue,
        };
        let video = manifest.video(&q.video_id)?;
        let proposals =
            proposals_for(cfg, video.features.num_snippets(), video.snippet_duration)?;
        let r = ground(
            params,
            &q.id,
            &q.embedding,
            &video.features,
            video.snippet_duration,
            &proposals,
            None,
            cfg.top_k,
        )?;
        results.push((r, span));
    }
    if results.is_empty() {
        return Err(WsraError::Eval("no annotated queries to evaluate".into()));
    }
    let settings = [(1, 0.5), (1, 0.7), (cfg.top_k, 0.5), (cfg.top_k, 0.7)];
    let report = EvalReport::compute(&results, &settings)?;
    Ok((report, results))
}

fn recall_1_at_07(report: &EvalReport) -> f64 {
    report
        .recalls
        .iter()
        .find(|(k, thr, _)| *k == 1 && (*thr - 0.7).abs() < 1e-9)
        .map(|(_, _, r)| *r)
        .unwrap_or(0.0)
}

/// Run (or resume) training. Writes `last.ckpt` every epoch and, when a
/// validation split is provided, `best.ckpt` whenever R@1 at IoU 0.7
/// improves.
pub fn train(args: &TrainArgs) -> Result<TrainSummary> {
    args.cfg.validate()?;
    args.train.validate()?;
    std::fs::create_dir_all(args.out_dir)?;

    let mut state = match &args.resume {
        Some(p) => load_state(p)?,
        None => fresh_state(&args.cfg, args.train)?,
    };
    let cfg = state.cfg.clone();
    if state.model.d_visual != args.train.d_visual || state.model.d_text != args.train.d_text {
        return Err(WsraError::Train(format!(
            "checkpoint dims {}x{} do not match manifest {}x{}",
            state.model.d_visual, state.model.d_text, args.train.d_visual, args.train.d_text
        )));
    }

    let pairs = args.train.train_pairs();
    let weights = cfg.loss_weights();
    let sampling = cfg.sampling();
    let params = state.model.params();

    let last_path = args.out_dir.join("last.ckpt");
    let best_path = args.out_dir.join("best.ckpt");
    let mut summary = TrainSummary {
        epochs_run: 0,
        steps_run: 0,
        final_total_loss: f64::NAN,
        epoch_losses: Vec::new(),
        val_history: Vec::new(),
        best_val: state.best_val,
        best_checkpoint: None,
        last_checkpoint: last_path.clone(),
    };

    for epoch in state.epochs_done..cfg.epochs {
        let batches = assemble_epoch(&pairs, &sampling, &mut state.data_rng)?;
        let mut epoch_loss = 0.0;
        for (step, batch) in batches.iter().enumerate() {
            let mut g = Graph::new();
            let lb = total_loss(&mut g, &state.model, batch, &weights, cfg.beta_pairing)?;
            if !lb.total.is_finite() {
                return Err(WsraError::Train(format!(
                    "non-finite loss at epoch {} step {}: video={} snippet={} batch={}",
                    epoch, step, lb.video, lb.snippet, lb.batch
                )));
            }
            g.backward(lb.total_node)?;
            // a head untouched by the active loss terms gets a zero grad
            for p in &params {
                let mut t = p.borrow_mut();
                if t.grad.is_none() {
                    let zeros = vec![0.0; t.numel()];
                    t.accumulate_grad(&zeros);
                }
            }
            state.adam.step(&params)?;
            summary.steps_run += 1;
            summary.final_total_loss = lb.total;
            epoch_loss += lb.total;
            if args.verbose {
                println!(
                    "epoch {} step {} video {:.6} snippet {:.6} batch {:.6} total {:.6}",
                    epoch, step, lb.video, lb.snippet, lb.batch, lb.total
                );
            }
        }
        state.epochs_done = epoch + 1;
        summary.epochs_run += 1;
        summary.epoch_losses.push(epoch_loss / batches.len().max(1) as f64);

        if let Some(val) = args.val {
            let (report, _) = evaluate(&state.model, &cfg, val)?;
            let r1 = recall_1_at_07(&report);
            summary.val_history.push(r1);
            if args.verbose {
                println!("epoch {} val R@1 IoU>=0.70 {:.2}%", epoch, 100.0 * r1);
            }
            if r1 > state.best_val {
                state.best_val = r1;
                save_state(&best_path, &state)?;
                summary.best_checkpoint = Some(best_path.clone());
            }
        }
        summary.best_val = state.best_val;
        save_state(&last_path, &state)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: String,
    pub recall_1_at_07: f64,
    pub mean_iou: f64,
}

/// Train each loss/sampling variant from scratch and score it on the
/// validation split.
pub fn ablate(
    cfg: &RunConfig,
    train_set: &DatasetManifest,
    val: &DatasetManifest,
    out_dir: &Path,
    verbose: bool,
) -> Result<Vec<AblationRow>> {
    let variants: Vec<(&str, RunConfig)> = vec![
        ("full", cfg.clone()),
        ("video-only", {
            let mut c = cfg.clone();
            c.beta_w = 0.0;
            c.delta_w = 0.0;
            c
        }),
        ("no-video", {
            let mut c = cfg.clone();
            c.alpha_w = 0.0;
            c
        }),
        ("no-batch", {
            let mut c = cfg.clone();
            c.delta_w = 0.0;
            c
        }),
        ("no-top-filter", {
            let mut c = cfg.clone();
            c.k_top = 0;
            c
        }),
    ];

    let mut rows = Vec::with_capacity(variants.len());
    for (name, variant) in variants {
        let dir = out_dir.join(name);
        let args = TrainArgs {
            cfg: variant.clone(),
            train: train_set,
            val: None,
            out_dir: &dir,
            resume: None,
            verbose: false,
        };
        train(&args)?;
        let state = load_state(&dir.join("last.ckpt"))?;
        let (report, _) = evaluate(&state.model, &variant, val)?;
        let row = AblationRow {
            name: name.to_string(),
            recall_1_at_07: recall_1_at_07(&report),
            mean_iou: report.mean_iou,
        };
        if verbose {
            println!(
                "{:<14} R@1 IoU>=0.70 {:6.2}%  mean IoU {:6.2}%",
                row.name,
                100.0 * row.recall_1_at_07,
                100.0 * row.mean_iou
            );
        }
        rows.push(row);
    }
    Ok(rows)
}
