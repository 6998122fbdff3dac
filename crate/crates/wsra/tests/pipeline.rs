//! End-to-end runs over the synthetic dataset: generate, train, evaluate,
//! and exercise the command-line binary the way a user would.

mod common;

use std::path::Path;
use std::process::Command;

use wsra::config::RunConfig;
use wsra::data::{load_manifest, write_synthetic_dataset, SyntheticSpec, SyntheticTruth};
use wsra::grounding::{ground, read_predictions, SpanMode};
use wsra::scoring::{ScoringParams, WsraModel};
use wsra::trainer::{evaluate, load_state, train, TrainArgs};

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_videos: 40,
        snippets_per_video: 8,
        d_visual: 16,
        d_text: 8,
        num_concepts: 4,
        noise_sigma: 0.05,
        span_min_snippets: 4,
        span_max_snippets: 4,
        seed,
        ..SyntheticSpec::default()
    }
}

fn small_cfg(seed: u64, epochs: usize) -> RunConfig {
    RunConfig {
        seed,
        epochs,
        batch_size: 8,
        learning_rate: 3e-3,
        window_fractions: vec![0.5],
        window_overlap: 0.75,
        ..RunConfig::default()
    }
}

#[test]
fn synth_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_synthetic_dataset(&small_spec(3), (0.6, 0.2, 0.2), dir.path()).unwrap();
    assert_eq!(truth.entries.len(), 40);

    let train_set = load_manifest(&dir.path().join("train/train.manifest")).unwrap();
    let val_set = load_manifest(&dir.path().join("eval/val.manifest")).unwrap();
    let test_set = load_manifest(&dir.path().join("eval/test.manifest")).unwrap();
    // the training split carries no spans; the eval splits carry them all
    assert!(train_set.queries.iter().all(|q| q.span.is_none()));
    assert!(val_set.queries.iter().all(|q| q.span.is_some()));
    assert!(test_set.queries.iter().all(|q| q.span.is_some()));
    // the truth file agrees with the spans written into the eval splits
    let read_back = SyntheticTruth::read(&dir.path().join("eval/truth.txt")).unwrap();
    for q in val_set.queries.iter().chain(&test_set.queries) {
        let want = read_back.span_for(&q.id).unwrap();
        let got = q.span.as_ref().unwrap();
        assert!((want.start - got.start).abs() < 1e-9 && (want.end - got.end).abs() < 1e-9);
    }

    let out = dir.path().join("run");
    let summary = train(&TrainArgs {
        cfg: small_cfg(3, 3),
        train: &train_set,
        val: Some(&val_set),
        out_dir: &out,
        resume: None,
        verbose: false,
    })
    .unwrap();
    assert_eq!(summary.epochs_run, 3);
    assert_eq!(summary.epoch_losses.len(), 3);
    assert!(summary.best_checkpoint.is_some());

    // evaluating the same checkpoint twice is identical
    let state = load_state(&summary.last_checkpoint).unwrap();
    let (report_a, _) = evaluate(&state.model, &state.cfg, &test_set).unwrap();
    let (report_b, _) = evaluate(&state.model, &state.cfg, &test_set).unwrap();
    assert_eq!(report_a, report_b);
    assert_eq!(report_a.num_queries, test_set.queries.len());
}

#[test]
fn training_loss_decreases_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(&small_spec(5), (0.8, 0.0, 0.2), dir.path()).unwrap();
    let train_set = load_manifest(&dir.path().join("train/train.manifest")).unwrap();
    let summary = train(&TrainArgs {
        cfg: small_cfg(5, 5),
        train: &train_set,
        val: None,
        out_dir: &dir.path().join("run"),
        resume: None,
        verbose: false,
    })
    .unwrap();
    let first = summary.epoch_losses[0];
    let last = *summary.epoch_losses.last().unwrap();
    assert!(
        last < first,
        "loss should decrease: first epoch {} vs last epoch {}",
        first,
        last
    );
}

#[test]
fn untrained_zero_model_ranks_queries_identically() {
    // With zero heads every proposal scores 0.5, so ranking falls back to
    // the deterministic tie-break and ignores the query entirely.
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(&small_spec(9), (0.0, 0.0, 1.0), dir.path()).unwrap();
    let test_set = load_manifest(&dir.path().join("eval/test.manifest")).unwrap();
    let cfg = small_cfg(9, 1);
    let model = WsraModel {
        phi_video: ScoringParams::zeros(16 + 8),
        phi_snippet: ScoringParams::zeros(16 + 8),
        d_visual: 16,
        d_text: 8,
        margin: cfg.margin,
        tau: cfg.tau,
    };
    let video = test_set.videos.first().unwrap();
    let proposals =
        wsra::trainer::proposals_for(&cfg, video.features.num_snippets(), video.snippet_duration)
            .unwrap();
    let mut rankings = Vec::new();
    for q in test_set.queries.iter().take(3) {
        let v = test_set.video(&q.video_id).unwrap();
        let r = ground(
            &model.phi_video,
            &q.id,
            &q.embedding,
            &v.features,
            v.snippet_duration,
            &proposals,
            None,
            cfg.top_k,
        )
        .unwrap();
        rankings.push(
            r.ranked.iter().map(|p| (p.span.start, p.span.end)).collect::<Vec<_>>(),
        );
    }
    for r in &rankings[1..] {
        assert_eq!(r, &rankings[0]);
    }
}

fn wsra_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wsra"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn cli_synth_train_eval_ground() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(wsra_bin().args([
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--set",
        "num_videos=40",
        "--set",
        "d_visual=16",
        "--set",
        "d_text=8",
        "--set",
        "num_concepts=4",
        "--set",
        "span_min_snippets=4",
        "--set",
        "span_max_snippets=4",
        "--train-frac",
        "0.6",
        "--val-frac",
        "0.2",
        "--test-frac",
        "0.2",
    ]));
    assert!(data.join("train/train.manifest").is_file());
    assert!(data.join("eval/val.manifest").is_file());
    assert!(data.join("eval/test.manifest").is_file());
    assert!(data.join("eval/truth.txt").is_file());

    let run_dir = dir.path().join("run");
    let stdout = run_ok(wsra_bin().args([
        "train",
        "--train-manifest",
        data.join("train/train.manifest").to_str().unwrap(),
        "--val-manifest",
        data.join("eval/val.manifest").to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--quiet",
        "--set",
        "epochs=2",
        "--set",
        "batch_size=8",
        "--set",
        "learning_rate=0.003",
        "--set",
        "window_fractions=0.5",
        "--set",
        "window_overlap=0.75",
    ]));
    assert!(stdout.contains("trained 2 epochs"));
    let ckpt = run_dir.join("last.ckpt");
    assert!(ckpt.is_file());

    let preds = dir.path().join("eval.preds");
    let stdout = run_ok(wsra_bin().args([
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        data.join("eval/test.manifest").to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
    ]));
    assert!(stdout.contains("recall_at_1_iou_0.70="));
    assert!(preds.is_file());

    let ground_out = dir.path().join("ground.preds");
    run_ok(wsra_bin().args([
        "ground",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        data.join("eval/test.manifest").to_str().unwrap(),
        "--out",
        ground_out.to_str().unwrap(),
    ]));
    check_predictions_file(&ground_out, &data.join("eval/test.manifest"));
}

fn check_predictions_file(path: &Path, manifest_path: &Path) {
    let manifest = load_manifest(manifest_path).unwrap();
    let results = read_predictions(path, SpanMode::Time).unwrap();
    assert_eq!(results.len(), manifest.queries.len());
    for r in &results {
        assert!(manifest.query(&r.query_id).is_ok());
        assert!(!r.ranked.is_empty());
        // ranked by descending score
        for w in r.ranked.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }
}

#[test]
fn cli_rejects_bad_override() {
    let out = wsra_bin()
        .args(["synth", "--out", "/tmp/nowhere-wsra", "--set", "num_videos"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:"), "stderr was: {}", stderr);
}
