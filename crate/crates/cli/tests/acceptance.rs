//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria 6, 8 and 9 share one pair of training runs.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use coughnet::augment::{upsample_positives, AugmentSpec, LabeledClip};
use coughnet::evaluation::roc_auc;
use coughnet::features::{dct2_orthonormal, FeatureConfig, FeatureExtractor, Stft};
use coughnet::nn::{load_checkpoint, save_checkpoint, CheckpointMeta, InputShape, ModelConfig, ModelParams, Tensor4};
use coughnet::training::{gradient_check, stratified_kfold};
use coughnet::{rng, AudioClip, CvReport, CLIP_SAMPLES};
use coughnet_cli::commands::{cmd_predict, cmd_synth, cmd_train, Context, Inputs, SynthOptions, ThresholdSource};
use coughnet_cli::manifest::{write_manifest, Columns, Manifest, ManifestRow};
use coughnet_cli::settings::Settings;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn random_batch(input: InputShape, batch: usize, seed: u64) -> Tensor4 {
    let mut r = rng::stream(seed, "acceptance-input", &[]);
    let n = batch * input.frames * input.coeffs;
    Tensor4::new([batch, input.frames, input.coeffs, 1], (0..n).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap()
}

/// Every entry at a reduced input geometry, then a random sample of entries
/// (plus the largest-gradient one) of every tensor at the canonical geometry.
fn gradients() -> Result<Outcome> {
    let mut worst: (f64, String) = (0.0, String::new());
    let mut checked = 0;
    for (input, per_tensor, seed) in
        [(InputShape { frames: 8, coeffs: 6 }, None, 1), (InputShape::CANONICAL, Some(64), 2)]
    {
        let params = ModelParams::init(ModelConfig { input, ..ModelConfig::default() }, seed, 0)?;
        let x = random_batch(input, 2, seed);
        for c in gradient_check(&params, &x, &[1, 0], 1e-5, per_tensor, seed)? {
            checked += c.checked;
            if c.relative_error >= worst.0 {
                worst = (c.relative_error, format!("{} at {}x{}", c.name, input.frames, input.coeffs));
            }
        }
    }
    outcome(worst.0 < 1e-6, format!("{checked} entries, worst relative error {:.2e} ({})", worst.0, worst.1))
}

fn shape_chain() -> Result<Outcome> {
    let params = ModelParams::init(ModelConfig::default(), 7, 0)?;
    let cache = params.forward_train(&random_batch(InputShape::CANONICAL, 3, 1), None)?;
    let expected: Vec<Vec<usize>> = vec![
        vec![3, 302, 15, 1],
        vec![3, 300, 13, 64],
        vec![3, 150, 6, 64],
        vec![3, 149, 5, 32],
        vec![3, 23840],
        vec![3, 256],
        vec![3, 128],
        vec![3, 1],
    ];
    outcome(cache.shapes == expected && params.dense1.n_in == 23840, format!("{:?}", cache.shapes))
}

fn mfcc_geometry() -> Result<Outcome> {
    let extractor = FeatureExtractor::new(FeatureConfig::default())?;
    let mut r = rng::stream(3, "acceptance-audio", &[]);
    let noise: Vec<f64> = (0..CLIP_SAMPLES).map(|_| r.gen_range(-0.5..0.5)).collect();
    let tone: Vec<f64> = (0..CLIP_SAMPLES).map(|t| (t as f64 * 0.07).sin() * 0.3).collect();
    for samples in [noise.clone(), tone, vec![0.0; CLIP_SAMPLES]] {
        let m = extractor.mfcc(&AudioClip::new(samples, 22050), "clip")?;
        ensure!((m.n_mfcc, m.n_frames) == (15, 302), "got {}x{}", m.n_mfcc, m.n_frames);
    }

    let stft = Stft::new(2048, 512);
    let mut fft_err: f64 = 0.0;
    for _ in 0..16 {
        let frame = stft.windowed_frame(&noise, r.gen_range(0..302));
        let fast = stft.spectrum(&frame);
        let mut scale: f64 = 0.0;
        let mut err: f64 = 0.0;
        for (k, c) in fast.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &x) in frame.iter().enumerate() {
                let phase = -std::f64::consts::TAU * ((k * n) % 2048) as f64 / 2048.0;
                re += x * phase.cos();
                im += x * phase.sin();
            }
            scale = scale.max(re.hypot(im));
            err = err.max((c.re - re).hypot(c.im - im));
        }
        fft_err = fft_err.max(err / scale);
    }

    let n = 128;
    let d = dct2_orthonormal(n);
    let mut dct_err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = (0..n).map(|k| d[i * n + k] * d[j * n + k]).sum();
            dct_err = dct_err.max((dot - f64::from(u8::from(i == j))).abs());
        }
    }
    outcome(
        fft_err < 1e-8 && dct_err < 1e-10,
        format!("15x302 on 3 clips, FFT vs DFT {fft_err:.1e}, DCT orthonormality {dct_err:.1e}"),
    )
}

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut good, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                good += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    good / pairs
}

fn auc_oracle() -> Result<Outcome> {
    let mut r = rng::stream(4, "acceptance-auc", &[]);
    let (mut oracle_err, mut transform_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let n = r.gen_range(2..=200);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.gen_range(0u32..40)) / 40.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..=1)).collect();
        labels[0] = 1;
        labels[1] = 0;
        let a = roc_auc(&scores, &labels)?;
        oracle_err = oracle_err.max((a - pairwise_auc(&scores, &labels)).abs());
        let moved: Vec<f64> = scores.iter().map(|x| x * x * x + x).collect();
        transform_err = transform_err.max((a - roc_auc(&moved, &labels)?).abs());
    }
    outcome(
        oracle_err <= 1e-12 && transform_err <= 1e-12,
        format!("1000 instances, pair statistic {oracle_err:.1e}, monotone transform {transform_err:.1e}"),
    )
}

fn stratification() -> Result<Outcome> {
    let labels: Vec<u8> = (0..1040).map(|i| u8::from(i < 75)).collect();
    let plan = stratified_kfold(&labels, 5, 0)?;
    let counts: Vec<(usize, usize)> = (0..5)
        .map(|f| {
            let v = plan.validation(f);
            let pos = v.iter().filter(|&&i| labels[i] == 1).count();
            (pos, v.len() - pos)
        })
        .collect();
    outcome(counts.iter().all(|&c| c == (15, 193)), format!("(positives, negatives) per fold {counts:?}"))
}

fn rebalancing() -> Result<Outcome> {
    let len = 4410;
    let corpus: Vec<LabeledClip> = (0..1040)
        .map(|i| {
            let samples = (0..len).map(|t| ((t * (i % 7 + 2)) as f64 * 0.01).sin() * 0.4).collect();
            LabeledClip::original(format!("c{i}"), AudioClip::new(samples, 22050), u8::from(i < 75))
        })
        .collect();
    let spec = AugmentSpec { clip_samples: len, ..AugmentSpec::default() };
    let out = upsample_positives(corpus, 3.0, &spec, 0)?;
    let pos = out.iter().filter(|c| c.label == 1).count();
    let ratio = 965.0 / pos as f64;
    outcome(pos == 322 && (2.9..=3.1).contains(&ratio), format!("{pos} positives, 1:{ratio:.3}"))
}

fn round_trip() -> Result<Outcome> {
    let mut params = ModelParams::init(ModelConfig::default(), 10, 0)?;
    let cache = params.forward_train(&random_batch(InputShape::CANONICAL, 4, 5), None)?;
    params.update_batch_stats(&cache);
    let x = random_batch(InputShape::CANONICAL, 6, 6);
    let before = params.predict(&x)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("m.cghn");
    let meta = CheckpointMeta { seed: 10, epoch: 1, fold: None, hyperparameters: serde_json::Value::Null };
    save_checkpoint(&path, &params, &meta)?;
    let (loaded, _) = load_checkpoint(&path)?;
    let after = loaded.predict(&x)?;
    let same = before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits());
    outcome(same && loaded == params, format!("{} probabilities bit-identical after reload", after.len()))
}

/// Training runs shared by criteria 6, 8 and 9.
struct Runs {
    dir: tempfile::TempDir,
    separated: Result<CvReport, String>,
    null: Result<CvReport, String>,
    repeat: Result<(), String>,
}

fn settings() -> Settings {
    let mut s = Settings::default();
    s.features.clip_seconds = 2.0;
    s.training.folds = 3;
    s.training.epochs = 20;
    s
}

fn train_on(dir: &Path, name: &str, separation: f64) -> Result<CvReport> {
    let corpus = dir.join(format!("corpus_{name}"));
    let opts = SynthOptions { n_per_class: 100, separation, clip_seconds: 2.0 };
    cmd_synth(&Context::new(&corpus, settings()), &opts)?;
    let out = dir.join(format!("train_{name}"));
    cmd_train(&Context::new(&out, settings()), &corpus.join("synth/manifest.csv"))?;
    Ok(serde_json::from_str(&fs::read_to_string(out.join("report.json"))?)?)
}

fn same_bytes(a: &Path, b: &Path, files: &[String]) -> Result<()> {
    for f in files {
        if fs::read(a.join(f))? != fs::read(b.join(f))? {
            bail!("{f} differs");
        }
    }
    Ok(())
}

fn training_runs() -> Result<Runs> {
    let dir = tempfile::tempdir()?;
    let separated = train_on(dir.path(), "sep1", 1.0).map_err(|e| format!("{e:#}"));
    let null = train_on(dir.path(), "sep0", 0.0).map_err(|e| format!("{e:#}"));
    let repeat = (|| -> Result<()> {
        cmd_train(
            &Context::new(dir.path().join("train_again"), settings()),
            &dir.path().join("corpus_sep1/synth/manifest.csv"),
        )?;
        let mut files: Vec<String> = vec!["report.json".into(), "model.cghn".into(), "history.csv".into()];
        files.extend((0..3).map(|k| format!("checkpoints/fold_{k}.cghn")));
        same_bytes(&dir.path().join("train_sep1"), &dir.path().join("train_again"), &files)
    })()
    .map_err(|e| format!("{e:#}"));
    Ok(Runs { dir, separated, null, repeat })
}

fn end_to_end(runs: &Runs) -> Result<Outcome> {
    let (Ok(sep), Ok(null)) = (&runs.separated, &runs.null) else {
        bail!("training failed: {:?} / {:?}", runs.separated.as_ref().err(), runs.null.as_ref().err());
    };
    let (a1, a0) = (sep.aggregate.mean_auc, null.aggregate.mean_auc);
    outcome(
        a1 >= 0.90 && (0.40..=0.60).contains(&a0),
        format!("mean AUC {a1:.4} at separation 1, {a0:.4} at separation 0"),
    )
}

fn determinism(runs: &Runs) -> Result<Outcome> {
    match &runs.repeat {
        Ok(()) => outcome(true, "report, history, final model and 3 fold checkpoints byte-identical"),
        Err(e) => outcome(false, e.clone()),
    }
}

/// Re-score each fold's validation clips with that fold's checkpoint and
/// threshold and count detected positives.
fn sensitivity(runs: &Runs) -> Result<Outcome> {
    let train = runs.dir.path().join("train_sep1");
    let folds = Manifest::read(&train.join("folds.csv"))?;
    let ctx = Context::new(runs.dir.path().join("sensitivity"), settings());
    let mut tprs = Vec::new();
    for k in 0..3 {
        let rows: Vec<ManifestRow> = folds
            .rows
            .iter()
            .filter(|r| r.fold == Some(k))
            .map(|r| ManifestRow::new(r.file.clone(), r.label))
            .collect();
        let manifest = ctx.out.join(format!("val_{k}.csv"));
        fs::create_dir_all(&ctx.out)?;
        write_manifest(&manifest, &rows, Columns::Basic)?;
        let scores = ctx.out.join(format!("scores_{k}.csv"));
        let threshold = ThresholdSource::Report(train.join("report.json"));
        let checkpoint = train.join(format!("checkpoints/fold_{k}.cghn"));
        cmd_predict(&ctx, &checkpoint, &Inputs::Manifest(manifest), &threshold, Some(&scores))?;
        let text = fs::read_to_string(&scores)?;
        let mut tp = 0;
        for (line, row) in text.lines().skip(1).zip(&rows) {
            let decision = line.rsplit(',').next().unwrap_or("");
            if row.label == 1 && decision == "1" {
                tp += 1;
            }
        }
        let positives = rows.iter().filter(|r| r.label == 1).count();
        tprs.push(tp as f64 / positives as f64);
    }
    let detail = format!("per-fold TPR {:?}", tprs.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>());
    outcome(tprs.iter().all(|&t| t >= 0.8), detail)
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, f: &dyn Fn() -> Result<Outcome>| {
        let start = Instant::now();
        let result = f();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} criterion {n:>2} {name}: {detail} ({secs:.1}s)", if pass { "PASS" } else { "FAIL" });
    };
    report(1, "gradient correctness", &gradients);
    report(2, "shape chain", &shape_chain);
    report(3, "MFCC geometry", &mfcc_geometry);
    report(4, "AUC oracle", &auc_oracle);
    report(5, "stratification", &stratification);

    let start = Instant::now();
    let runs = training_runs();
    println!("     training runs for criteria 6, 8 and 9 took {:.1}s", start.elapsed().as_secs_f64());
    match &runs {
        Ok(runs) => {
            report(6, "end-to-end learning", &|| end_to_end(runs));
            report(7, "rebalancing", &rebalancing);
            report(8, "determinism", &|| determinism(runs));
            report(9, "sensitivity anchoring", &|| sensitivity(runs));
        }
        Err(e) => {
            for (n, name) in [(6, "end-to-end learning"), (8, "determinism"), (9, "sensitivity anchoring")] {
                report(n, name, &|| bail!("{e:#}"));
            }
            report(7, "rebalancing", &rebalancing);
        }
    }
    report(10, "checkpoint round trip", &round_trip);

    if failed == 0 {
        println!("all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
