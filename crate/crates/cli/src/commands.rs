//! The six subcommands. Each writes its outputs under the run directory plus
//! a `run_<command>.json` listing every declared output and every per-file
//! failure.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use coughnet::audio::{save_wav, WavEncoding};
use coughnet::augment::{format_transform_log, upsample_positives, LabeledClip};
use coughnet::evaluation::{evaluate, CvReport, EvalReport, RocCurve};
use coughnet::nn::{load_checkpoint, save_checkpoint, CheckpointMeta, InputShape};
use coughnet::rng;
use coughnet::synth::{generate_corpus, SynthSpec};
use coughnet::training::{predict, run_cv, EpochRecord, Example, Featurizer, FoldPlan, TrainError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cache::{decode_canonical, FeatureCache};
use crate::manifest::{write_manifest, Columns, Manifest, ManifestRow};
use crate::settings::{FeatureSettings, Settings};

/// Shared state of one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    pub settings: Settings,
    pub jobs: usize,
}

impl Context {
    pub fn new(out: impl Into<PathBuf>, settings: Settings) -> Self {
        Self { out: out.into(), settings, jobs: 1 }
    }

    fn seed(&self) -> u64 {
        self.settings.training.seed
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.out.join("cache")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct CommandOutcome {
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<Failure>,
    /// Human-readable summary lines.
    pub notes: Vec<String>,
}

impl CommandOutcome {
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.failures.is_empty())
    }
}

/// Files to process: a manifest's rows, or paths with directories expanded
/// to their `.wav` files in name order.
pub enum Inputs {
    Manifest(PathBuf),
    Paths(Vec<PathBuf>),
}

struct InputFile {
    /// Name used in outputs: the manifest's `file` value or the path given.
    name: String,
    path: PathBuf,
}

fn list_inputs(inputs: &Inputs) -> Result<Vec<InputFile>> {
    match inputs {
        Inputs::Manifest(p) => {
            let m = Manifest::read(p)?;
            Ok(m.rows.iter().map(|r| InputFile { name: r.file.clone(), path: m.resolve(r) }).collect())
        }
        Inputs::Paths(paths) => {
            let mut files = Vec::new();
            for p in paths {
                if p.is_dir() {
                    let mut wavs: Vec<PathBuf> = fs::read_dir(p)
                        .with_context(|| format!("listing {}", p.display()))?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                        .collect();
                    wavs.sort();
                    files.extend(wavs.into_iter().map(|w| InputFile { name: w.display().to_string(), path: w }));
                } else {
                    files.push(InputFile { name: p.display().to_string(), path: p.clone() });
                }
            }
            Ok(files)
        }
    }
}

fn relative(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

fn create_parent(p: &Path) -> Result<()> {
    if let Some(d) = p.parent() {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Write `run_<command>.json` and add it to the outputs.
fn finish(
    ctx: &Context,
    command: &str,
    mut outcome: CommandOutcome,
    extra: serde_json::Value,
) -> Result<CommandOutcome> {
    let path = ctx.out.join(format!("run_{command}.json"));
    let outputs: Vec<String> = outcome.outputs.iter().map(|p| relative(&ctx.out, p)).collect();
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": ctx.seed(),
        "settings": ctx.settings,
        "random_streams": rng::STREAM_NAMES,
        "outputs": outputs,
        "failures": outcome.failures,
        "details": extra,
    });
    write_json(&path, &meta)?;
    outcome.outputs.push(path);
    Ok(outcome)
}

fn hyperparameters(settings: &Settings) -> serde_json::Value {
    json!({ "training": settings.training, "features": settings.features })
}

/// Extract MFCCs for every input into the content-addressed cache and write
/// `features_index.json` (file name to cache path).
pub fn cmd_features(ctx: &Context, inputs: &Inputs) -> Result<CommandOutcome> {
    ctx.settings.validate()?;
    let files = list_inputs(inputs)?;
    let config = ctx.settings.feature_config();
    let cache_dir = ctx.cache_dir();
    let jobs = ctx.jobs.max(1).min(files.len().max(1));

    // thread t handles files t, t + jobs, ...; results are merged by index
    type Slot = (usize, Result<PathBuf, String>);
    let mut results: Vec<Slot> = Vec::with_capacity(files.len());
    let mut counts = (0, 0);
    std::thread::scope(|s| -> Result<()> {
        let handles: Vec<_> = (0..jobs)
            .map(|t| {
                let (files, config, cache_dir) = (&files, config.clone(), cache_dir.clone());
                s.spawn(move || -> Result<(Vec<Slot>, (usize, usize))> {
                    let mut cache = FeatureCache::new(&cache_dir, config)?;
                    let mut done = Vec::new();
                    for i in (t..files.len()).step_by(jobs) {
                        let f = &files[i];
                        let r = fs::read(&f.path)
                            .map_err(anyhow::Error::from)
                            .and_then(|bytes| cache.features(&bytes, &f.name))
                            .map(|(_, p)| p)
                            .map_err(|e| format!("{e:#}"));
                        done.push((i, r));
                    }
                    Ok((done, (cache.computed, cache.reused)))
                })
            })
            .collect();
        for h in handles {
            let (done, (c, r)) = h.join().map_err(|_| anyhow!("feature worker panicked"))??;
            results.extend(done);
            counts.0 += c;
            counts.1 += r;
        }
        Ok(())
    })?;
    results.sort_by_key(|(i, _)| *i);

    let mut outcome = CommandOutcome::default();
    let mut index = BTreeMap::new();
    for (i, r) in results {
        match r {
            Ok(p) => {
                index.insert(files[i].name.clone(), relative(&ctx.out, &p));
                if !outcome.outputs.contains(&p) {
                    outcome.outputs.push(p);
                }
            }
            Err(error) => outcome.failures.push(Failure { file: files[i].name.clone(), error }),
        }
    }
    let index_path = ctx.out.join("features_index.json");
    write_json(&index_path, &index)?;
    outcome.outputs.push(index_path);
    outcome.notes.push(format!("{} computed, {} reused, {} failed", counts.0, counts.1, outcome.failures.len()));
    finish(ctx, "features", outcome, json!({ "cache_dir": relative(&ctx.out, &cache_dir) }))
}

/// Load every manifest row as a canonical clip. The clip id is the path as
/// written in the manifest unless `absolute_ids` is set.
fn load_corpus(
    manifest: &Manifest,
    settings: &Settings,
    absolute_ids: bool,
) -> Result<(Vec<LabeledClip>, Vec<Vec<u8>>)> {
    let config = settings.feature_config();
    let mut clips = Vec::with_capacity(manifest.rows.len());
    let mut raw = Vec::with_capacity(manifest.rows.len());
    let mut errors = Vec::new();
    for row in &manifest.rows {
        let path = manifest.resolve(row);
        let loaded = fs::read(&path)
            .map_err(anyhow::Error::from)
            .and_then(|bytes| decode_canonical(&bytes, &config).map(|c| (c, bytes)));
        match loaded {
            Ok((clip, bytes)) => {
                let id = if absolute_ids { absolute(&path)?.display().to_string() } else { row.file.clone() };
                let mut c = LabeledClip::original(id, clip, row.label);
                c.source_id = row.source_id.clone().filter(|s| !s.is_empty());
                clips.push(c);
                raw.push(bytes);
            }
            Err(e) => errors.push(format!("{}: {e:#}", row.file)),
        }
    }
    if !errors.is_empty() {
        bail!("{} file(s) could not be loaded:\n  {}", errors.len(), errors.join("\n  "));
    }
    Ok((clips, raw))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

/// Upsample the manifest's positives and write the synthetic clips plus a
/// manifest of originals (absolute paths) and synthetics (relative paths).
pub fn cmd_augment(ctx: &Context, manifest: &Path) -> Result<CommandOutcome> {
    ctx.settings.validate()?;
    let m = Manifest::read(manifest)?;
    let (clips, _) = load_corpus(&m, &ctx.settings, true)?;
    let t = &ctx.settings.training;
    let spec = coughnet::AugmentSpec { clip_samples: ctx.settings.feature_config().clip_samples, ..t.augment.clone() };
    let seed = rng::derive_seed(t.seed, "augment", &[]);
    let all = upsample_positives(clips, t.augment_ratio, &spec, seed)?;

    let dir = ctx.out.join("augmented");
    fs::create_dir_all(&dir)?;
    let mut outcome = CommandOutcome::default();
    let mut rows = Vec::with_capacity(all.len());
    let mut n_synthetic = 0;
    for clip in &all {
        if clip.is_synthetic() {
            let name = format!("aug_{n_synthetic:05}.wav");
            let path = dir.join(&name);
            save_wav(&path, &clip.clip, WavEncoding::Float32).with_context(|| format!("writing {}", path.display()))?;
            outcome.outputs.push(path);
            rows.push(ManifestRow {
                file: format!("augmented/{name}"),
                label: clip.label,
                source_id: clip.source_id.clone(),
                fold: None,
                transform_log: Some(format_transform_log(&clip.transforms)),
            });
            n_synthetic += 1;
        } else {
            rows.push(ManifestRow::new(clip.id.clone(), clip.label));
        }
    }
    let manifest_path = ctx.out.join("manifest.csv");
    write_manifest(&manifest_path, &rows, Columns::Provenance)?;
    outcome.outputs.push(manifest_path);
    let positives = rows.iter().filter(|r| r.label == 1).count();
    outcome.notes.push(format!("{n_synthetic} synthetic positives, {positives} positives of {} rows", rows.len()));
    finish(ctx, "augment", outcome, json!({ "synthetic": n_synthetic, "positives": positives }))
}

/// Featurizer that reads originals through the feature cache.
struct CachedFeaturizer<'a> {
    cache: &'a mut FeatureCache,
    keys: HashMap<String, String>,
}

impl Featurizer for CachedFeaturizer<'_> {
    fn input_shape(&self) -> InputShape {
        self.cache.extractor().input_shape()
    }

    fn featurize(&mut self, clip: &LabeledClip) -> Result<Vec<f64>, TrainError> {
        let m = match self.keys.get(&clip.id) {
            Some(key) if !clip.is_synthetic() => self.cache.features_for_key(key, &clip.clip, &clip.id)?,
            _ => self.cache.extractor().mfcc(&clip.clip, &clip.id)?,
        };
        Ok(m.time_major())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_roc(path: &Path, roc: &RocCurve) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fpr", "tpr", "threshold"])?;
    for i in 0..roc.fpr.len() {
        let t = roc.thresholds[i];
        let t = if t.is_infinite() { "inf".to_string() } else { t.to_string() };
        w.write_record([roc.fpr[i].to_string(), roc.tpr[i].to_string(), t])?;
    }
    w.flush()?;
    Ok(())
}

fn report_roc(r: &EvalReport) -> RocCurve {
    RocCurve {
        fpr: r.roc.iter().map(|p| p[0]).collect(),
        tpr: r.roc.iter().map(|p| p[1]).collect(),
        thresholds: r.roc_thresholds.clone(),
    }
}

/// Cross-validated training. Writes one checkpoint per fold, the final
/// model, the epoch history, the aggregate report and per-fold ROC curves.
pub fn cmd_train(ctx: &Context, manifest: &Path) -> Result<CommandOutcome> {
    ctx.settings.validate()?;
    let t = &ctx.settings.training;
    let m = Manifest::read(manifest)?;
    let plan = m.folds(t.folds)?.map(|fold_of| FoldPlan { k: t.folds, fold_of });
    let (clips, raw) = load_corpus(&m, &ctx.settings, false)?;

    let mut cache = FeatureCache::new(&ctx.cache_dir(), ctx.settings.feature_config())?;
    let keys = clips.iter().zip(&raw).map(|(c, b)| (c.id.clone(), cache.key(b))).collect();
    drop(raw);
    let mut featurizer = CachedFeaturizer { cache: &mut cache, keys };
    let mut history: Vec<EpochRecord> = Vec::new();
    let cv = run_cv(&clips, t, plan, &mut featurizer, &mut |r| history.push(r.clone()))?;

    let mut outcome = CommandOutcome::default();
    let hyper = hyperparameters(&ctx.settings);
    let meta = |fold: Option<usize>| CheckpointMeta {
        seed: t.seed,
        epoch: t.epochs as u64,
        fold: fold.map(|f| f as u64),
        hyperparameters: hyper.clone(),
    };
    for f in &cv.folds {
        let p = ctx.out.join(format!("checkpoints/fold_{}.cghn", f.fold));
        create_parent(&p)?;
        save_checkpoint(&p, &f.model.params, &meta(Some(f.fold)))?;
        outcome.outputs.push(p);
    }
    let best_fold = cv.final_source.strip_prefix("fold ").and_then(|s| s.parse().ok());
    let model_path = ctx.out.join("model.cghn");
    save_checkpoint(&model_path, &cv.final_model, &meta(best_fold))?;
    outcome.outputs.push(model_path);

    let history_path = ctx.out.join("history.csv");
    let mut w = csv::Writer::from_path(&history_path)?;
    w.write_record(["fold", "epoch", "train_loss", "val_loss", "val_auc"])?;
    for h in &history {
        w.write_record([
            h.fold.to_string(),
            h.epoch.to_string(),
            h.train_loss.to_string(),
            fmt_opt(h.val_loss),
            fmt_opt(h.val_auc),
        ])?;
    }
    w.flush()?;
    outcome.outputs.push(history_path);

    // validation fold of every original; usable as a manifest with a fold column
    let folds_path = ctx.out.join("folds.csv");
    let mut w = csv::Writer::from_path(&folds_path)?;
    w.write_record(["file", "label", "fold"])?;
    for (row, fold) in m.rows.iter().zip(&cv.plan.fold_of) {
        let file = absolute(&m.resolve(row))?.display().to_string();
        w.write_record([file, row.label.to_string(), fold.to_string()])?;
    }
    w.flush()?;
    outcome.outputs.push(folds_path);

    let report_path = ctx.out.join("report.json");
    write_json(&report_path, &cv.report)?;
    outcome.outputs.push(report_path);
    for r in &cv.report.folds {
        let p = ctx.out.join(format!("roc/fold_{}.csv", r.fold));
        write_roc(&p, &report_roc(r))?;
        outcome.outputs.push(p);
    }
    let a = &cv.report.aggregate;
    outcome.notes.push(format!(
        "mean AUC {:.4} (sd {:.4}), mean accuracy {:.4}; final model from {}",
        a.mean_auc, a.sd_auc, a.mean_accuracy, cv.final_source
    ));
    outcome.notes.push(format!("features: {} computed, {} reused", cache.computed, cache.reused));
    let details =
        json!({ "final_model": cv.final_source, "folds": t.folds, "predefined_folds": m.folds(t.folds)?.is_some() });
    finish(ctx, "train", outcome, details)
}

/// Where the decision threshold of `cmd_predict` comes from.
pub enum ThresholdSource {
    None,
    Fixed(f64),
    /// A training report: the 80%-sensitivity threshold of the checkpoint's
    /// fold, or the mean over folds when the checkpoint names none.
    Report(PathBuf),
}

fn resolve_threshold(source: &ThresholdSource, fold: Option<u64>) -> Result<Option<f64>> {
    match source {
        ThresholdSource::None => Ok(None),
        ThresholdSource::Fixed(t) => Ok(Some(*t)),
        ThresholdSource::Report(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let report: CvReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            if report.folds.is_empty() {
                bail!("{} has no folds", p.display());
            }
            let own = fold.and_then(|f| report.folds.iter().find(|r| r.fold as u64 == f));
            Ok(Some(match own {
                Some(r) => r.threshold_80,
                None => report.folds.iter().map(|r| r.threshold_80).sum::<f64>() / report.folds.len() as f64,
            }))
        }
    }
}

/// Score clips with a checkpoint and write `file,probability[,decision]`.
pub fn cmd_predict(
    ctx: &Context,
    checkpoint: &Path,
    inputs: &Inputs,
    threshold: &ThresholdSource,
    output: Option<&Path>,
) -> Result<CommandOutcome> {
    let (params, meta) = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let mut settings = ctx.settings.clone();
    if let Some(f) = meta.hyperparameters.get("features") {
        settings.features = serde_json::from_value::<FeatureSettings>(f.clone())
            .context("checkpoint carries malformed feature settings")?;
    }
    let config = settings.feature_config();
    let mut cache = FeatureCache::new(&ctx.cache_dir(), config)?;
    let shape = cache.extractor().input_shape();
    if shape != params.config.input {
        bail!("checkpoint expects {:?} inputs but features give {:?}", params.config.input, shape);
    }
    let threshold = resolve_threshold(threshold, meta.fold)?;
    let files = list_inputs(inputs)?;

    let mut outcome = CommandOutcome::default();
    let mut scored = Vec::new();
    for f in &files {
        let r = fs::read(&f.path).map_err(anyhow::Error::from).and_then(|b| cache.features(&b, &f.name));
        match r {
            Ok((m, _)) => {
                scored.push(Example { id: f.name.clone(), root_id: f.name.clone(), label: 0, features: m.time_major() })
            }
            Err(e) => outcome.failures.push(Failure { file: f.name.clone(), error: format!("{e:#}") }),
        }
    }
    let refs: Vec<&Example> = scored.iter().collect();
    let probs = if refs.is_empty() { Vec::new() } else { predict(&params, &refs)? };

    let path = output.map(Path::to_path_buf).unwrap_or_else(|| ctx.out.join("scores.csv"));
    create_parent(&path)?;
    let mut w = csv::Writer::from_path(&path)?;
    match threshold {
        Some(_) => w.write_record(["file", "probability", "decision"])?,
        None => w.write_record(["file", "probability"])?,
    }
    for (e, p) in scored.iter().zip(&probs) {
        let mut rec = vec![e.id.clone(), p.to_string()];
        if let Some(t) = threshold {
            rec.push(u8::from(*p >= t).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    outcome.outputs.push(path);
    outcome.notes.push(format!("{} scored, {} failed", scored.len(), outcome.failures.len()));
    let details = json!({ "checkpoint": checkpoint.display().to_string(), "threshold": threshold });
    finish(ctx, "predict", outcome, details)
}

/// Options of `cmd_synth`; the seed comes from the settings.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub n_per_class: usize,
    pub separation: f64,
    pub clip_seconds: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        let d = SynthSpec::default();
        Self { n_per_class: d.n_per_class, separation: d.separation, clip_seconds: d.clip_seconds }
    }
}

/// Generate a synthetic corpus under `<out>/synth` with its manifest.
pub fn cmd_synth(ctx: &Context, opts: &SynthOptions) -> Result<CommandOutcome> {
    let spec = SynthSpec {
        n_per_class: opts.n_per_class,
        separation: opts.separation,
        clip_seconds: opts.clip_seconds,
        seed: ctx.seed(),
        ..SynthSpec::default()
    };
    let corpus = generate_corpus(&spec)?;
    let dir = ctx.out.join("synth");
    fs::create_dir_all(&dir)?;
    let mut outcome = CommandOutcome::default();
    let mut rows = Vec::with_capacity(corpus.len());
    for clip in &corpus {
        let name = format!("{}.wav", clip.id);
        let path = dir.join(&name);
        save_wav(&path, &clip.clip, WavEncoding::Float32).with_context(|| format!("writing {}", path.display()))?;
        outcome.outputs.push(path);
        rows.push(ManifestRow::new(name, clip.label));
    }
    let manifest_path = dir.join("manifest.csv");
    write_manifest(&manifest_path, &rows, Columns::Basic)?;
    outcome.outputs.push(manifest_path);
    outcome.notes.push(format!("{} clips", rows.len()));
    let details = json!({
        "n_per_class": spec.n_per_class,
        "separation": spec.separation,
        "clip_seconds": spec.clip_seconds,
    });
    finish(ctx, "synth", outcome, details)
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    file: String,
    probability: f64,
}

/// Re-score a scores CSV against a manifest's labels.
pub fn cmd_evaluate(ctx: &Context, scores: &Path, manifest: &Path) -> Result<CommandOutcome> {
    let m = Manifest::read(manifest)?;
    let mut reader = csv::Reader::from_path(scores).with_context(|| format!("opening {}", scores.display()))?;
    let mut by_file = HashMap::new();
    for (i, rec) in reader.deserialize::<ScoreRow>().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", scores.display(), i + 2))?;
        if by_file.insert(rec.file.clone(), rec.probability).is_some() {
            bail!("{} is scored twice", rec.file);
        }
    }
    let mut outcome = CommandOutcome::default();
    let (mut s, mut l) = (Vec::new(), Vec::new());
    for row in &m.rows {
        match by_file.remove(&row.file) {
            Some(p) => {
                s.push(p);
                l.push(row.label);
            }
            None => outcome.failures.push(Failure { file: row.file.clone(), error: "no score".into() }),
        }
    }
    let mut unlabeled: Vec<String> = by_file.into_keys().collect();
    unlabeled.sort();
    outcome.failures.extend(unlabeled.into_iter().map(|file| Failure { file, error: "not in the manifest".into() }));

    let report = evaluate(0, &s, &l)?;
    let eval_path = ctx.out.join("evaluation.json");
    write_json(&eval_path, &report)?;
    outcome.outputs.push(eval_path);
    let roc_path = ctx.out.join("roc.csv");
    write_roc(&roc_path, &report_roc(&report))?;
    outcome.outputs.push(roc_path);
    outcome.notes.push(format!(
        "AUC {:.4}, accuracy {:.4}, threshold at 80% sensitivity {:.4}",
        report.auc, report.accuracy, report.threshold_80
    ));
    finish(ctx, "evaluate", outcome, json!({ "scored": s.len() }))
}
