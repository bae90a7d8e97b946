use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use pastpose::dataset::{clip_dir, list_clips, load_clip, make_filtered_pairs, split_by_clip, write_clip, SplitManifest};
use pastpose::eval::{
    evaluate, intensity_sweep, make_semantic_dataset, sweep_to_csv, train_semantic, MarkRegion, MetricsReport,
    SemanticClassifier,
};
use pastpose::models::{
    load_checkpoint, save_checkpoint, train_goal, train_heatmap_baseline, train_pose, train_type, GoalModel,
    HeatmapBaselineModel, Module, ModuleKind, PoseModel, SemanticModel, TrainReport, TypeArch, TypeModel,
};
use pastpose::pipeline::{
    baseline_candidates, infer_past, knn_baseline_build, HeatmapBaseline, InferenceConfig, OraclePredictor,
    PastPredictor,
};
use pastpose::synth::{corpus_clip, DEFAULT_BODY_TEMP};
use pastpose::vocab::build_vocabulary;
use pastpose::{Error, Models, Pair, Result, Vocabulary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::draw;

/// Record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// Content hashes of the inputs the command read.
    pub inputs: BTreeMap<String, String>,
    /// Paths written, relative to the output directory when possible.
    pub outputs: Vec<String>,
    pub details: serde_json::Value,
}

impl Manifest {
    fn new(cfg: &RunConfig, command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash: cfg.hash(),
            seeds: cfg.seeds(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    fn output(&mut self, cfg: &RunConfig, path: &Path) {
        let rel = path.strip_prefix(&cfg.output).unwrap_or(path);
        self.outputs.push(rel.display().to_string());
    }

    fn write(&self, cfg: &RunConfig, name: &str) -> Result<PathBuf> {
        let dir = cfg.output.join("manifests");
        create_dir(&dir)?;
        let path = dir.join(format!("{name}.json"));
        write_json(&path, self)?;
        Ok(path)
    }
}

/// Whether a failure is a configuration, data or skipped-sample problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Config,
    Data,
    Skipped,
}

impl ExitKind {
    pub fn of(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Parameter(_) => ExitKind::Config,
            Error::TooManySkipped { .. } => ExitKind::Skipped,
            _ => ExitKind::Data,
        }
    }

    pub fn code(self) -> i32 {
        match self {
            ExitKind::Config => 2,
            ExitKind::Data => 3,
            ExitKind::Skipped => 4,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    std::fs::write(path, s).map_err(Error::io(path))
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

/// Hash of the supervision a command trained or evaluated on.
pub fn pairs_hash(pairs: &[Pair]) -> String {
    let mut h = Sha256::new();
    for p in pairs {
        h.update(p.clip_id.as_bytes());
        h.update((p.frame_index as u64).to_le_bytes());
        for pose in [&p.current_pose, &p.past_pose] {
            for j in &pose.joints {
                h.update(j.x.to_le_bytes());
                h.update(j.y.to_le_bytes());
            }
        }
    }
    format!("{:x}", h.finalize())
}

pub fn vocab_path(cfg: &RunConfig) -> PathBuf {
    cfg.output.join("vocab.json")
}

pub fn checkpoint_base(cfg: &RunConfig, kind: ModuleKind) -> PathBuf {
    cfg.output.join("checkpoints").join(kind.name())
}

fn splits_path(cfg: &RunConfig) -> PathBuf {
    cfg.data.root.join("splits.json")
}

pub fn load_splits(cfg: &RunConfig) -> Result<SplitManifest> {
    let path = splits_path(cfg);
    if path.exists() {
        return SplitManifest::load(&path);
    }
    let ids = list_clips(&cfg.data.root)?;
    split_by_clip(&ids, cfg.data.split_ratios, cfg.data.split_seed)
}

/// Supervised pairs of the given clips, with pose types when a vocabulary is given.
pub fn load_pairs(cfg: &RunConfig, ids: &[String], vocab: Option<&Vocabulary>) -> Result<Vec<Pair>> {
    let mut out = Vec::new();
    for id in ids {
        let clip = load_clip::<f32>(&clip_dir(&cfg.data.root, id))?;
        out.extend(make_filtered_pairs(
            &clip,
            cfg.data.pair_offset,
            cfg.data.pair_stride,
            cfg.data.motion_threshold,
        ));
    }
    if let Some(v) = vocab {
        for p in out.iter_mut() {
            p.past_type = Some(v.assign(&p.past_pose)?);
        }
    }
    Ok(out)
}

fn load_vocab(cfg: &RunConfig) -> Result<(Vocabulary, String)> {
    let path = vocab_path(cfg);
    if !path.exists() {
        return Err(Error::Config(format!("{} not found; run build-vocab first", path.display())));
    }
    Ok((Vocabulary::load(&path)?, sha256_file(&path)?))
}

/// Simulate `synth.n_clips` clips into the dataset root and write the split file.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Manifest> {
    let root = &cfg.data.root;
    create_dir(root)?;
    let sim = cfg.synth.sim();
    let mut ids = Vec::with_capacity(cfg.synth.n_clips);
    for i in 0..cfg.synth.n_clips {
        let clip = corpus_clip::<f32>(cfg.synth.seed, i, &sim)?;
        write_clip(root, &clip)?;
        info!("wrote clip {} ({} frames)", clip.clip_id, clip.len());
        ids.push(clip.clip_id);
    }
    let splits = split_by_clip(&ids, cfg.data.split_ratios, cfg.data.split_seed)?;
    let path = splits_path(cfg);
    splits.save(&path)?;
    let mut m = Manifest::new(cfg, "synth");
    m.output(cfg, &path);
    m.details = serde_json::json!({
        "clips": ids,
        "train": splits.train.len(),
        "val": splits.val.len(),
        "test": splits.test.len(),
    });
    m.write(cfg, "synth")?;
    Ok(m)
}

/// Fit the pose-type vocabulary on the past poses of the training split.
pub fn cmd_build_vocab(cfg: &RunConfig) -> Result<Manifest> {
    let splits = load_splits(cfg)?;
    let pairs = load_pairs(cfg, &splits.train, None)?;
    if pairs.is_empty() {
        return Err(Error::data("training split has no pairs"));
    }
    let poses: Vec<_> = pairs.iter().map(|p| p.past_pose.clone()).collect();
    let vocab = build_vocabulary(&poses, cfg.vocab.k, cfg.vocab.seed)?;
    create_dir(&cfg.output)?;
    let path = vocab_path(cfg);
    vocab.save(&path)?;
    let mut m = Manifest::new(cfg, "build-vocab");
    m.inputs.insert("train_pairs".into(), pairs_hash(&pairs));
    m.output(cfg, &path);
    m.details = serde_json::json!({
        "k": vocab.k,
        "poses": poses.len(),
        "inertia": vocab.inertia,
        "vocab_hash": sha256_file(&path)?,
    });
    m.write(cfg, "build-vocab")?;
    Ok(m)
}

fn finish_training<M: Module<f32>>(
    cfg: &RunConfig,
    kind: ModuleKind,
    model: &M,
    report: &TrainReport,
    vocab_hash: Option<String>,
    data_hash: String,
    extra: serde_json::Value,
) -> Result<Manifest> {
    let base = checkpoint_base(cfg, kind);
    let tc = cfg.train_config(kind);
    save_checkpoint(model, &base, Some(&tc), vocab_hash.clone(), Some(data_hash.clone()), report.final_loss())?;
    let csv = cfg.output.join(format!("{}_loss.csv", kind.name()));
    std::fs::write(&csv, report.to_csv()?).map_err(Error::io(&csv))?;
    let mut m = Manifest::new(cfg, "train");
    m.inputs.insert("train_pairs".into(), data_hash);
    if let Some(v) = vocab_hash {
        m.inputs.insert("vocab".into(), v);
    }
    for ext in [".weights", ".json"] {
        let mut p = base.clone().into_os_string();
        p.push(ext);
        m.output(cfg, Path::new(&p));
    }
    m.output(cfg, &csv);
    m.details = serde_json::json!({
        "module": kind.name(),
        "iterations": tc.iterations,
        "final_loss": report.final_loss(),
        "redrawn": report.redrawn,
        "extra": extra,
    });
    m.write(cfg, &format!("train-{}", kind.name()))?;
    Ok(m)
}

/// Observer that saves `checkpoints/<module>_iter<N>` whenever training reports progress.
fn periodic<'a, M: Module<f32>>(
    cfg: &'a RunConfig,
    kind: ModuleKind,
    vocab_hash: Option<String>,
) -> impl FnMut(usize, &M, f64) -> Result<()> + 'a {
    let tc = cfg.train_config(kind);
    move |it, model, loss| {
        let base = cfg.output.join("checkpoints").join(format!("{}_iter{it}", kind.name()));
        save_checkpoint(model, &base, Some(&tc), vocab_hash.clone(), None, Some(loss)).map(|_| ())
    }
}

/// Train one module on the training split and save its checkpoint and loss curve.
pub fn cmd_train(cfg: &RunConfig, kind: ModuleKind) -> Result<Manifest> {
    let splits = load_splits(cfg)?;
    let tc = cfg.train_config(kind);
    let seed = cfg.init_seed(kind);
    match kind {
        ModuleKind::Goal => {
            let pairs = load_pairs(cfg, &splits.train, None)?;
            let mut model = GoalModel::build(&cfg.hourglass(), seed)?;
            let report = train_goal(&mut model, &pairs, &tc, periodic(cfg, kind, None))?;
            finish_training(cfg, kind, &model, &report, None, pairs_hash(&pairs), serde_json::Value::Null)
        }
        ModuleKind::Type => {
            let (vocab, vh) = load_vocab(cfg)?;
            let pairs = load_pairs(cfg, &splits.train, Some(&vocab))?;
            let arch = TypeArch {
                classifier: cfg.classifier(),
                k: vocab.k,
            };
            let mut model = TypeModel::build(&arch, seed)?;
            let report = train_type(&mut model, &pairs, &vocab, &tc, periodic(cfg, kind, Some(vh.clone())))?;
            finish_training(cfg, kind, &model, &report, Some(vh), pairs_hash(&pairs), serde_json::Value::Null)
        }
        ModuleKind::Pose => {
            let (vocab, vh) = load_vocab(cfg)?;
            let pairs = load_pairs(cfg, &splits.train, Some(&vocab))?;
            let mut model = PoseModel::build(&cfg.hourglass(), seed)?;
            let report = train_pose(&mut model, &pairs, &vocab, &tc, periodic(cfg, kind, Some(vh.clone())))?;
            finish_training(cfg, kind, &model, &report, Some(vh), pairs_hash(&pairs), serde_json::Value::Null)
        }
        ModuleKind::HeatmapBaseline => {
            let pairs = load_pairs(cfg, &splits.train, None)?;
            let mut model = HeatmapBaselineModel::build(&cfg.hourglass(), seed)?;
            let report = train_heatmap_baseline(&mut model, &pairs, &tc, periodic(cfg, kind, None))?;
            finish_training(cfg, kind, &model, &report, None, pairs_hash(&pairs), serde_json::Value::Null)
        }
        ModuleKind::Semantic => {
            let pairs = load_pairs(cfg, &splits.train, None)?;
            let train = make_semantic_dataset(&pairs, tc.seed)?;
            let val_pairs = load_pairs(cfg, &splits.val, None)?;
            let heldout = if val_pairs.is_empty() {
                None
            } else {
                Some(make_semantic_dataset(&val_pairs, tc.seed ^ 1)?)
            };
            let clf = train_semantic(&train, heldout.as_deref(), &cfg.classifier(), seed, &tc)?;
            let extra = serde_json::json!({
                "train_accuracy": clf.train_accuracy,
                "heldout_accuracy": clf.heldout_accuracy,
                "note": "scores thermal frames, not RGB; not comparable with RGB-based plausibility scores",
            });
            finish_training(cfg, kind, &clf.model, &clf.report, None, pairs_hash(&pairs), extra)
        }
    }
}

/// Load the three stages and check that they share the vocabulary on disk.
pub fn load_models(cfg: &RunConfig) -> Result<Models> {
    let (vocab, vh) = load_vocab(cfg)?;
    let (goal, _) = load_checkpoint::<f32, GoalModel<f32>>(&checkpoint_base(cfg, ModuleKind::Goal))?;
    let (type_model, tm) = load_checkpoint::<f32, TypeModel<f32>>(&checkpoint_base(cfg, ModuleKind::Type))?;
    let (pose, pm) = load_checkpoint::<f32, PoseModel<f32>>(&checkpoint_base(cfg, ModuleKind::Pose))?;
    for (name, meta) in [("type", &tm), ("pose", &pm)] {
        if meta.vocab_hash.as_deref() != Some(vh.as_str()) {
            return Err(Error::Config(format!("{name} model was trained with a different vocabulary; retrain it")));
        }
    }
    Models::new(goal, type_model, pose, vocab)
}

fn load_semantic(cfg: &RunConfig) -> Result<Option<SemanticClassifier<f32>>> {
    let base = checkpoint_base(cfg, ModuleKind::Semantic);
    let mut json = base.into_os_string();
    json.push(".json");
    if !Path::new(&json).exists() {
        return Ok(None);
    }
    let (model, _) = load_checkpoint::<f32, SemanticModel<f32>>(&checkpoint_base(cfg, ModuleKind::Semantic))?;
    Ok(Some(SemanticClassifier::from_model(model)))
}

fn inference_config(cfg: &RunConfig) -> InferenceConfig {
    InferenceConfig {
        m: cfg.inference.m,
        topk: cfg.inference.topk,
        seed: cfg.inference.seed,
    }
}

/// Methods `cmd_eval` can score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    Ours,
    Knn,
    HeatmapBaseline,
    Oracle,
}

impl EvalMethod {
    pub fn name(self) -> &'static str {
        match self {
            EvalMethod::Ours => "ours",
            EvalMethod::Knn => "knn",
            EvalMethod::HeatmapBaseline => "heatmap-baseline",
            EvalMethod::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [EvalMethod::Ours, EvalMethod::Knn, EvalMethod::HeatmapBaseline, EvalMethod::Oracle]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown evaluation method {s:?}")))
    }
}

/// Evaluate one method on the test split; writes `eval/<method>.json` and `.csv`.
pub fn cmd_eval(cfg: &RunConfig, method: EvalMethod) -> Result<(MetricsReport, Manifest)> {
    let splits = load_splits(cfg)?;
    let mut m = Manifest::new(cfg, "eval");
    let vocab = match method {
        EvalMethod::Ours => {
            let (v, vh) = load_vocab(cfg)?;
            m.inputs.insert("vocab".into(), vh);
            Some(v)
        }
        _ => None,
    };
    let test = load_pairs(cfg, &splits.test, vocab.as_ref())?;
    m.inputs.insert("test_pairs".into(), pairs_hash(&test));
    let semantic = load_semantic(cfg)?;
    let icfg = inference_config(cfg);
    let predictor: Box<dyn PastPredictor<f32>> = match method {
        EvalMethod::Ours => Box::new(load_models(cfg)?),
        EvalMethod::Knn => {
            let train = load_pairs(cfg, &splits.train, None)?;
            m.inputs.insert("train_pairs".into(), pairs_hash(&train));
            let pool = knn_baseline_build(&train, cfg.inference.knn_stride)?;
            let dir = cfg.output.join("baselines");
            create_dir(&dir)?;
            pool.save(&dir.join("knn"))?;
            m.output(cfg, &dir.join("knn.json"));
            m.output(cfg, &dir.join("knn.bin"));
            Box::new(pool)
        }
        EvalMethod::HeatmapBaseline => {
            let train = load_pairs(cfg, &splits.train, None)?;
            m.inputs.insert("train_pairs".into(), pairs_hash(&train));
            let (model, _) =
                load_checkpoint::<f32, HeatmapBaselineModel<f32>>(&checkpoint_base(cfg, ModuleKind::HeatmapBaseline))?;
            let candidates = baseline_candidates(&train, cfg.inference.candidate_stride)?;
            Box::new(HeatmapBaseline { model, candidates })
        }
        EvalMethod::Oracle => Box::new(OraclePredictor),
    };
    let mut report = evaluate(predictor.as_ref(), &test, &icfg, semantic.as_ref(), &cfg.hash())?;
    report.method = method.name().to_string();
    if semantic.is_some() {
        report.note = Some("plausibility scored by a classifier trained on thermal frames".into());
    }
    let dir = cfg.output.join("eval");
    create_dir(&dir)?;
    let base = dir.join(method.name());
    report.save(&base)?;
    m.output(cfg, &base.with_extension("json"));
    m.output(cfg, &base.with_extension("csv"));
    m.details = serde_json::json!({
        "method": method.name(),
        "n_samples": report.n_samples,
        "skipped": report.skipped,
        "mpjpe_top1": report.mpjpe_top1,
        "mpjpe_top3": report.mpjpe_top3,
        "mpjpe_top5": report.mpjpe_top5,
        "nll": report.nll,
        "semantic_score": report.semantic_score,
    });
    m.write(cfg, &format!("eval-{}", method.name()))?;
    Ok((report, m))
}

fn clip_frame(cfg: &RunConfig, clip_id: &str, frame: usize) -> Result<(pastpose::Clip, usize)> {
    let clip = load_clip::<f32>(&clip_dir(&cfg.data.root, clip_id))?;
    if frame >= clip.len() {
        return Err(Error::data(format!("clip {clip_id} has {} frames, no frame {frame}", clip.len())));
    }
    Ok((clip, frame))
}

/// Sample hypotheses for one frame; writes JSON, an overlay and ranked panels.
pub fn cmd_infer(cfg: &RunConfig, clip_id: &str, frame: usize) -> Result<Manifest> {
    let models = load_models(cfg)?;
    let (clip, t) = clip_frame(cfg, clip_id, frame)?;
    let (image, current) = (&clip.frames[t], &clip.poses[t]);
    let result = infer_past(&models, image, current, &inference_config(cfg))?;
    let dir = cfg.output.join("infer");
    create_dir(&dir)?;
    let stem = format!("{clip_id}_{t:06}");
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&json, result.to_json()?).map_err(Error::io(&json))?;
    let overlay = dir.join(format!("{stem}_overlay.png"));
    save_png(&draw::overlay(image, current, &result.poses()), &overlay)?;
    let mut ranked: Vec<_> = result.hypotheses.iter().collect();
    ranked.sort_by(|a, b| b.log_prob().total_cmp(&a.log_prob()));
    let top: Vec<_> = ranked.iter().take(6).map(|h| h.pose.clone()).collect();
    let panels = dir.join(format!("{stem}_panels.png"));
    save_png(&draw::ranked_panels(image, current, &top, 3), &panels)?;
    let mut m = Manifest::new(cfg, "infer");
    for p in [&json, &overlay, &panels] {
        m.output(cfg, p);
    }
    m.details = serde_json::json!({ "clip": clip_id, "frame": t, "hypotheses": result.hypotheses.len() });
    m.write(cfg, &format!("infer-{stem}"))?;
    Ok(m)
}

fn scene_ambient(clip: &pastpose::Clip) -> Result<f64> {
    clip.meta
        .scene
        .as_ref()
        .and_then(|s| s.get("ambient"))
        .and_then(|a| a.as_f64())
        .ok_or_else(|| Error::data(format!("clip {} has no scene ambient level to locate marks against", clip.clip_id)))
}

/// Goal-to-mark expected distance as the mark is dimmed or brightened; writes CSV and a plot.
pub fn cmd_intensity_sweep(cfg: &RunConfig, clip_id: &str, frame: usize, scales: &[f64]) -> Result<Manifest> {
    if scales.is_empty() {
        return Err(Error::Config("no scales given".into()));
    }
    let (goal, _) = load_checkpoint::<f32, GoalModel<f32>>(&checkpoint_base(cfg, ModuleKind::Goal))?;
    let (clip, t) = clip_frame(cfg, clip_id, frame)?;
    let region = MarkRegion::from_frame(&clip.frames[t], scene_ambient(&clip)?, DEFAULT_BODY_TEMP);
    let points = intensity_sweep(&goal, &clip.frames[t], &clip.poses[t], &region, scales)?;
    let dir = cfg.output.join("sweep");
    create_dir(&dir)?;
    let stem = format!("{clip_id}_{t:06}");
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, sweep_to_csv(&points)?).map_err(Error::io(&csv))?;
    let png = dir.join(format!("{stem}.png"));
    save_png(&draw::sweep_plot(&points), &png)?;
    let mut m = Manifest::new(cfg, "intensity-sweep");
    m.output(cfg, &csv);
    m.output(cfg, &png);
    m.details = serde_json::json!({ "clip": clip_id, "frame": t, "mark_pixels": region.len(), "points": points });
    m.write(cfg, &format!("sweep-{stem}"))?;
    Ok(m)
}
