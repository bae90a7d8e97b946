use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pastpose::models::{AugmentConfig, ClassifierConfig, HourglassConfig, ModuleKind, TrainConfig};
use pastpose::synth::{RenderOptions, SimConfig, DEFAULT_TAU};
use pastpose::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable that replaces `output` when set.
pub const OUTPUT_ENV: &str = "PASTPOSE_OUTPUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub root: PathBuf,
    pub split_seed: u64,
    pub split_ratios: [f64; 3],
    pub pair_offset: usize,
    pub pair_stride: usize,
    pub motion_threshold: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            root: PathBuf::from("data"),
            split_seed: 0,
            split_ratios: [0.7, 0.1, 0.2],
            pair_offset: pastpose::dataset::PAST_OFFSET,
            pair_stride: 15,
            motion_threshold: pastpose::dataset::MOTION_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub duration_s: f64,
    pub tau: f64,
    pub seed: u64,
    pub marks: bool,
    pub stale_marks: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clips: 40,
            duration_s: 12.0,
            tau: DEFAULT_TAU,
            seed: 0,
            marks: true,
            stale_marks: true,
        }
    }
}

impl SynthConfig {
    pub fn sim(&self) -> SimConfig {
        SimConfig {
            duration_s: self.duration_s,
            tau: self.tau,
            render: RenderOptions { marks: self.marks },
            stale_marks: self.stale_marks,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig { k: 30, seed: 0 }
    }
}

/// Per-module changes on top of the scale defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverride {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub weight_decay: Option<f64>,
    pub flip: Option<bool>,
    pub crop: Option<bool>,
    pub checkpoint_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSection {
    pub m: usize,
    pub topk: usize,
    pub seed: u64,
    pub knn_stride: usize,
    pub candidate_stride: usize,
}

impl Default for InferSection {
    fn default() -> Self {
        InferSection {
            m: pastpose::pipeline::DEFAULT_M,
            topk: pastpose::pipeline::DEFAULT_TOPK,
            seed: 0,
            knn_stride: pastpose::pipeline::KNN_STRIDE,
            candidate_stride: pastpose::pipeline::CANDIDATE_STRIDE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output: PathBuf,
    pub scale: Scale,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub vocab: VocabConfig,
    pub train: BTreeMap<String, TrainOverride>,
    pub inference: InferSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output: PathBuf::from("runs/default"),
            scale: Scale::Desk,
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            vocab: VocabConfig::default(),
            train: BTreeMap::new(),
            inference: InferSection::default(),
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    // Reuse the TOML grammar for literals; anything unparseable is a string.
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parse a TOML document, then apply `key=value` overrides with dotted keys.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_path(&mut table, k.trim(), parse_scalar(v.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load `path` (or defaults when `None`), apply overrides and the output environment variable.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut cfg = RunConfig::from_toml(&text, overrides)?;
        if let Ok(out) = std::env::var(OUTPUT_ENV) {
            if !out.is_empty() {
                cfg.output = PathBuf::from(out);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.data.split_ratios;
        if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must be in [0, 1] and sum to 1, got {r:?}")));
        }
        if self.data.pair_offset == 0 || self.data.pair_stride == 0 {
            return Err(Error::Config("pair offset and stride must be positive".into()));
        }
        if self.vocab.k == 0 {
            return Err(Error::Config("vocabulary needs k ≥ 1".into()));
        }
        if self.inference.m == 0 || self.inference.topk == 0 {
            return Err(Error::Config("inference needs m ≥ 1 and topk ≥ 1".into()));
        }
        if self.inference.knn_stride == 0 || self.inference.candidate_stride == 0 {
            return Err(Error::Config("baseline strides must be positive".into()));
        }
        if !(self.synth.tau > 0.0) || !(self.synth.duration_s > 0.0) {
            return Err(Error::Config("synthetic tau and duration must be positive".into()));
        }
        for name in self.train.keys() {
            ModuleKind::parse(name)?;
        }
        for kind in ModuleKind::ALL {
            self.train_config(kind).validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self, kind: ModuleKind) -> TrainConfig {
        let mut c = match self.scale {
            Scale::Desk => TrainConfig::desk(kind),
            Scale::Full => TrainConfig::full(kind),
        };
        if let Some(o) = self.train.get(kind.name()) {
            c.learning_rate = o.learning_rate.unwrap_or(c.learning_rate);
            c.batch_size = o.batch_size.unwrap_or(c.batch_size);
            c.iterations = o.iterations.unwrap_or(c.iterations);
            c.seed = o.seed.unwrap_or(c.seed);
            c.weight_decay = o.weight_decay.unwrap_or(c.weight_decay);
            c.checkpoint_every = o.checkpoint_every.unwrap_or(c.checkpoint_every);
            c.augment = AugmentConfig {
                flip: o.flip.unwrap_or(c.augment.flip),
                crop: o.crop.unwrap_or(c.augment.crop),
                ..c.augment
            };
        }
        c
    }

    /// Weight initialization seed of a module: the training seed offset by the module.
    pub fn init_seed(&self, kind: ModuleKind) -> u64 {
        let offset = ModuleKind::ALL.iter().position(|&k| k == kind).expect("listed") as u64;
        self.train_config(kind).seed.wrapping_mul(31).wrapping_add(offset + 1)
    }

    pub fn hourglass(&self) -> HourglassConfig {
        match self.scale {
            Scale::Desk => HourglassConfig::desk(),
            Scale::Full => HourglassConfig::full(),
        }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        match self.scale {
            Scale::Desk => ClassifierConfig::desk(),
            Scale::Full => ClassifierConfig::full(),
        }
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }

    /// Every seed the configuration controls, by name.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut s = BTreeMap::new();
        s.insert("split".into(), self.data.split_seed);
        s.insert("synth".into(), self.synth.seed);
        s.insert("vocab".into(), self.vocab.seed);
        s.insert("inference".into(), self.inference.seed);
        for kind in ModuleKind::ALL {
            s.insert(format!("train.{}", kind.name()), self.train_config(kind).seed);
            s.insert(format!("init.{}", kind.name()), self.init_seed(kind));
        }
        s
    }
}
