//! The three trainable stages, their losses, and training.

mod encode;
mod loss;
mod nets;
mod semantic;
mod stages;
mod train;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Params;
use crate::scalar::Scalar;

pub use encode::{encode_frame, encode_limbs, encode_point, encode_pose, prepare, Augment, AugmentConfig, Prepared};
pub use loss::{bce_with_grad, ce_loss_class, clamped_neg_log, ce_loss_grid, sigmoid, softmax_ce_with_grad, softmax_in_place, PROB_FLOOR};
pub use nets::{ClassifierConfig, Hourglass, HourglassConfig, Mlp, ResidualTrunk, TrunkFeatures};
pub use stages::{
    grid_ce_with_grad, spatial_softmax, Encoded, GoalModel, HeatmapBaselineModel, ModuleKind, PoseModel, TypeArch,
    TypeModel, IDENTITY_GAIN,
};
pub use semantic::SemanticModel;
pub use train::{
    ignore_checkpoints, train_goal, train_heatmap_baseline, train_loop, train_pose, train_type, TrainConfig,
    TrainReport,
};

/// A network with serializable architecture and seeded initialization.
pub trait Module<T: Scalar>: Sized {
    const KIND: ModuleKind;
    type Arch: Serialize + DeserializeOwned + Clone + PartialEq + std::fmt::Debug;

    fn build(arch: &Self::Arch, seed: u64) -> Result<Self>;
    fn arch(&self) -> &Self::Arch;
    fn seed(&self) -> u64;
    fn params(&self) -> &Params<T>;
    fn params_mut(&mut self) -> &mut Params<T>;
}

/// JSON sidecar written next to a weights file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub module: ModuleKind,
    pub arch: serde_json::Value,
    pub init_seed: u64,
    pub config: Option<TrainConfig>,
    pub vocab_hash: Option<String>,
    pub data_hash: Option<String>,
    pub final_loss: Option<f64>,
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Write `<base>.weights` and `<base>.json`.
pub fn save_checkpoint<T: Scalar, M: Module<T>>(
    model: &M,
    base: &Path,
    config: Option<&TrainConfig>,
    vocab_hash: Option<String>,
    data_hash: Option<String>,
    final_loss: Option<f64>,
) -> Result<CheckpointMeta> {
    if let Some(dir) = base.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let weights = with_ext(base, ".weights");
    model.params().save(&weights)?;
    let meta = CheckpointMeta {
        module: M::KIND,
        arch: serde_json::to_value(model.arch()).map_err(Error::json(&weights))?,
        init_seed: model.seed(),
        config: config.cloned(),
        vocab_hash,
        data_hash,
        final_loss,
    };
    let json = with_ext(base, ".json");
    std::fs::write(&json, serde_json::to_vec_pretty(&meta).map_err(Error::json(&json))?).map_err(Error::io(&json))?;
    Ok(meta)
}

/// Rebuild a module from `<base>.json` and load `<base>.weights` into it.
pub fn load_checkpoint<T: Scalar, M: Module<T>>(base: &Path) -> Result<(M, CheckpointMeta)> {
    let json = with_ext(base, ".json");
    let bytes = std::fs::read(&json).map_err(Error::io(&json))?;
    let meta: CheckpointMeta = serde_json::from_slice(&bytes).map_err(Error::json(&json))?;
    if meta.module != M::KIND {
        return Err(Error::Model(format!(
            "{} holds a {} checkpoint, expected {}",
            json.display(),
            meta.module.name(),
            M::KIND.name()
        )));
    }
    let arch: M::Arch = serde_json::from_value(meta.arch.clone()).map_err(Error::json(&json))?;
    let mut model = M::build(&arch, meta.init_seed)?;
    model.params_mut().load(&with_ext(base, ".weights"))?;
    Ok((model, meta))
}
