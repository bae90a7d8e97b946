//! Training configuration and the shared mini-batch loop.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::{prepare, Augment, AugmentConfig};
use super::stages::{Encoded, GoalModel, HeatmapBaselineModel, ModuleKind, PoseModel, TypeModel};
use super::Module;
use crate::dataset::SamplePair;
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Grads};
use crate::scalar::Scalar;
use crate::vocab::PoseTypeVocabulary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub augment: AugmentConfig,
    /// Call the observer every this many iterations; 0 disables it.
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl TrainConfig {
    /// Full-scale settings: Adam for 6000 iterations at the original learning rates and batch sizes.
    pub fn full(kind: ModuleKind) -> Self {
        let (learning_rate, batch_size, weight_decay) = match kind {
            ModuleKind::Goal | ModuleKind::HeatmapBaseline => (5e-5, 32, 0.0),
            ModuleKind::Type => (5e-5, 128, 0.0),
            ModuleKind::Pose => (1e-4, 32, 0.0),
            ModuleKind::Semantic => (3e-5, 128, 1e-3),
        };
        TrainConfig {
            learning_rate,
            batch_size,
            iterations: 6000,
            seed: 0,
            weight_decay,
            augment: AugmentConfig::default(),
            checkpoint_every: 1000,
        }
    }

    /// Small-model settings that converge within a CPU budget.
    pub fn desk(kind: ModuleKind) -> Self {
        let (learning_rate, batch_size, iterations, weight_decay) = match kind {
            ModuleKind::Goal | ModuleKind::HeatmapBaseline => (1e-3, 8, 1500, 0.0),
            ModuleKind::Type => (1e-3, 16, 1500, 0.0),
            ModuleKind::Pose => (1e-3, 8, 1500, 0.0),
            ModuleKind::Semantic => (1e-3, 16, 1500, 1e-3),
        };
        TrainConfig {
            learning_rate,
            batch_size,
            iterations,
            seed: 0,
            weight_decay,
            augment: AugmentConfig::default(),
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.iterations == 0 || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("training hyperparameters must be positive: {self:?}")));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per iteration.
    pub losses: Vec<f64>,
    /// Examples rejected by augmentation and redrawn.
    pub redrawn: usize,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// Loss curve as `iteration,loss` CSV.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iteration", "loss"]).map_err(|e| Error::data(e.to_string()))?;
        for (i, l) in self.losses.iter().enumerate() {
            w.write_record([i.to_string(), format!("{l}")]).map_err(|e| Error::data(e.to_string()))?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::data(e.to_string()))?).map_err(|e| Error::data(e.to_string()))
    }
}

const MAX_REDRAWS: usize = 32;

/// Mini-batch Adam over `n` examples drawn uniformly with a seeded generator.
///
/// `loss_fn(model, index, augmentation, grads)` returns `None` when the augmentation
/// makes the example unusable; a fresh example is drawn in its place.
pub fn train_loop<T: Scalar, M: Module<T>>(
    model: &mut M,
    n: usize,
    cfg: &TrainConfig,
    mut loss_fn: impl FnMut(&M, usize, &Augment, &mut Grads<T>) -> Result<Option<T>>,
    mut observer: impl FnMut(usize, &M, f64) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::data("no training examples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam(), model.params());
    let mut report = TrainReport::default();
    for it in 0..cfg.iterations {
        let mut grads = model.params().zero_grads();
        let mut total = 0.0;
        let mut count = 0usize;
        let mut redraws = 0;
        while count < cfg.batch_size {
            let idx = rng.gen_range(0..n);
            let aug = cfg.augment.sample(&mut rng);
            match loss_fn(model, idx, &aug, &mut grads)? {
                Some(l) => {
                    total += l.as_f64();
                    count += 1;
                }
                None => {
                    redraws += 1;
                    report.redrawn += 1;
                    if redraws > MAX_REDRAWS * cfg.batch_size {
                        return Err(Error::data("augmentation rejects nearly every example"));
                    }
                }
            }
        }
        grads.scale(T::lit(1.0 / count as f64));
        adam.step(model.params_mut(), &grads);
        let mean = total / count as f64;
        if !mean.is_finite() {
            return Err(Error::Model(format!("loss diverged at iteration {it}")));
        }
        report.losses.push(mean);
        if it % 100 == 0 {
            debug!("{} iteration {it}: loss {mean:.4}", M::KIND.name());
        }
        if cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 {
            observer(it + 1, model, mean)?;
        }
    }
    Ok(report)
}

fn require_types<T: Scalar>(pairs: &[SamplePair<T>]) -> Result<()> {
    if let Some(p) = pairs.iter().find(|p| p.past_type.is_none()) {
        return Err(Error::data(format!(
            "pair {}:{} has no pose type; fit the vocabulary first",
            p.clip_id, p.frame_index
        )));
    }
    Ok(())
}

/// Teacher-forced GoalNet training on ground-truth past torso cells.
pub fn train_goal<T: Scalar>(
    model: &mut GoalModel<T>,
    pairs: &[SamplePair<T>],
    cfg: &TrainConfig,
    observer: impl FnMut(usize, &GoalModel<T>, f64) -> Result<()>,
) -> Result<TrainReport> {
    train_loop(
        model,
        pairs.len(),
        cfg,
        |m, i, aug, grads| {
            let Some(p) = prepare(&pairs[i], aug, None)? else {
                return Ok(None);
            };
            let enc = Encoded::new(&p.image, &p.current)?;
            Ok(Some(m.loss(&enc, p.past_torso(), Some(grads))))
        },
        observer,
    )
}

/// TypeNet training conditioned on the ground-truth past torso.
pub fn train_type<T: Scalar>(
    model: &mut TypeModel<T>,
    pairs: &[SamplePair<T>],
    vocab: &PoseTypeVocabulary<T>,
    cfg: &TrainConfig,
    observer: impl FnMut(usize, &TypeModel<T>, f64) -> Result<()>,
) -> Result<TrainReport> {
    require_types(pairs)?;
    if model.k() != vocab.k {
        return Err(Error::Config(format!("type model has k={} but vocabulary k={}", model.k(), vocab.k)));
    }
    train_loop(
        model,
        pairs.len(),
        cfg,
        |m, i, aug, grads| {
            let Some(p) = prepare(&pairs[i], aug, Some(vocab))? else {
                return Ok(None);
            };
            let z = p.past_type.expect("types checked");
            let enc = Encoded::new(&p.image, &p.current)?;
            m.loss(&enc, p.past_torso(), z, Some(grads)).map(Some)
        },
        observer,
    )
}

/// PoseNet training with the ground-truth torso and type painted as input.
pub fn train_pose<T: Scalar>(
    model: &mut PoseModel<T>,
    pairs: &[SamplePair<T>],
    vocab: &PoseTypeVocabulary<T>,
    cfg: &TrainConfig,
    observer: impl FnMut(usize, &PoseModel<T>, f64) -> Result<()>,
) -> Result<TrainReport> {
    require_types(pairs)?;
    train_loop(
        model,
        pairs.len(),
        cfg,
        |m, i, aug, grads| {
            let Some(p) = prepare(&pairs[i], aug, Some(vocab))? else {
                return Ok(None);
            };
            let z = p.past_type.expect("types checked");
            let r = p.past_torso();
            let center = vocab.center_pose(z, r)?;
            let enc = Encoded::new(&p.image, &p.current)?;
            m.loss(&enc, r, &center, &p.past, Some(grads)).map(Some)
        },
        observer,
    )
}

/// Direct past-joint heatmap training for the baseline.
pub fn train_heatmap_baseline<T: Scalar>(
    model: &mut HeatmapBaselineModel<T>,
    pairs: &[SamplePair<T>],
    cfg: &TrainConfig,
    observer: impl FnMut(usize, &HeatmapBaselineModel<T>, f64) -> Result<()>,
) -> Result<TrainReport> {
    train_loop(
        model,
        pairs.len(),
        cfg,
        |m, i, aug, grads| {
            let Some(p) = prepare(&pairs[i], aug, None)? else {
                return Ok(None);
            };
            let enc = Encoded::new(&p.image, &p.current)?;
            Ok(Some(m.loss(&enc, &p.past, Some(grads))))
        },
        observer,
    )
}

/// No-op observer.
pub fn ignore_checkpoints<M>(_: usize, _: &M, _: f64) -> Result<()> {
    Ok(())
}

