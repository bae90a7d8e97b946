use std::collections::HashMap;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SamplePair;
use crate::error::{Error, Result};
use crate::frame::ThermalFrame;
use crate::heatmap::{cell_center, decode_argmax, output_cell_index, sample_index, HeatmapGrid, GRID_H, GRID_W};
use crate::models::{clamped_neg_log, Encoded, GoalModel, Module, PoseModel, TypeModel};
use crate::pose::{compose_pose, Point, Pose};
use crate::scalar::Scalar;
use crate::skeleton::{limb_joints, LIMB_JOINTS};
use crate::vocab::PoseTypeVocabulary;

/// Hypotheses drawn per observation.
pub const DEFAULT_M: usize = 30;
/// Pose types kept when sampling from TypeNet.
pub const DEFAULT_TOPK: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub m: usize,
    pub topk: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            m: DEFAULT_M,
            topk: DEFAULT_TOPK,
            seed: 0,
        }
    }
}

impl InferenceConfig {
    /// Same settings with the per-sample seed `seed ^ index`.
    pub fn for_sample(&self, index: usize) -> Self {
        InferenceConfig {
            seed: self.seed ^ index as u64,
            ..*self
        }
    }
}

/// The three trained stages and the vocabulary they share.
pub struct PastPoseModels<T> {
    pub goal: GoalModel<T>,
    pub type_model: TypeModel<T>,
    pub pose: PoseModel<T>,
    pub vocab: PoseTypeVocabulary<T>,
}

impl<T: Scalar> PastPoseModels<T> {
    pub fn new(
        goal: GoalModel<T>,
        type_model: TypeModel<T>,
        pose: PoseModel<T>,
        vocab: PoseTypeVocabulary<T>,
    ) -> Result<Self> {
        if type_model.k() != vocab.k {
            return Err(Error::Config(format!(
                "type model has k={} but vocabulary k={}",
                type_model.k(),
                vocab.k
            )));
        }
        Ok(PastPoseModels {
            goal,
            type_model,
            pose,
            vocab,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Hypothesis<T> {
    pub pose: Pose<T>,
    pub r: Point<T>,
    pub z: usize,
    /// `ln P(r)` of the sampled goal cell.
    pub logp_r: f64,
    /// `ln P(z | r)` under the full type distribution (before top-k truncation).
    pub logp_z: f64,
    /// `ln P(q_j | r, z)` at each decoded joint cell.
    pub logp_joints: [f64; LIMB_JOINTS],
}

impl<T> Hypothesis<T> {
    pub fn log_prob(&self) -> f64 {
        self.logp_r + self.logp_z + self.logp_joints.iter().sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct InferenceResult<T> {
    pub hypotheses: Vec<Hypothesis<T>>,
    pub m: usize,
    pub topk: usize,
    pub seed: u64,
}

impl<T: Scalar> InferenceResult<T> {
    pub fn poses(&self) -> Vec<Pose<T>> {
        self.hypotheses.iter().map(|h| h.pose.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::data(format!("cannot serialize inference result: {e}")))
    }
}

fn ln<T: Scalar>(p: T) -> f64 {
    -clamped_neg_log(p.as_f64())
}

/// Class indices of the `k` largest probabilities, ties to the lower index.
pub fn top_k_classes<T: Scalar>(probs: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k.min(probs.len()));
    idx
}

fn goal_distribution<T: Scalar>(goal: &GoalModel<T>, enc: &Encoded<T>) -> HeatmapGrid<T> {
    let g = goal.forward_encoded(enc);
    let total: f64 = g.values.iter().map(|v| v.as_f64()).sum();
    if !(total.is_finite() && total > 0.0) {
        warn!("goal map has no mass; falling back to a uniform distribution");
        return HeatmapGrid::uniform(1, GRID_H, GRID_W);
    }
    g
}

/// Draw `m` past poses: torso cells from GoalNet, types from the renormalized
/// top-k of TypeNet, joints by per-channel argmax of PoseNet.
pub fn infer_past<T: Scalar>(
    models: &PastPoseModels<T>,
    image: &ThermalFrame<T>,
    current: &Pose<T>,
    cfg: &InferenceConfig,
) -> Result<InferenceResult<T>> {
    if cfg.m == 0 {
        return Err(Error::param("number of hypotheses must be positive"));
    }
    if cfg.topk == 0 {
        return Err(Error::param("top-k must be positive"));
    }
    let enc = Encoded::new(image, current)?;
    let goal = goal_distribution(&models.goal, &enc);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut type_cache: HashMap<usize, Vec<T>> = HashMap::new();
    let mut pose_cache: HashMap<(usize, usize), (Vec<Point<T>>, [f64; LIMB_JOINTS])> = HashMap::new();
    let mut hypotheses = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let cell = sample_index(goal.channel(0), &mut rng)?;
        let r = cell_center(GRID_H, cell / GRID_W, cell % GRID_W);
        let logp_r = ln(goal.values[cell]);

        let probs = match type_cache.get(&cell) {
            Some(p) => p,
            None => {
                let p = models.type_model.forward_encoded(&enc, r)?;
                type_cache.entry(cell).or_insert(p)
            }
        };
        let support = top_k_classes(probs, cfg.topk);
        let weights: Vec<T> = support.iter().map(|&z| probs[z]).collect();
        let z = match sample_index(&weights, &mut rng) {
            Ok(i) => support[i],
            Err(_) => {
                warn!("type distribution has no mass on its top classes; taking the first");
                support[0]
            }
        };
        let logp_z = ln(probs[z]);

        let (limbs, logp_joints) = match pose_cache.get(&(cell, z)) {
            Some(v) => v.clone(),
            None => {
                let center = models.vocab.center_pose(z, r)?;
                let maps = models.pose.forward_encoded(&enc, r, &center)?;
                let decoded = decode_argmax(&maps)?;
                let mut logp = [0.0; LIMB_JOINTS];
                for (c, d) in decoded.iter().enumerate() {
                    logp[c] = ln(maps.channel(c)[d.cell.0 * maps.width + d.cell.1]);
                }
                let limbs: Vec<Point<T>> = decoded.iter().map(|d| d.point).collect();
                pose_cache.insert((cell, z), (limbs.clone(), logp));
                (limbs, logp)
            }
        };
        let pose = compose_pose(&limbs, r)?;
        hypotheses.push(Hypothesis {
            pose,
            r,
            z,
            logp_r,
            logp_z,
            logp_joints,
        });
    }
    Ok(InferenceResult {
        hypotheses,
        m: cfg.m,
        topk: cfg.topk,
        seed: cfg.seed,
    })
}

/// Negative log-likelihood of the true past pose under the teacher-forced chain
/// `P(r̂) · P(ẑ | r̂) · ∏ P(q̂_j | r̂, ẑ)`, read at the 72×96 cells of the true coordinates.
pub fn nll_ground_truth<T: Scalar>(models: &PastPoseModels<T>, pair: &SamplePair<T>) -> Result<f64> {
    let z = pair
        .past_type
        .ok_or_else(|| Error::data(format!("{}:{} has no pose type", pair.clip_id, pair.frame_index)))?;
    if !pair.past_pose.all_valid() || !pair.current_pose.all_valid() {
        return Err(Error::data(format!("{}:{} has invalid joints", pair.clip_id, pair.frame_index)));
    }
    if z >= models.vocab.k {
        return Err(Error::param(format!("pose type {z} out of range")));
    }
    let enc = Encoded::new(&pair.image, &pair.current_pose)?;
    let r = pair.past_pose.torso();
    let goal = goal_distribution(&models.goal, &enc);
    let mut nll = clamped_neg_log(goal.values[output_cell_index(r)].as_f64());
    let types = models.type_model.forward_encoded(&enc, r)?;
    nll += clamped_neg_log(types[z].as_f64());
    let center = models.vocab.center_pose(z, r)?;
    let maps = models.pose.forward_encoded(&enc, r, &center)?;
    for (c, j) in limb_joints().enumerate() {
        nll += clamped_neg_log(maps.channel(c)[output_cell_index(pair.past_pose.joints[j])].as_f64());
    }
    Ok(nll)
}

/// Set every parameter of a module to zero, which makes its output distributions uniform.
pub fn zero_parameters<T: Scalar, M: Module<T>>(model: &mut M) {
    let params = model.params_mut();
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        params.get_mut(id).iter_mut().for_each(|v| *v = T::zero());
    }
}
