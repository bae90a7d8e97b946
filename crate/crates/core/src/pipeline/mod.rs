//! Sampling past poses from the trained stages, likelihood scoring, and the two baselines.

mod direct;
mod infer;
mod knn;

pub use direct::{baseline_candidates, heatmap_baseline, rank_candidates, score_candidate, CANDIDATE_STRIDE};
pub use infer::{
    infer_past, nll_ground_truth, top_k_classes, zero_parameters, Hypothesis, InferenceConfig, InferenceResult,
    PastPoseModels, DEFAULT_M, DEFAULT_TOPK,
};
pub use knn::{knn_baseline_build, KnnEntry, KnnPool, KNN_STRIDE};

use crate::dataset::SamplePair;
use crate::error::Result;
use crate::models::HeatmapBaselineModel;
use crate::pose::Pose;
use crate::scalar::Scalar;

/// What a method produces for one test pair.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub poses: Vec<Pose<T>>,
    /// Ground-truth negative log-likelihood, for methods that define one.
    pub nll: Option<f64>,
    pub result: Option<InferenceResult<T>>,
}

/// A method that proposes `cfg.m` past poses for a sample.
pub trait PastPredictor<T: Scalar> {
    fn name(&self) -> &str;
    fn predict(&self, pair: &SamplePair<T>, cfg: &InferenceConfig) -> Result<Prediction<T>>;
}

impl<T: Scalar> PastPredictor<T> for PastPoseModels<T> {
    fn name(&self) -> &str {
        "ours"
    }

    fn predict(&self, pair: &SamplePair<T>, cfg: &InferenceConfig) -> Result<Prediction<T>> {
        let result = infer_past(self, &pair.image, &pair.current_pose, cfg)?;
        let nll = match pair.past_type {
            Some(_) => Some(nll_ground_truth(self, pair)?),
            None => None,
        };
        Ok(Prediction {
            poses: result.poses(),
            nll,
            result: Some(result),
        })
    }
}

impl<T: Scalar> PastPredictor<T> for KnnPool<T> {
    fn name(&self) -> &str {
        "knn"
    }

    fn predict(&self, pair: &SamplePair<T>, cfg: &InferenceConfig) -> Result<Prediction<T>> {
        Ok(Prediction {
            poses: self.query(&pair.current_pose, cfg.m)?,
            nll: None,
            result: None,
        })
    }
}

/// Direct heatmap model plus its candidate pool.
pub struct HeatmapBaseline<T> {
    pub model: HeatmapBaselineModel<T>,
    pub candidates: Vec<Pose<T>>,
}

impl<T: Scalar> PastPredictor<T> for HeatmapBaseline<T> {
    fn name(&self) -> &str {
        "heatmap-baseline"
    }

    fn predict(&self, pair: &SamplePair<T>, cfg: &InferenceConfig) -> Result<Prediction<T>> {
        Ok(Prediction {
            poses: heatmap_baseline(&self.model, &self.candidates, &pair.image, &pair.current_pose, cfg.m)?,
            nll: None,
            result: None,
        })
    }
}

/// Returns the true past pose `m` times. Used to check evaluation wiring.
pub struct OraclePredictor;

impl<T: Scalar> PastPredictor<T> for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, pair: &SamplePair<T>, cfg: &InferenceConfig) -> Result<Prediction<T>> {
        Ok(Prediction {
            poses: vec![pair.past_pose.clone(); cfg.m],
            nll: None,
            result: None,
        })
    }
}
