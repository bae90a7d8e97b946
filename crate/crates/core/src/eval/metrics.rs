use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::semantic::SemanticClassifier;
use crate::dataset::SamplePair;
use crate::error::{Error, Result};
use crate::pipeline::{InferenceConfig, PastPredictor};
use crate::pose::{mpjpe, topk_mean};
use crate::scalar::Scalar;

/// Top-k cut-offs reported for MPJPE.
pub const TOPK_LEVELS: [usize; 3] = [1, 3, 5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub clip_id: String,
    pub frame_index: usize,
    pub top1: f64,
    pub top3: f64,
    pub top5: f64,
    pub nll: Option<f64>,
    /// Percentage of this sample's hypotheses the classifier accepted.
    pub semantic: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub n_samples: usize,
    pub skipped: usize,
    pub mpjpe_top1: f64,
    pub mpjpe_top3: f64,
    pub mpjpe_top5: f64,
    pub nll: Option<f64>,
    pub semantic_score: Option<f64>,
    pub m: usize,
    pub seed: u64,
    pub config_hash: String,
    pub note: Option<String>,
    pub records: Vec<SampleRecord>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricsReport {
    /// Recompute the aggregate fields from `records`.
    pub fn from_records(method: &str, records: Vec<SampleRecord>, skipped: usize, m: usize, seed: u64, config_hash: &str) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::data("no evaluated samples"));
        }
        let all = |f: fn(&SampleRecord) -> Option<f64>| -> Option<f64> {
            let vals: Option<Vec<f64>> = records.iter().map(f).collect();
            vals.and_then(|v| mean(v.into_iter()))
        };
        Ok(MetricsReport {
            method: method.to_string(),
            n_samples: records.len(),
            skipped,
            mpjpe_top1: mean(records.iter().map(|r| r.top1)).expect("non-empty"),
            mpjpe_top3: mean(records.iter().map(|r| r.top3)).expect("non-empty"),
            mpjpe_top5: mean(records.iter().map(|r| r.top5)).expect("non-empty"),
            nll: all(|r| r.nll),
            semantic_score: all(|r| r.semantic),
            m,
            seed,
            config_hash: config_hash.to_string(),
            note: None,
            records,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::data(format!("cannot serialize report: {e}")))
    }

    /// One row per sample.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::data(e.to_string()))
    }

    /// Writes `<base>.json` and `<base>.csv`.
    pub fn save(&self, base: &Path) -> Result<()> {
        let json = base.with_extension("json");
        let csv = base.with_extension("csv");
        std::fs::write(&json, self.to_json()?).map_err(Error::io(&json))?;
        std::fs::write(&csv, self.to_csv()?).map_err(Error::io(&csv))
    }
}

/// Score one method on every test pair.
///
/// Sample `i` uses the seed `cfg.seed ^ i`. Failing samples are counted and
/// skipped; more than 1% skipped is an error.
pub fn evaluate<T: Scalar, P: PastPredictor<T> + ?Sized>(
    method: &P,
    test_pairs: &[SamplePair<T>],
    cfg: &InferenceConfig,
    semantic: Option<&SemanticClassifier<T>>,
    config_hash: &str,
) -> Result<MetricsReport> {
    if test_pairs.is_empty() {
        return Err(Error::data("empty test set"));
    }
    let kmax = *TOPK_LEVELS.iter().max().expect("non-empty");
    if cfg.m < kmax {
        return Err(Error::param(format!("need at least {kmax} hypotheses, got {}", cfg.m)));
    }
    let mut records = Vec::with_capacity(test_pairs.len());
    let mut skipped = 0usize;
    for (i, pair) in test_pairs.iter().enumerate() {
        match evaluate_one(method, pair, &cfg.for_sample(i), semantic) {
            Ok(r) => records.push(r),
            Err(e) => {
                warn!("{} on {}:{} skipped: {e}", method.name(), pair.clip_id, pair.frame_index);
                skipped += 1;
            }
        }
    }
    if skipped * 100 > test_pairs.len() {
        return Err(Error::TooManySkipped {
            skipped,
            total: test_pairs.len(),
        });
    }
    MetricsReport::from_records(method.name(), records, skipped, cfg.m, cfg.seed, config_hash)
}

fn evaluate_one<T: Scalar, P: PastPredictor<T> + ?Sized>(
    method: &P,
    pair: &SamplePair<T>,
    cfg: &InferenceConfig,
    semantic: Option<&SemanticClassifier<T>>,
) -> Result<SampleRecord> {
    let pred = method.predict(pair, cfg)?;
    if pred.poses.len() != cfg.m {
        return Err(Error::Model(format!("{} returned {} poses, expected {}", method.name(), pred.poses.len(), cfg.m)));
    }
    let errors: Vec<f64> = pred
        .poses
        .iter()
        .map(|p| mpjpe(p, &pair.past_pose).map(|e| e.as_f64()))
        .collect::<Result<_>>()?;
    let semantic = match semantic {
        Some(c) => Some(super::semantic::semantic_score(c, &[(&*pair.image, &pred.poses[..])])?),
        None => None,
    };
    Ok(SampleRecord {
        clip_id: pair.clip_id.to_string(),
        frame_index: pair.frame_index,
        top1: topk_mean(&errors, 1)?,
        top3: topk_mean(&errors, 3)?,
        top5: topk_mean(&errors, 5)?,
        nll: pred.nll,
        semantic,
    })
}
