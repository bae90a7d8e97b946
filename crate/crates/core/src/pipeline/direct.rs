use crate::dataset::SamplePair;
use crate::error::{Error, Result};
use crate::frame::ThermalFrame;
use crate::heatmap::{output_cell_index, HeatmapGrid};
use crate::models::{clamped_neg_log, HeatmapBaselineModel};
use crate::pose::Pose;
use crate::scalar::Scalar;
use crate::skeleton::JOINTS;

/// Keep one training pose out of this many as a candidate.
pub const CANDIDATE_STRIDE: usize = 200;

/// Every `stride`-th past pose of the training pairs, in pair order.
pub fn baseline_candidates<T: Scalar>(pairs: &[SamplePair<T>], stride: usize) -> Result<Vec<Pose<T>>> {
    if stride == 0 {
        return Err(Error::param("stride must be positive"));
    }
    Ok(pairs.iter().step_by(stride).map(|p| p.past_pose.clone()).collect())
}

/// Summed per-joint log-probability of `pose` at its absolute cells.
pub fn score_candidate<T: Scalar>(maps: &HeatmapGrid<T>, pose: &Pose<T>) -> f64 {
    (0..JOINTS)
        .map(|j| -clamped_neg_log(maps.channel(j)[output_cell_index(pose.joints[j])].as_f64()))
        .sum()
}

/// Indices of the `m` best-scoring candidates under `maps`, best first; ties go to the lower index.
pub fn rank_candidates<T: Scalar>(maps: &HeatmapGrid<T>, candidates: &[Pose<T>], m: usize) -> Result<Vec<(usize, f64)>> {
    if maps.channels != JOINTS {
        return Err(Error::shape(format!("expected {JOINTS} joint maps, got {}", maps.channels)));
    }
    if m == 0 {
        return Err(Error::param("number of poses must be positive"));
    }
    if candidates.len() < m {
        return Err(Error::data(format!("{} candidates, fewer than the {m} requested", candidates.len())));
    }
    let mut scored: Vec<(usize, f64)> = candidates.iter().enumerate().map(|(i, c)| (i, score_candidate(maps, c))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(m);
    Ok(scored)
}

/// The `m` candidate poses most likely under the direct per-joint maps.
pub fn heatmap_baseline<T: Scalar>(
    model: &HeatmapBaselineModel<T>,
    candidates: &[Pose<T>],
    image: &ThermalFrame<T>,
    current: &Pose<T>,
    m: usize,
) -> Result<Vec<Pose<T>>> {
    let maps = model.forward(image, current)?;
    Ok(rank_candidates(&maps, candidates, m)?
        .into_iter()
        .map(|(i, _)| candidates[i].clone())
        .collect())
}
