use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clip::ClipRecord;
use crate::error::{Error, Result};
use crate::frame::ThermalFrame;
use crate::pose::{Point, Pose};
use crate::scalar::Scalar;
use crate::skeleton::JOINTS;

/// Default look-back in frames (3 s at 15 fps).
pub const PAST_OFFSET: usize = 45;
/// Minimum mean joint displacement over the look-back window, in pixels.
pub const MOTION_THRESHOLD: f64 = 45.0;

/// One supervised instance: the frame at `t`, the pose at `t` and the pose `offset` frames earlier.
#[derive(Clone, Debug)]
pub struct SamplePair<T> {
    pub image: Arc<ThermalFrame<T>>,
    pub current_pose: Pose<T>,
    pub past_pose: Pose<T>,
    pub past_torso: Point<T>,
    pub past_type: Option<usize>,
    pub clip_id: Arc<str>,
    pub frame_index: usize,
}

impl<T: Scalar> SamplePair<T> {
    pub fn new(
        image: Arc<ThermalFrame<T>>,
        current_pose: Pose<T>,
        past_pose: Pose<T>,
        clip_id: Arc<str>,
        frame_index: usize,
        offset: usize,
    ) -> Result<Self> {
        if frame_index < offset {
            return Err(Error::data(format!("frame {frame_index} has no pose {offset} frames earlier")));
        }
        if !current_pose.all_valid() || !past_pose.all_valid() {
            return Err(Error::data(format!("{clip_id} frame {frame_index}: pose has invalid joints")));
        }
        Ok(SamplePair {
            image,
            past_torso: past_pose.torso(),
            current_pose,
            past_pose,
            past_type: None,
            clip_id,
            frame_index,
        })
    }
}

/// Mean displacement over joints valid at both `a` and `b`; `None` if no joint is.
pub fn mean_displacement<T: Scalar>(a: &Pose<T>, b: &Pose<T>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for j in 0..JOINTS {
        if a.valid[j] && b.valid[j] {
            sum += a.joints[j].distance(b.joints[j]).as_f64();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Frames whose pose moved at least `threshold` px on average since `window_s` seconds earlier.
pub fn motion_filter<T: Scalar>(clip: &ClipRecord<T>, window_s: f64, threshold: f64) -> Vec<usize> {
    let window = clip.frames_for(window_s);
    if window == 0 || clip.len() <= window {
        return Vec::new();
    }
    (window..clip.len())
        .filter(|&t| {
            mean_displacement(&clip.poses[t], &clip.poses[t - window]).is_some_and(|d| d >= threshold)
        })
        .collect()
}

/// Pairs at `t = offset, offset + stride, ...`; frames with incomplete poses are skipped.
pub fn make_pairs<T: Scalar>(clip: &ClipRecord<T>, offset: usize, stride: usize) -> Vec<SamplePair<T>> {
    pairs_at(clip, offset, (offset..clip.len()).step_by(stride.max(1)))
}

/// Like [`make_pairs`], keeping only candidates that pass [`motion_filter`] over the same offset.
pub fn make_filtered_pairs<T: Scalar>(
    clip: &ClipRecord<T>,
    offset: usize,
    stride: usize,
    threshold: f64,
) -> Vec<SamplePair<T>> {
    let keep: Vec<usize> = (offset..clip.len())
        .step_by(stride.max(1))
        .filter(|&t| {
            mean_displacement(&clip.poses[t], &clip.poses[t - offset]).is_some_and(|d| d >= threshold)
        })
        .collect();
    pairs_at(clip, offset, keep)
}

fn pairs_at<T: Scalar>(
    clip: &ClipRecord<T>,
    offset: usize,
    indices: impl IntoIterator<Item = usize>,
) -> Vec<SamplePair<T>> {
    let id: Arc<str> = Arc::from(clip.clip_id.as_str());
    indices
        .into_iter()
        .filter_map(|t| {
            SamplePair::new(
                clip.frames[t].clone(),
                clip.poses[t].clone(),
                clip.poses[t - offset].clone(),
                id.clone(),
                t,
                offset,
            )
            .ok()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl SplitManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self).map_err(Error::json(path))?;
        std::fs::write(path, bytes).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(Error::io(path))?;
        serde_json::from_slice(&bytes).map_err(Error::json(path))
    }

    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

/// Shuffle clip ids by seed and cut contiguous train/val/test blocks.
pub fn split_by_clip(clip_ids: &[String], ratios: [f64; 3], seed: u64) -> Result<SplitManifest> {
    if clip_ids.len() < 3 {
        return Err(Error::param(format!("need at least 3 clips to split, got {}", clip_ids.len())));
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut ids = clip_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != clip_ids.len() {
        return Err(Error::param("duplicate clip ids"));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = ids.len();
    let mut counts = ratios.map(|r| (r * n as f64).round() as usize);
    // Rounding can over- or under-shoot; the largest block absorbs the difference.
    let largest = (0..3).max_by(|&a, &b| ratios[a].total_cmp(&ratios[b])).unwrap();
    let others: usize = (0..3).filter(|&i| i != largest).map(|i| counts[i]).sum();
    counts[largest] = n.saturating_sub(others);
    for i in 0..3 {
        if counts[i] == 0 && ratios[i] > 0.0 && counts[largest] > 1 {
            counts[i] = 1;
            counts[largest] -= 1;
        }
    }
    let val_end = counts[0] + counts[1];
    Ok(SplitManifest {
        train: ids[..counts[0]].to_vec(),
        val: ids[counts[0]..val_end].to_vec(),
        test: ids[val_end..].to_vec(),
        seed,
        ratios,
    })
}

/// 3D pose with per-joint validity, in some camera or world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose3D<T> {
    pub joints: [[T; 3]; JOINTS],
    pub valid: [bool; JOINTS],
}

/// Rigid camera-to-world transform: `X_world = R · X_cam + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrinsics<T> {
    pub rotation: [[T; 3]; 3],
    pub translation: [T; 3],
}

impl<T: Scalar> Extrinsics<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Extrinsics {
            rotation: [[o, z, z], [z, o, z], [z, z, o]],
            translation: [z; 3],
        }
    }

    fn rotate(&self, p: [T; 3]) -> [T; 3] {
        let r = &self.rotation;
        [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2])
    }
}

/// Least-squares relative scale between two monocular 3D estimates of the same pose.
///
/// Camera 1 is the metric reference (`a = 1`); `b` minimizes
/// `Σ_j ‖R1 p_j + t1 − (b · R2 q_j + t2)‖²` over joints valid in both.
pub fn triangulate_scales<T: Scalar>(
    p_cam1: &Pose3D<T>,
    q_cam2: &Pose3D<T>,
    cam1: &Extrinsics<T>,
    cam2: &Extrinsics<T>,
) -> Result<(T, T)> {
    for (name, pose) in [("first", p_cam1), ("second", q_cam2)] {
        let n = pose.valid.iter().filter(|&&v| v).count();
        if n < 3 {
            return Err(Error::param(format!("{name} pose has {n} valid joints, need 3")));
        }
    }
    let mut pq = T::zero();
    let mut qq = T::zero();
    for j in 0..JOINTS {
        if !(p_cam1.valid[j] && q_cam2.valid[j]) {
            continue;
        }
        let p = cam1.rotate(p_cam1.joints[j]);
        let q = cam2.rotate(q_cam2.joints[j]);
        for d in 0..3 {
            let target = p[d] + cam1.translation[d] - cam2.translation[d];
            pq += target * q[d];
            qq += q[d] * q[d];
        }
    }
    if qq == T::zero() {
        return Err(Error::Degenerate("second pose has zero norm in the shared frame".into()));
    }
    Ok((T::one(), pq / qq))
}

/// Pinhole intrinsics of the source camera, with its native resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

/// Project to the camera's image plane and rescale to the thermal frame size.
/// Joints with non-positive depth, or that land outside the frame, come back invalid.
pub fn project_to_image<T: Scalar>(pose: &Pose3D<T>, k: &Intrinsics) -> Result<Pose<T>> {
    use crate::pose::{IMAGE_H, IMAGE_W};
    let sx = IMAGE_W as f64 / k.width;
    let sy = IMAGE_H as f64 / k.height;
    let mut joints = [Point::origin(); JOINTS];
    let mut valid = [false; JOINTS];
    for j in 0..JOINTS {
        let [x, y, z] = pose.joints[j].map(|v| v.as_f64());
        if !pose.valid[j] || !(z > 0.0) {
            continue;
        }
        let p = Point::new(T::lit((k.fx * x / z + k.cx) * sx), T::lit((k.fy * y / z + k.cy) * sy));
        if p.is_finite() && p.in_image() {
            joints[j] = p;
            valid[j] = true;
        }
    }
    Pose::new(joints, valid)
}

/// Group pairs by clip, preserving order.
pub fn pairs_by_clip<T: Scalar>(pairs: &[SamplePair<T>]) -> BTreeMap<Arc<str>, Vec<usize>> {
    let mut out: BTreeMap<Arc<str>, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        out.entry(p.clip_id.clone()).or_default().push(i);
    }
    out
}
