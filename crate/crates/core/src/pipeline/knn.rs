use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{pairs_by_clip, SamplePair};
use crate::error::{Error, Result};
use crate::pose::{Point, Pose};
use crate::scalar::Scalar;
use crate::skeleton::JOINTS;
use crate::vocab::{pose_to_vector, POSE_DIM};

/// Keep one training pair out of this many per clip.
pub const KNN_STRIDE: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct KnnEntry<T> {
    pub current: Pose<T>,
    pub past: Pose<T>,
    /// Torso-aligned current pose.
    pub key: [T; POSE_DIM],
    pub clip_id: String,
    pub frame_index: usize,
}

/// Retrieval pool of (current pose, past pose) examples.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnPool<T> {
    pub stride: usize,
    pub entries: Vec<KnnEntry<T>>,
}

#[derive(Serialize, Deserialize)]
struct PoolManifest {
    stride: usize,
    count: usize,
    /// `(clip_id, frame_index)` per entry, in payload order.
    sources: Vec<(String, usize)>,
    payload: String,
}

/// Every `stride`-th pair of each clip (by frame order), clip streams in id order.
pub fn knn_baseline_build<T: Scalar>(pairs: &[SamplePair<T>], stride: usize) -> Result<KnnPool<T>> {
    if stride == 0 {
        return Err(Error::param("stride must be positive"));
    }
    let mut entries = Vec::new();
    for (_, mut idx) in pairs_by_clip(pairs) {
        idx.sort_by_key(|&i| pairs[i].frame_index);
        for &i in idx.iter().step_by(stride) {
            let p = &pairs[i];
            entries.push(KnnEntry {
                key: pose_to_vector(&p.current_pose)?,
                current: p.current_pose.clone(),
                past: p.past_pose.clone(),
                clip_id: p.clip_id.to_string(),
                frame_index: p.frame_index,
            });
        }
    }
    Ok(KnnPool { stride, entries })
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).as_f64();
            d * d
        })
        .sum()
}

impl<T: Scalar> KnnPool<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry indices of the `m` nearest keys, closest first; ties go to the lower index.
    pub fn nearest(&self, query: &Pose<T>, m: usize) -> Result<Vec<usize>> {
        if m == 0 {
            return Err(Error::param("number of neighbours must be positive"));
        }
        if self.entries.len() < m {
            return Err(Error::data(format!(
                "pool holds {} entries, fewer than the {m} requested",
                self.entries.len()
            )));
        }
        let q = pose_to_vector(query)?;
        let mut d: Vec<(f64, usize)> = self.entries.iter().enumerate().map(|(i, e)| (sq_dist(&q, &e.key), i)).collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if m < d.len() {
            d.select_nth_unstable_by(m - 1, cmp);
            d.truncate(m);
        }
        d.sort_by(cmp);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }

    /// Past poses of the `m` nearest entries, each moved by the offset between
    /// the query torso and the neighbour's current torso.
    pub fn query(&self, query: &Pose<T>, m: usize) -> Result<Vec<Pose<T>>> {
        let r = query.torso();
        Ok(self
            .nearest(query, m)?
            .into_iter()
            .map(|i| {
                let e = &self.entries[i];
                e.past.translated(r - e.current.torso())
            })
            .collect())
    }

    /// Writes `<base>.json` (manifest) and `<base>.bin` (little-endian `f64` joints).
    pub fn save(&self, base: &Path) -> Result<()> {
        let bin = base.with_extension("bin");
        let json = base.with_extension("json");
        let mut buf = Vec::with_capacity(self.entries.len() * 4 * JOINTS * 8);
        for e in &self.entries {
            for pose in [&e.current, &e.past] {
                for p in &pose.joints {
                    buf.extend_from_slice(&p.x.as_f64().to_le_bytes());
                    buf.extend_from_slice(&p.y.as_f64().to_le_bytes());
                }
            }
        }
        std::fs::write(&bin, buf).map_err(Error::io(&bin))?;
        let manifest = PoolManifest {
            stride: self.stride,
            count: self.entries.len(),
            sources: self.entries.iter().map(|e| (e.clip_id.clone(), e.frame_index)).collect(),
            payload: bin.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        let s = serde_json::to_string_pretty(&manifest).map_err(Error::json(&json))?;
        std::fs::write(&json, s).map_err(Error::io(&json))
    }

    pub fn load(base: &Path) -> Result<Self> {
        let json = base.with_extension("json");
        let s = std::fs::read_to_string(&json).map_err(Error::io(&json))?;
        let manifest: PoolManifest = serde_json::from_str(&s).map_err(Error::json(&json))?;
        let bin = json.with_file_name(&manifest.payload);
        let raw = std::fs::read(&bin).map_err(Error::io(&bin))?;
        let per_entry = 4 * JOINTS * 8;
        if manifest.sources.len() != manifest.count || raw.len() != manifest.count * per_entry {
            return Err(Error::data("pool payload does not match its manifest"));
        }
        let mut values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
        let mut read_pose = || -> Result<Pose<T>> {
            let mut joints = [Point::origin(); JOINTS];
            for p in joints.iter_mut() {
                let x = values.next().expect("length checked");
                let y = values.next().expect("length checked");
                *p = Point::new(T::lit(x), T::lit(y));
            }
            Pose::unclamped(joints, [true; JOINTS])
        };
        let mut entries = Vec::with_capacity(manifest.count);
        for (clip_id, frame_index) in manifest.sources {
            let current = read_pose()?;
            let past = read_pose()?;
            entries.push(KnnEntry {
                key: pose_to_vector(&current)?,
                current,
                past,
                clip_id,
                frame_index,
            });
        }
        Ok(KnnPool {
            stride: manifest.stride,
            entries,
        })
    }
}
