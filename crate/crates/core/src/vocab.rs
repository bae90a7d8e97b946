//! Pose-type vocabulary: K-means over torso-aligned poses.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::sample_index;
use crate::pose::{Point, Pose};
use crate::scalar::Scalar;
use crate::skeleton::{limb_joints, LIMB_JOINTS, TORSO};

/// Length of a torso-aligned pose vector.
pub const POSE_DIM: usize = 2 * LIMB_JOINTS;

const MAX_ITERATIONS: usize = 100;
const REL_TOLERANCE: f64 = 1e-6;

/// Non-torso joints relative to the torso, flattened as `x0, y0, x1, y1, …`.
pub fn pose_to_vector<T: Scalar>(p: &Pose<T>) -> Result<[T; POSE_DIM]> {
    if !p.valid[TORSO] {
        return Err(Error::param("torso joint is not valid"));
    }
    let r = p.torso();
    let mut v = [T::zero(); POSE_DIM];
    for (i, j) in limb_joints().enumerate() {
        let d = p.joints[j] - r;
        v[2 * i] = d.x;
        v[2 * i + 1] = d.y;
    }
    Ok(v)
}

/// Place a torso-relative vector at torso position `r`.
pub fn vector_to_pose<T: Scalar>(v: &[T], r: Point<T>) -> Result<Pose<T>> {
    if v.len() != POSE_DIM {
        return Err(Error::param(format!("pose vector needs {POSE_DIM} values")));
    }
    let limbs: Vec<Point<T>> = v
        .chunks_exact(2)
        .map(|c| Point::new(c[0] + r.x, c[1] + r.y))
        .collect();
    crate::pose::compose_pose(&limbs, r)
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Index of the nearest center; ties go to the smallest index.
fn nearest<T: Scalar>(v: &[T], centers: &[[T; POSE_DIM]]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct PoseTypeVocabulary<T> {
    pub k: usize,
    pub fit_seed: u64,
    /// Final K-means objective (sum of squared distances).
    pub inertia: T,
    /// `k × 14 × [x, y]` torso-relative offsets.
    pub centers: Vec<[Point<T>; LIMB_JOINTS]>,
    pub member_counts: Vec<usize>,
    /// Objective after each Lloyd iteration.
    #[serde(default)]
    pub inertia_history: Vec<T>,
}

impl<T: Scalar> PoseTypeVocabulary<T> {
    pub fn center_vector(&self, z: usize) -> [T; POSE_DIM] {
        let mut v = [T::zero(); POSE_DIM];
        for (i, p) in self.centers[z].iter().enumerate() {
            v[2 * i] = p.x;
            v[2 * i + 1] = p.y;
        }
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(Error::json(path))?;
        std::fs::write(path, s).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let v: Self = serde_json::from_str(&s).map_err(Error::json(path))?;
        if v.centers.len() != v.k || v.member_counts.len() != v.k {
            return Err(Error::data("vocabulary size fields disagree"));
        }
        Ok(v)
    }

    /// Nearest pose type of a pose.
    pub fn assign(&self, p: &Pose<T>) -> Result<usize> {
        let v = pose_to_vector(p)?;
        Ok(self.assign_vector(&v))
    }

    pub fn assign_vector(&self, v: &[T]) -> usize {
        let mut best = (0, T::infinity());
        for z in 0..self.k {
            let d = sq_dist(v, &self.center_vector(z));
            if d < best.1 {
                best = (z, d);
            }
        }
        best.0
    }

    /// Center pose `z` painted with its torso at `r`.
    pub fn center_pose(&self, z: usize, r: Point<T>) -> Result<Pose<T>> {
        if z >= self.k {
            return Err(Error::param(format!("pose type {z} out of range 0..{}", self.k)));
        }
        vector_to_pose(&self.center_vector(z), r)
    }
}

/// Convenience wrapper matching [`PoseTypeVocabulary::assign`].
pub fn assign_type<T: Scalar>(p: &Pose<T>, vocab: &PoseTypeVocabulary<T>) -> Result<usize> {
    vocab.assign(p)
}

/// Convenience wrapper matching [`PoseTypeVocabulary::center_pose`].
pub fn center_pose<T: Scalar>(vocab: &PoseTypeVocabulary<T>, z: usize, r: Point<T>) -> Result<Pose<T>> {
    vocab.center_pose(z, r)
}

/// Lloyd's K-means with k-means++ seeding and farthest-point repair of empty
/// clusters. Deterministic for a given `(poses, k, seed)`.
pub fn build_vocabulary<T: Scalar>(poses: &[Pose<T>], k: usize, seed: u64) -> Result<PoseTypeVocabulary<T>> {
    if k == 0 {
        return Err(Error::param("k must be positive"));
    }
    if poses.len() < k {
        return Err(Error::param(format!("{} poses cannot form {k} clusters", poses.len())));
    }
    let data = poses.iter().map(pose_to_vector).collect::<Result<Vec<_>>>()?;
    let distinct: HashSet<Vec<u64>> = data
        .iter()
        .map(|v| v.iter().map(|x| x.as_f64().to_bits()).collect())
        .collect();
    if distinct.len() < k {
        return Err(Error::param(format!(
            "only {} distinct poses for {k} clusters",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(&data, k, &mut rng)?;
    let mut assignment = vec![0usize; data.len()];
    let mut history: Vec<T> = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let mut dists = vec![T::zero(); data.len()];
        for (i, v) in data.iter().enumerate() {
            let (c, d) = nearest(v, &centers);
            assignment[i] = c;
            dists[i] = d;
        }
        repair_empty(&mut assignment, &mut dists, &data, k);
        centers = cluster_means(&data, &assignment, k);
        let inertia: T = data
            .iter()
            .zip(&assignment)
            .map(|(v, &c)| sq_dist(v, &centers[c]))
            .sum();
        if let Some(&prev) = history.last() {
            debug_assert!(
                inertia.as_f64() <= prev.as_f64() * (1.0 + 1e-9) + 1e-9,
                "inertia increased: {prev} -> {inertia}"
            );
        }
        history.push(inertia);
        let n = history.len();
        if n >= 2 {
            let (a, b) = (history[n - 2].as_f64(), history[n - 1].as_f64());
            if (a - b).abs() <= REL_TOLERANCE * a.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }

    let mut member_counts = vec![0usize; k];
    for &c in &assignment {
        member_counts[c] += 1;
    }
    let to_points = |v: &[T; POSE_DIM]| -> [Point<T>; LIMB_JOINTS] {
        std::array::from_fn(|i| Point::new(v[2 * i], v[2 * i + 1]))
    };
    Ok(PoseTypeVocabulary {
        k,
        fit_seed: seed,
        inertia: *history.last().expect("at least one iteration"),
        centers: centers.iter().map(to_points).collect(),
        member_counts,
        inertia_history: history,
    })
}

fn seed_centers<T: Scalar, R: Rng>(data: &[[T; POSE_DIM]], k: usize, rng: &mut R) -> Result<Vec<[T; POSE_DIM]>> {
    let mut centers = vec![data[rng.gen_range(0..data.len())]];
    let mut d2: Vec<T> = data.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < k {
        let idx = match sample_index(&d2, rng) {
            Ok(i) => i,
            // Every point coincides with a chosen center.
            Err(_) => rng.gen_range(0..data.len()),
        };
        let c = data[idx];
        for (d, v) in d2.iter_mut().zip(data) {
            let nd = sq_dist(v, &c);
            if nd < *d {
                *d = nd;
            }
        }
        centers.push(c);
    }
    Ok(centers)
}

/// Move the farthest point of a multi-member cluster into each empty cluster.
fn repair_empty<T: Scalar>(assignment: &mut [usize], dists: &mut [T], data: &[[T; POSE_DIM]], k: usize) {
    let mut counts = vec![0usize; k];
    for &c in assignment.iter() {
        counts[c] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut best: Option<usize> = None;
        for i in 0..data.len() {
            if counts[assignment[i]] > 1 && best.map_or(true, |b| dists[i] > dists[b]) {
                best = Some(i);
            }
        }
        let i = best.expect("more points than clusters");
        counts[assignment[i]] -= 1;
        counts[empty] += 1;
        assignment[i] = empty;
        dists[i] = T::zero();
    }
}

fn cluster_means<T: Scalar>(data: &[[T; POSE_DIM]], assignment: &[usize], k: usize) -> Vec<[T; POSE_DIM]> {
    // Accumulate offsets from each cluster's first member so identical members average exactly.
    let mut anchor: Vec<Option<usize>> = vec![None; k];
    let mut sums = vec![[T::zero(); POSE_DIM]; k];
    let mut counts = vec![0usize; k];
    for (i, (v, &c)) in data.iter().zip(assignment).enumerate() {
        let a = *anchor[c].get_or_insert(i);
        counts[c] += 1;
        for ((s, &x), &x0) in sums[c].iter_mut().zip(v).zip(&data[a]) {
            *s += x - x0;
        }
    }
    for c in 0..k {
        let n = T::lit(counts[c].max(1) as f64);
        if let Some(a) = anchor[c] {
            for (s, &x0) in sums[c].iter_mut().zip(&data[a]) {
                *s = x0 + *s / n;
            }
        }
    }
    sums
}
